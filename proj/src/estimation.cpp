#include "rfanova/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>

namespace rfanova {

std::string to_string(Method m) {
  switch (m) {
    case Method::kTP:
      return "tp";
    case Method::kGP:
      return "gp";
    case Method::kTPNoRandomEffect:
      return "tp0";
  }
  return "tp";
}

Method method_from_string(const std::string& s) {
  if (s == "tp") return Method::kTP;
  if (s == "gp") return Method::kGP;
  if (s == "tp0" || s == "tp-tau0") return Method::kTPNoRandomEffect;
  throw std::invalid_argument("unknown method '" + s + "' (expected tp, gp or tp0)");
}

void FitConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  for (double l : lambda_grid) {
    if (!(l >= 0.0)) throw std::invalid_argument("lambda grid entries must be >= 0");
  }
  if (!(mode.tol > 0.0) || mode.max_iter < 1) throw std::invalid_argument("mode tolerances must be > 0");
  if (!(outer_tol > 0.0) || outer_max < 1) throw std::invalid_argument("outer tolerances must be > 0");
  if (!(nu > 1.0)) throw std::invalid_argument("nu must be > 1");
  if (basis.order < 2) throw std::invalid_argument("basis order must be >= 2");
  if (lbfgs_memory < 1) throw std::invalid_argument("lbfgs memory must be >= 1");
  if (domain && !(domain->first < domain->second)) throw std::invalid_argument("empty basis domain");
}

namespace {

BSplineBasis make_basis(const FunctionalDataset& data, const FitConfig& config) {
  long longest = 0;
  for (const auto& c : data.curves()) longest = std::max<long>(longest, static_cast<long>(c.size()));
  double lo = data.min_time();
  double hi = data.max_time();
  if (config.domain) {
    lo = config.domain->first;
    hi = config.domain->second;
  }
  if (!(lo < hi)) throw FitError("time range of the data is empty; set an explicit basis domain");
  return BSplineBasis::uniform(config.basis.order, config.basis.resolve_num_basis(longest), lo, hi);
}

}  // namespace

Problem::Problem(FunctionalDataset data, const FitConfig& config)
    : Problem(data, config, make_basis(data, config)) {}

Problem::Problem(FunctionalDataset data, const FitConfig& config, BSplineBasis basis)
    : data_(std::move(data)), config_(config), basis_(std::move(basis)) {
  config_.validate();
  penalty_ = penalty_matrix(basis_, config_.basis.op);
  designs_.reserve(data_.num_curves());
  for (const auto& c : data_.curves()) designs_.push_back(basis_.design(c.times));
}

Likelihood Problem::likelihood() const {
  return config_.method == Method::kGP ? Likelihood::kGaussian : Likelihood::kStudentT;
}

Eigen::VectorXd Problem::curve_mean(const Eigen::MatrixXd& B, std::size_t curve) const {
  const int level = data_.curves()[curve].level;
  return designs_[curve] * (B.col(0) + B.col(level));
}

Eigen::MatrixXd Problem::curve_kernel(const KernelParams& params, std::size_t curve) const {
  return jittered(kernel_matrix(data_.curves()[curve].covariates, params));
}

namespace {

struct CurveResult {
  double loglik = 0.0;
  LatentPosterior post;
  Eigen::VectorXd grad_mean_basis;  // Phi_n^T dZ/dm
  Eigen::VectorXd grad_kernel;
  double grad_sigma2 = 0.0;
  double grad_nu = 0.0;
};

}  // namespace

Evaluation evaluate(const Problem& problem, const FitState& state, const EvalOptions& opts) {
  const auto& data = problem.data();
  const std::size_t M = data.num_curves();
  if (state.kernels.size() != M && problem.has_random_effect()) {
    throw std::invalid_argument("fit state has the wrong number of kernel parameter sets");
  }
  if (state.B.rows() != problem.basis().num_basis() || state.B.cols() != data.num_levels() + 1) {
    throw std::invalid_argument("coefficient matrix has the wrong shape");
  }
  const Likelihood lik = problem.likelihood();
  std::vector<CurveResult> results(M);

  for_each_index(M, opts.policy, [&](std::size_t i) {
    const Curve& curve = data.curves()[i];
    const Eigen::VectorXd mean = problem.curve_mean(state.B, i);
    CurveResult& r = results[i];
    MarginalGradient mg;
    if (problem.has_random_effect()) {
      const Eigen::MatrixXd K = problem.curve_kernel(state.kernels[i], i);
      std::optional<Eigen::VectorXd> warm;
      if (opts.warm && opts.warm->size() == M) warm = (*opts.warm)[i];
      r.post = find_mode(curve.values, mean, K, state.etp, lik, problem.config().mode, warm);
      r.loglik = approx_marginal_loglik(r.post);
      if (opts.gradient) {
        const auto dK = jittered_grad(kernel_grad(curve.covariates, state.kernels[i]));
        mg = marginal_gradient(r.post, dK, opts.explicit_only);
      }
    } else {
      const Eigen::VectorXd residual = curve.values - mean;
      r.loglik = independent_loglik(residual, state.etp, lik);
      if (opts.gradient) mg = independent_gradient(residual, state.etp, lik);
    }
    if (opts.gradient) {
      r.grad_mean_basis = problem.design(i).transpose() * mg.mean;
      r.grad_kernel = mg.kernel;
      r.grad_sigma2 = mg.sigma2;
      r.grad_nu = mg.nu;
    }
  });

  Evaluation ev;
  ev.curve_loglik.resize(M);
  if (opts.gradient) {
    ev.grad_B = Eigen::MatrixXd::Zero(state.B.rows(), state.B.cols());
    ev.grad_kernel.resize(M);
  }
  for (std::size_t i = 0; i < M; ++i) {
    auto& r = results[i];
    ev.curve_loglik[i] = r.loglik;
    ev.loglik += r.loglik;
    if (opts.gradient) {
      const int level = data.curves()[i].level;
      ev.grad_B.col(0) += r.grad_mean_basis;
      ev.grad_B.col(level) += r.grad_mean_basis;
      ev.grad_kernel[i] = std::move(r.grad_kernel);
      ev.grad_sigma2 += r.grad_sigma2;
      ev.grad_nu += r.grad_nu;
    }
    if (problem.has_random_effect()) ev.posteriors.push_back(std::move(r.post));
  }
  ev.penalty = penalty_value(state.B, problem.penalty(), problem.lambda());
  ev.objective = ev.loglik - ev.penalty;
  if (opts.gradient) {
    ev.grad_B -= 2.0 * problem.lambda() * problem.penalty() * state.B;
    if (lik == Likelihood::kGaussian) ev.grad_nu = 0.0;
  }
  return ev;
}

double penalized_loglik(const Problem& problem, const FitState& state) {
  EvalOptions opts;
  opts.gradient = false;
  return evaluate(problem, state, opts).objective;
}

Eigen::VectorXd score_B(const Problem& problem, const FitState& state) {
  const Evaluation ev = evaluate(problem, state);
  const Eigen::MatrixXd Bt = ev.grad_B.transpose();
  return Eigen::Map<const Eigen::VectorXd>(Bt.data(), Bt.size());
}

Eigen::VectorXd score_theta(const Problem& problem, const FitState& state, std::size_t curve) {
  if (!problem.has_random_effect()) return Eigen::VectorXd();
  const Evaluation ev = evaluate(problem, state);
  return ev.grad_kernel.at(curve);
}

double score_sigma2(const Problem& problem, const FitState& state) {
  return evaluate(problem, state).grad_sigma2;
}

double score_nu(const Problem& problem, const FitState& state) {
  return evaluate(problem, state).grad_nu;
}

Eigen::MatrixXd project_identifiable(const Eigen::MatrixXd& B) {
  Eigen::MatrixXd out = B;
  const Eigen::Index I = B.cols() - 1;
  if (I < 1) return out;
  const Eigen::VectorXd mean_alpha = B.rightCols(I).rowwise().mean();
  out.col(0) += mean_alpha;
  out.rightCols(I).colwise() -= mean_alpha;
  return out;
}

FitState initial_state(const Problem& problem) {
  const auto& data = problem.data();
  const int L = problem.basis().num_basis();
  const int C = data.num_levels() + 1;
  const Eigen::Index N = static_cast<Eigen::Index>(data.total_observations());

  // Stack rows z_ij^T (x) Phi(t_k)^T against vec(B) (column-major).
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(N, L * C);
  Eigen::VectorXd y(N);
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < data.num_curves(); ++i) {
    const auto& c = data.curves()[i];
    const auto& Phi = problem.design(i);
    X.block(row, 0, c.size(), L) = Phi;
    X.block(row, c.level * L, c.size(), L) = Phi;
    y.segment(row, c.size()) = c.values;
    row += c.size();
  }
  Eigen::MatrixXd A = X.transpose() * X;
  for (int col = 0; col < C; ++col) {
    A.block(col * L, col * L, L, L) += problem.lambda() * problem.penalty();
  }
  A.diagonal().array() += 1e-8 * std::max(A.diagonal().mean(), 1.0);
  const Eigen::VectorXd coef = A.ldlt().solve(X.transpose() * y);

  FitState s;
  s.B = project_identifiable(Eigen::Map<const Eigen::MatrixXd>(coef.data(), L, C));
  const Eigen::VectorXd resid = y - X * coef;
  double var = (resid.array() - resid.mean()).square().sum() / std::max<Eigen::Index>(N - 1, 1);
  if (!(var > 1e-12) || !std::isfinite(var)) var = 1e-2;

  s.kernels.assign(data.num_curves(), KernelParams::isotropic(data.covariate_dim(), 0.5 * var, 1.0, 0.1));
  s.etp.sigma2 = 0.5 * var;
  s.etp.nu = std::clamp(problem.config().nu, kNuMin, kNuMax);
  return s;
}

namespace {

// Maps FitState to the unconstrained optimizer vector and back:
// [vec(B) | log kernel params per slot | log sigma2 | logit-scaled nu].
class Packing {
 public:
  Packing(const Problem& problem, const FitState& start) : problem_(problem) {
    const auto& data = problem.data();
    L_ = problem.basis().num_basis();
    C_ = data.num_levels() + 1;
    p_ = start.kernels.empty() ? 0 : start.kernels.front().num_params();
    if (problem.has_random_effect()) {
      std::map<int, std::size_t> level_slot;
      for (const auto& c : data.curves()) {
        if (problem.config().tie_kernel_within_level) {
          auto [it, inserted] = level_slot.emplace(c.level, num_slots_);
          if (inserted) ++num_slots_;
          slot_of_curve_.push_back(it->second);
        } else {
          slot_of_curve_.push_back(num_slots_++);
        }
      }
    }
    estimate_nu_ = problem.config().estimate_nu && problem.likelihood() == Likelihood::kStudentT;
  }

  Eigen::Index size() const {
    return L_ * C_ + static_cast<Eigen::Index>(num_slots_) * p_ + 1 + (estimate_nu_ ? 1 : 0);
  }

  Eigen::VectorXd pack(const FitState& s) const {
    Eigen::VectorXd x(size());
    x.head(L_ * C_) = Eigen::Map<const Eigen::VectorXd>(s.B.data(), L_ * C_);
    Eigen::Index off = L_ * C_;
    std::vector<Eigen::VectorXd> slot_sum(num_slots_, Eigen::VectorXd::Zero(p_));
    std::vector<int> slot_count(num_slots_, 0);
    for (std::size_t i = 0; i < slot_of_curve_.size(); ++i) {
      slot_sum[slot_of_curve_[i]] += safe_log(s.kernels[i].pack());
      ++slot_count[slot_of_curve_[i]];
    }
    for (std::size_t k = 0; k < num_slots_; ++k) {
      x.segment(off, p_) = slot_sum[k] / slot_count[k];
      off += p_;
    }
    x(off++) = std::log(s.etp.sigma2);
    if (estimate_nu_) {
      const double frac = std::clamp((s.etp.nu - kNuMin) / (kNuMax - kNuMin), 1e-9, 1.0 - 1e-9);
      x(off++) = std::log(frac / (1.0 - frac));
    }
    return x;
  }

  FitState unpack(const Eigen::VectorXd& x, const FitState& like) const {
    FitState s = like;
    s.B = project_identifiable(Eigen::Map<const Eigen::MatrixXd>(x.data(), L_, C_));
    Eigen::Index off = L_ * C_;
    std::vector<KernelParams> slots;
    for (std::size_t k = 0; k < num_slots_; ++k) {
      slots.push_back(KernelParams::unpack(x.segment(off, p_).array().exp().matrix()));
      off += p_;
    }
    for (std::size_t i = 0; i < slot_of_curve_.size(); ++i) s.kernels[i] = slots[slot_of_curve_[i]];
    s.etp.sigma2 = std::exp(x(off++));
    if (estimate_nu_) s.etp.nu = nu_of(x(off++));
    return s;
  }

  /// Gradient of the objective in x, with the B block restricted to sum_i alpha_i = 0.
  Eigen::VectorXd gradient(const Evaluation& ev, const FitState& s, const Eigen::VectorXd& x) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(size());
    Eigen::MatrixXd gB = ev.grad_B;
    if (C_ > 1) {
      const Eigen::VectorXd mean_alpha = gB.rightCols(C_ - 1).rowwise().mean();
      gB.rightCols(C_ - 1).colwise() -= mean_alpha;
    }
    g.head(L_ * C_) = Eigen::Map<const Eigen::VectorXd>(gB.data(), L_ * C_);
    Eigen::Index off = L_ * C_;
    for (std::size_t i = 0; i < slot_of_curve_.size(); ++i) {
      const Eigen::Index at = off + static_cast<Eigen::Index>(slot_of_curve_[i]) * p_;
      g.segment(at, p_) += ev.grad_kernel[i].cwiseProduct(s.kernels[i].pack());
    }
    off += static_cast<Eigen::Index>(num_slots_) * p_;
    g(off++) = ev.grad_sigma2 * s.etp.sigma2;
    if (estimate_nu_) {
      const double z = x(off);
      const double sig = 1.0 / (1.0 + std::exp(-z));
      g(off++) = ev.grad_nu * (kNuMax - kNuMin) * sig * (1.0 - sig);
    }
    return g;
  }

 private:
  static Eigen::VectorXd safe_log(const Eigen::VectorXd& v) {
    return v.cwiseMax(1e-300).array().log().matrix();
  }
  static double nu_of(double z) { return kNuMin + (kNuMax - kNuMin) / (1.0 + std::exp(-z)); }

  const Problem& problem_;
  Eigen::Index L_ = 0;
  Eigen::Index C_ = 0;
  Eigen::Index p_ = 0;
  std::size_t num_slots_ = 0;
  std::vector<std::size_t> slot_of_curve_;
  bool estimate_nu_ = false;
};

std::vector<Eigen::VectorXd> weights_of(const std::vector<LatentPosterior>& posts) {
  std::vector<Eigen::VectorXd> w;
  w.reserve(posts.size());
  for (const auto& p : posts) w.push_back(p.weights);
  return w;
}

int count_mode_failures(const std::vector<LatentPosterior>& posts) {
  return static_cast<int>(std::count_if(posts.begin(), posts.end(),
                                        [](const LatentPosterior& p) { return !p.converged; }));
}

// Quasi-Newton ascent (limited-memory BFGS on the negated objective, Armijo
// backtracking). Every trial point re-solves the latent modes, warm-started
// from the last accepted ones.
ModelFit optimize(const Problem& problem, FitState start) {
  const FitConfig& cfg = problem.config();
  Packing packing(problem, start);
  start = packing.unpack(packing.pack(start), start);

  auto run = [&](const FitState& s, const std::vector<Eigen::VectorXd>* warm) {
    EvalOptions opts;
    opts.policy = cfg.policy;
    opts.warm = warm;
    return evaluate(problem, s, opts);
  };

  Eigen::VectorXd x = packing.pack(start);
  FitState state = start;
  Evaluation ev = run(state, nullptr);
  if (!std::isfinite(ev.objective)) throw FitError("objective is not finite at the starting point");
  Eigen::VectorXd g = -packing.gradient(ev, state, x);  // minimize f = -objective
  double f = -ev.objective;
  std::vector<Eigen::VectorXd> warm = weights_of(ev.posteriors);

  ModelFit out;
  out.objective_trace.push_back(ev.objective);
  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;
  bool converged = false;
  int iter = 0;
  constexpr double kMaxStep = 5.0;

  while (iter < cfg.outer_max) {
    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alphas(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      const auto& [s, y] = memory[k];
      alphas[k] = s.dot(q) / y.dot(s);
      q -= alphas[k] * y;
    }
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      q *= s.dot(y) / y.dot(y);
    } else {
      q /= std::max(1.0, g.cwiseAbs().maxCoeff());
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [s, y] = memory[k];
      const double beta = y.dot(q) / y.dot(s);
      q += (alphas[k] - beta) * s;
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      memory.clear();
      dir = -g / std::max(1.0, g.cwiseAbs().maxCoeff());
      slope = g.dot(dir);
      if (!(slope < 0.0)) {
        converged = true;
        break;
      }
    }
    double step = std::min(1.0, kMaxStep / std::max(dir.cwiseAbs().maxCoeff(), 1e-300));

    bool accepted = false;
    Eigen::VectorXd x_new;
    FitState s_new;
    Evaluation ev_new;
    for (int bt = 0; bt < 40; ++bt, step *= 0.5) {
      x_new = x + step * dir;
      try {
        s_new = packing.unpack(x_new, state);
        ev_new = run(s_new, &warm);
      } catch (const std::exception&) {
        continue;
      }
      const double f_new = -ev_new.objective;
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!memory.empty()) {
        memory.clear();
        continue;
      }
      // No descent along the steepest direction at machine precision.
      converged = true;
      break;
    }
    ++iter;
    const Eigen::VectorXd g_new = -packing.gradient(ev_new, s_new, x_new);
    const Eigen::VectorXd sv = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    if (sv.dot(yv) > 1e-12 * sv.norm() * yv.norm()) {
      memory.emplace_back(sv, yv);
      if (static_cast<int>(memory.size()) > cfg.lbfgs_memory) memory.pop_front();
    }
    const double change = std::abs(ev_new.objective - ev.objective);
    x = x_new;
    state = s_new;
    ev = std::move(ev_new);
    g = g_new;
    f = -ev.objective;
    warm = weights_of(ev.posteriors);
    out.objective_trace.push_back(ev.objective);
    if (change < cfg.outer_tol * (1.0 + std::abs(ev.objective))) {
      converged = true;
      break;
    }
  }

  out.method = cfg.method;
  out.config = cfg;
  out.data = problem.data();
  out.basis = problem.basis();
  out.state = state;
  out.posteriors = std::move(ev.posteriors);
  out.lambda = problem.lambda();
  out.objective = ev.objective;
  out.iterations = iter;
  out.converged = converged;
  out.mode_failures = count_mode_failures(out.posteriors);
  return out;
}

}  // namespace

ModelFit fit(const FunctionalDataset& data, const FitConfig& config_in) {
  config_in.validate();
  FitConfig config = config_in;
  bool informative = false;
  for (const auto& c : data.curves()) informative = informative || c.size() > 1;
  if (!informative) throw FitError("every curve has a single observation; nothing to fit");
  if (!config.lambda_grid.empty()) {
    config.lambda = select_lambda(data, config, config.lambda_grid);
    config.lambda_grid.clear();
  }
  const Problem problem(data, config);
  return optimize(problem, initial_state(problem));
}

ModelFit fit_gp_comparator(const FunctionalDataset& data, FitConfig config) {
  config.method = Method::kGP;
  return fit(data, config);
}

ModelFit fit_no_random_effect(const FunctionalDataset& data, FitConfig config) {
  config.method = Method::kTPNoRandomEffect;
  return fit(data, config);
}

std::vector<LatentPosterior> refresh_posteriors(const ModelFit& model) {
  FitConfig cfg = model.config;
  cfg.lambda = model.lambda;
  cfg.lambda_grid.clear();
  const Problem problem(model.data, cfg, model.basis);
  const std::vector<Eigen::VectorXd> warm = weights_of(model.posteriors);
  EvalOptions opts;
  opts.gradient = false;
  opts.policy = cfg.policy;
  opts.warm = warm.empty() ? nullptr : &warm;
  return evaluate(problem, model.state, opts).posteriors;
}

double select_lambda(const FunctionalDataset& data, const FitConfig& config,
                     const std::vector<double>& grid, std::vector<double>* cv_errors) {
  if (grid.empty()) throw std::invalid_argument("lambda grid is empty");
  constexpr std::size_t kFolds = 5;
  const std::size_t M = data.num_curves();
  if (M < 2) throw FitError("cross-validation needs at least two curves");
  FitConfig inner = config;
  inner.lambda_grid.clear();
  if (!inner.domain) inner.domain = std::make_pair(data.min_time(), data.max_time());

  std::vector<double> errors;
  for (double lambda : grid) {
    inner.lambda = lambda;
    double abs_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t fold = 0; fold < std::min(kFolds, M); ++fold) {
      std::vector<Curve> train;
      std::vector<const Curve*> held;
      for (std::size_t i = 0; i < M; ++i) {
        if (i % kFolds == fold) {
          held.push_back(&data.curves()[i]);
        } else {
          train.push_back(data.curves()[i]);
        }
      }
      if (train.empty() || held.empty()) continue;
      const FunctionalDataset sub(std::move(train), data.level_labels(), data.covariate_rule());
      const ModelFit m = fit(sub, inner);
      for (const Curve* c : held) {
        for (Eigen::Index k = 0; k < c->size(); ++k) {
          const Eigen::VectorXd beta = eval_beta(m.state.B, m.basis, c->times(k));
          abs_sum += std::abs(c->values(k) - (beta(0) + beta(c->level)));
          ++count;
        }
      }
    }
    errors.push_back(count ? abs_sum / static_cast<double>(count) : std::numeric_limits<double>::infinity());
  }
  if (cv_errors) *cv_errors = errors;
  return grid[static_cast<std::size_t>(std::min_element(errors.begin(), errors.end()) - errors.begin())];
}

}  // namespace rfanova
