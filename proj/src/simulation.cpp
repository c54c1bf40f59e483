#include "rfanova/simulation.hpp"

#include "rfanova/etp.hpp"
#include "rfanova/prediction.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace rfanova {

std::string to_string(Disturbance d) {
  switch (d) {
    case Disturbance::kNone: return "none";
    case Disturbance::kConst2: return "const2";
    case Disturbance::kNormal02: return "normal02";
    case Disturbance::kT3: return "t3";
  }
  return "none";
}

Disturbance disturbance_from_string(const std::string& s) {
  if (s == "none") return Disturbance::kNone;
  if (s == "const2") return Disturbance::kConst2;
  if (s == "normal02") return Disturbance::kNormal02;
  if (s == "t3") return Disturbance::kT3;
  throw std::invalid_argument("unknown disturbance '" + s + "'");
}

void SimConfig::validate() const {
  if (model_id < 1 || model_id > 3) throw std::invalid_argument("model_id must be 1, 2 or 3");
  if (grid_points < 3) throw std::invalid_argument("grid needs at least 3 points");
  if (n_train < 2 || n_train >= grid_points) {
    throw std::invalid_argument("n_train must lie strictly between 1 and the grid size");
  }
  if (replications < 1) throw std::invalid_argument("replications must be >= 1");
  if (!(grid_lower < grid_upper)) throw std::invalid_argument("grid bounds out of order");
  fit.validate();
}

KernelParams SimDesign::kernel() { return KernelParams::isotropic(1, 0.1, 10.0, 0.1); }

double SimDesign::mu(double t) { return t * t; }

double SimDesign::alpha(int level, double t) {
  static constexpr double kAmp[] = {0.5, 0.1, -0.6};
  if (level < 1 || level > kLevels) throw std::out_of_range("level out of range");
  return kAmp[level - 1] * std::cos(t);
}

SimulatedData generate(const SimConfig& config, std::mt19937_64& rng) {
  config.validate();
  SimulatedData sim;
  const int G = config.grid_points;
  sim.grid = Eigen::VectorXd::LinSpaced(G, config.grid_lower, config.grid_upper);

  std::vector<int> order(static_cast<std::size_t>(G));
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < config.n_train; ++k) {
    std::uniform_int_distribution<int> pick(k, G - 1);
    std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(pick(rng))]);
  }
  sim.train_index.assign(order.begin(), order.begin() + config.n_train);
  std::sort(sim.train_index.begin(), sim.train_index.end());
  for (int g = 0; g < G; ++g) {
    if (!std::binary_search(sim.train_index.begin(), sim.train_index.end(), g)) sim.test_index.push_back(g);
  }

  const Eigen::MatrixXd U = SimDesign::kCovariateScale * sim.grid;
  const Eigen::MatrixXd K = kernel_matrix(U, SimDesign::kernel());
  const Eigen::MatrixXd K_chol = psd_cholesky(K);
  const EtpParams noise{SimDesign::kNu, SimDesign::kSigma2};
  const Eigen::MatrixXd white = Eigen::MatrixXd::Identity(G, G);
  std::normal_distribution<double> std_normal(0.0, 1.0);

  auto take = [](const Eigen::VectorXd& v, const std::vector<int>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(idx[k]);
    return out;
  };

  std::vector<Curve> train_curves;
  std::vector<Curve> test_curves;
  for (int i = 1; i <= SimDesign::kLevels; ++i) {
    for (int j = 1; j <= SimDesign::kReplicates; ++j) {
      Eigen::VectorXd tau = Eigen::VectorXd::Zero(G);
      if (config.model_id != 3) {
        Eigen::VectorXd z(G);
        for (int g = 0; g < G; ++g) z(g) = std_normal(rng);
        tau = K_chol * z;
      }
      Eigen::VectorXd eps(G);
      if (config.model_id == 2) {
        for (int g = 0; g < G; ++g) eps(g) = std::sqrt(SimDesign::kSigma2) * std_normal(rng);
      } else {
        eps = sample_etp(G, noise, white, rng);
      }
      Eigen::VectorXd truth(G);
      for (int g = 0; g < G; ++g) {
        const double t = sim.grid(g);
        truth(g) = SimDesign::mu(t) + SimDesign::alpha(i, t) + tau(g);
      }
      const Eigen::VectorXd y = truth + eps;
      sim.truth.push_back(truth);

      Curve c;
      c.id = std::to_string(i) + ":" + std::to_string(j);
      c.level = i;
      c.replicate = j;
      Curve test = c;
      c.times = take(sim.grid, sim.train_index);
      c.values = take(y, sim.train_index);
      c.covariates = SimDesign::kCovariateScale * c.times;
      test.times = take(sim.grid, sim.test_index);
      test.values = take(y, sim.test_index);
      test.covariates = SimDesign::kCovariateScale * test.times;
      train_curves.push_back(std::move(c));
      test_curves.push_back(std::move(test));
    }
  }
  const std::vector<std::string> labels{"1", "2", "3"};
  const CovariateRule rule{CovariateRule::Kind::kScaledTime, SimDesign::kCovariateScale};
  sim.train = FunctionalDataset(std::move(train_curves), labels, rule);
  sim.test = FunctionalDataset(std::move(test_curves), labels, rule);
  return sim;
}

FunctionalDataset contaminate(const FunctionalDataset& train, Disturbance scheme, std::mt19937_64& rng,
                              std::pair<std::size_t, Eigen::Index>* picked) {
  const std::size_t total = train.total_observations();
  if (total == 0) throw std::invalid_argument("cannot contaminate an empty training set");
  if (scheme == Disturbance::kNone) return train;

  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  std::size_t flat = pick(rng);
  double shift = 2.0;
  if (scheme == Disturbance::kNormal02) {
    shift = std::normal_distribution<double>(0.0, std::sqrt(2.0))(rng);
  } else if (scheme == Disturbance::kT3) {
    shift = std::student_t_distribution<double>(3.0)(rng);
  }

  std::vector<Curve> curves = train.curves();
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto n = static_cast<std::size_t>(curves[i].size());
    if (flat < n) {
      curves[i].values(static_cast<Eigen::Index>(flat)) += shift;
      if (picked) *picked = {i, static_cast<Eigen::Index>(flat)};
      break;
    }
    flat -= n;
  }
  return FunctionalDataset(std::move(curves), train.level_labels(), train.covariate_rule());
}

PeMse pe_mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& observed,
             const Eigen::VectorXd& truth) {
  if (predictions.size() != observed.size() || predictions.size() != truth.size()) {
    throw std::invalid_argument("pe_mse: length mismatch");
  }
  if (predictions.size() == 0) throw std::invalid_argument("pe_mse: no test points");
  const Eigen::VectorXd abs_err = (predictions - observed).cwiseAbs();
  const Eigen::VectorXd sq_err = (predictions - truth).array().square();
  const auto n = static_cast<std::size_t>(predictions.size());
  return {pairwise_sum(abs_err.data(), n) / static_cast<double>(n),
          pairwise_sum(sq_err.data(), n) / static_cast<double>(n)};
}

std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += x[k];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

namespace {

constexpr Method kMethods[] = {Method::kTP, Method::kGP, Method::kTPNoRandomEffect};

PeMse score_fit(const ModelFit& model, const SimulatedData& sim) {
  const Predictor predictor(model);
  const std::size_t per_curve = sim.test_index.size();
  const auto total = static_cast<Eigen::Index>(per_curve * sim.test.num_curves());
  Eigen::VectorXd yhat(total), observed(total), truth(total);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < sim.test.num_curves(); ++i) {
    const Curve& c = sim.test.curves()[i];
    const std::size_t fit_idx = predictor.curve_index(c.id);
    for (Eigen::Index q = 0; q < c.size(); ++q, ++k) {
      yhat(k) = predictor.predict(fit_idx, c.times(q)).mean;
      observed(k) = c.values(q);
      truth(k) = sim.truth[i](sim.test_index[static_cast<std::size_t>(q)]);
    }
  }
  return pe_mse(yhat, observed, truth);
}

double sample_sd(const std::vector<double>& x, double mean) {
  if (x.size() < 2) return 0.0;
  std::vector<double> dev(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) dev[k] = (x[k] - mean) * (x[k] - mean);
  return std::sqrt(pairwise_sum(dev.data(), dev.size()) / static_cast<double>(x.size() - 1));
}

}  // namespace

std::vector<PeMse> run_replicate(const SimConfig& config, int replicate) {
  std::mt19937_64 rng(replicate_seed(config.seed, static_cast<std::uint64_t>(replicate)));
  SimulatedData sim = generate(config, rng);
  sim.train = contaminate(sim.train, config.disturb, rng);

  FitConfig base = config.fit;
  base.domain = std::make_pair(config.grid_lower, config.grid_upper);
  base.policy = ExecPolicy::kSerial;
  base.estimate_nu = config.estimate_nu;
  base.nu = SimDesign::kNu;

  std::vector<PeMse> out;
  for (Method m : kMethods) {
    FitConfig cfg = base;
    cfg.method = m;
    out.push_back(score_fit(fit(sim.train, cfg), sim));
  }
  return out;
}

ExperimentResult run_experiment(const SimConfig& config) {
  config.validate();
  const auto R = static_cast<std::size_t>(config.replications);
  std::vector<std::vector<PeMse>> per_rep(R);
  std::vector<char> failed(R, 0);
  for_each_index(R, config.policy, [&](std::size_t r) {
    try {
      per_rep[r] = run_replicate(config, static_cast<int>(r));
    } catch (const std::exception&) {
      failed[r] = 1;
    }
  });

  ExperimentResult result;
  result.config = config;
  result.failed = static_cast<int>(std::count(failed.begin(), failed.end(), 1));
  if (result.failed * 10 > config.replications) {
    throw FitError(std::to_string(result.failed) + " of " + std::to_string(config.replications) +
                   " replicates failed");
  }
  for (std::size_t r = 0; r < R; ++r) {
    if (!failed[r]) result.retained.push_back(static_cast<int>(r));
  }
  for (std::size_t m = 0; m < std::size(kMethods); ++m) {
    ReplicationResult rr;
    rr.method = kMethods[m];
    for (int r : result.retained) {
      rr.pe.push_back(per_rep[static_cast<std::size_t>(r)][m].pe);
      rr.mse.push_back(per_rep[static_cast<std::size_t>(r)][m].mse);
    }
    const auto n = static_cast<double>(rr.pe.size());
    rr.pe_mean = pairwise_sum(rr.pe.data(), rr.pe.size()) / n;
    rr.mse_mean = pairwise_sum(rr.mse.data(), rr.mse.size()) / n;
    rr.pe_sd = sample_sd(rr.pe, rr.pe_mean);
    rr.mse_sd = sample_sd(rr.mse, rr.mse_mean);
    result.methods.push_back(std::move(rr));
  }
  return result;
}

void write_table_csv(const ExperimentResult& result, std::ostream& out) {
  auto label = [](Method m) {
    switch (m) {
      case Method::kTP: return "TP";
      case Method::kGP: return "GP";
      case Method::kTPNoRandomEffect: return "TP(tau=0)";
    }
    return "";
  };
  out << "# replicates=" << result.retained.size() << ", failed=" << result.failed << '\n';
  out << "method,metric,mean,sd\n";
  out.precision(10);
  for (const auto& rr : result.methods) {
    out << label(rr.method) << ",PE," << rr.pe_mean << ',' << rr.pe_sd << '\n';
    out << label(rr.method) << ",MSE," << rr.mse_mean << ',' << rr.mse_sd << '\n';
  }
}

PairedTest paired_t_test_less(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired test: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("paired test needs at least two pairs");
  PairedTest t;
  t.n = a.size();
  std::vector<double> d(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
  t.mean_diff = pairwise_sum(d.data(), d.size()) / static_cast<double>(t.n);
  const double sd = sample_sd(d, t.mean_diff);
  if (sd == 0.0) {
    t.t_stat = t.mean_diff < 0 ? -INFINITY : (t.mean_diff > 0 ? INFINITY : 0.0);
    t.p_value = t.mean_diff < 0 ? 0.0 : (t.mean_diff > 0 ? 1.0 : 0.5);
    return t;
  }
  t.t_stat = t.mean_diff / (sd / std::sqrt(static_cast<double>(t.n)));
  const boost::math::students_t dist(static_cast<double>(t.n - 1));
  t.p_value = boost::math::cdf(dist, t.t_stat);
  return t;
}

}  // namespace rfanova
