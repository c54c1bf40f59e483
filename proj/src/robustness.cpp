#include "rfanova/robustness.hpp"

#include "rfanova/simulation.hpp"

#include <cmath>
#include <random>

namespace rfanova {

namespace {

FunctionalDataset shifted(const FunctionalDataset& data, std::size_t curve, Eigen::Index obs, double c) {
  std::vector<Curve> curves = data.curves();
  curves[curve].values(obs) += c;
  return FunctionalDataset(std::move(curves), data.level_labels(), data.covariate_rule());
}

Eigen::VectorXd mean_parameters(const ModelFit& m) {
  Eigen::VectorXd v(m.state.B.size() + 1);
  v.head(m.state.B.size()) = m.state.B.reshaped();
  v(m.state.B.size()) = std::log(m.state.etp.sigma2);
  return v;
}

}  // namespace

double stacked_score_norm(const FunctionalDataset& data, const FitConfig& config,
                          const BSplineBasis& basis, const FitState& state, Method method) {
  FitConfig cfg = config;
  cfg.method = method;
  cfg.lambda_grid.clear();
  const Problem problem(data, cfg, basis);
  EvalOptions opts;
  opts.policy = ExecPolicy::kSerial;
  const Evaluation ev = evaluate(problem, state, opts);
  double sq = ev.grad_B.squaredNorm() + ev.grad_sigma2 * ev.grad_sigma2;
  for (const auto& g : ev.grad_kernel) sq += g.squaredNorm();
  return std::sqrt(sq);
}

BoundednessProbe score_boundedness_probe(const ModelFit& model, const FunctionalDataset& data,
                                         std::size_t curve, const Eigen::VectorXd& magnitudes,
                                         const ProbeOptions& opts) {
  if (curve >= data.num_curves()) throw std::out_of_range("probe curve out of range");
  if (opts.observation < 0 || opts.observation >= data.curves()[curve].size()) {
    throw std::out_of_range("probe observation out of range");
  }
  if (model.state.kernels.size() != data.num_curves()) {
    throw std::invalid_argument("probe dataset does not match the fit");
  }
  for (Eigen::Index k = 0; k < magnitudes.size(); ++k) {
    if (!(magnitudes(k) >= 0.0) || (k > 0 && !(magnitudes(k) > magnitudes(k - 1)))) {
      throw std::invalid_argument("magnitudes must be non-negative and increasing");
    }
  }
  FitConfig cfg = model.config;
  cfg.lambda = model.lambda;
  cfg.lambda_grid.clear();
  cfg.policy = ExecPolicy::kSerial;

  BoundednessProbe probe;
  probe.magnitudes = magnitudes;
  probe.tp_score_norms.resize(magnitudes.size());
  probe.gp_score_norms.resize(magnitudes.size());

  ModelFit clean_tp, clean_gp;
  if (opts.refit) {
    cfg.domain = std::make_pair(model.basis.lower(), model.basis.upper());
    FitConfig tp = cfg, gp = cfg;
    tp.method = Method::kTP;
    gp.method = Method::kGP;
    clean_tp = fit(data, tp);
    clean_gp = fit(data, gp);
  }

  for_each_index(static_cast<std::size_t>(magnitudes.size()), opts.policy, [&](std::size_t k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const FunctionalDataset perturbed = shifted(data, curve, opts.observation, magnitudes(kk));
    if (opts.refit) {
      // parameter displacement of the refitted mean structure and scale
      FitConfig tp = cfg, gp = cfg;
      tp.method = Method::kTP;
      gp.method = Method::kGP;
      probe.tp_score_norms(kk) = (mean_parameters(fit(perturbed, tp)) - mean_parameters(clean_tp)).norm();
      probe.gp_score_norms(kk) = (mean_parameters(fit(perturbed, gp)) - mean_parameters(clean_gp)).norm();
      return;
    }
    probe.tp_score_norms(kk) = stacked_score_norm(perturbed, cfg, model.basis, model.state, Method::kTP);
    probe.gp_score_norms(kk) = stacked_score_norm(perturbed, cfg, model.basis, model.state, Method::kGP);
  });
  probe.tp_sup_estimate = magnitudes.size() ? probe.tp_score_norms.maxCoeff() : 0.0;
  return probe;
}

double regret_term(const Eigen::MatrixXd& K, double sigma2) {
  if (K.rows() != K.cols()) throw DimensionError("regret_term: K must be square");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("regret_term: sigma2 must be positive");
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(K.rows(), K.cols()) + K / sigma2;
  const Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw NumericError("regret_term: factorization failed");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

std::vector<RegretRow> regret_growth_report(const KernelParams& kernel, double sigma2,
                                            const std::vector<int>& sizes, double lower, double upper,
                                            int draws, std::uint64_t seed, ExecPolicy policy) {
  if (draws < 1) throw std::invalid_argument("draws must be >= 1");
  if (!(lower < upper)) throw std::invalid_argument("covariate bounds out of order");
  std::vector<RegretRow> rows;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const int n = sizes[s];
    if (n < 1) throw std::invalid_argument("sizes must be positive");
    std::vector<double> values(static_cast<std::size_t>(draws));
    for_each_index(values.size(), policy, [&](std::size_t d) {
      std::mt19937_64 rng(replicate_seed(seed, s * 1000003ULL + d));
      std::uniform_real_distribution<double> unif(lower, upper);
      Eigen::MatrixXd U(n, kernel.dim());
      for (Eigen::Index r = 0; r < U.rows(); ++r)
        for (Eigen::Index c = 0; c < U.cols(); ++c) U(r, c) = unif(rng);
      values[d] = regret_term(kernel_matrix(U, kernel), sigma2);
    });
    RegretRow row;
    row.n = n;
    row.mean_regret = pairwise_sum(values.data(), values.size()) / draws;
    row.ratio = row.mean_regret / n;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rfanova
