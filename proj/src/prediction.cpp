#include "rfanova/prediction.hpp"

#include <cmath>

namespace rfanova {

Predictor::Predictor(const ModelFit& model) : model_(model) {
  const bool random_effect = model.method != Method::kTPNoRandomEffect;
  if (random_effect && model.posteriors.size() != model.data.num_curves()) {
    throw std::invalid_argument("model has no latent posteriors; refresh them before predicting");
  }
  if (!random_effect) return;
  for (const auto& post : model.posteriors) {
    Eigen::LLT<Eigen::MatrixXd> llt(post.K);
    if (llt.info() != Eigen::Success) throw NumericError("kernel matrix factorization failed");
    k_factor_.push_back(std::move(llt));
    correction_.push_back(precision_correction(post));
  }
}

std::size_t Predictor::curve_index(const std::string& curve_id) const {
  auto idx = model_.data.find(curve_id);
  if (!idx) throw LookupError("unknown curve '" + curve_id + "'");
  return *idx;
}

Eigen::VectorXd Predictor::covariate_at(double t_star, const std::optional<Eigen::VectorXd>& u_star) const {
  if (u_star) {
    if (u_star->size() != model_.data.covariate_dim()) {
      throw DimensionError("u_star has the wrong dimension");
    }
    return *u_star;
  }
  return model_.data.covariate_rule().at(t_star);
}

double Predictor::mean_structure(int level, double t_star) const {
  const Eigen::VectorXd beta = eval_beta(model_.state.B, model_.basis, t_star);
  return beta(0) + beta(level);
}

PredictionResult Predictor::predict(std::size_t curve, double t_star,
                                    const std::optional<Eigen::VectorXd>& u_star) const {
  if (curve >= model_.data.num_curves()) throw LookupError("curve index out of range");
  const Curve& c = model_.data.curves()[curve];
  PredictionResult r;
  r.mean_structure = mean_structure(c.level, t_star);
  r.noise_var = model_.state.etp.sigma2;
  if (model_.method == Method::kTPNoRandomEffect) {
    r.mean = r.mean_structure;
    r.variance = r.noise_var;
    return r;
  }
  const Eigen::VectorXd u = covariate_at(t_star, u_star);
  const KernelParams& kp = model_.state.kernels[curve];
  const LatentPosterior& post = model_.posteriors[curve];
  const Eigen::VectorXd k = cross_kernel(u, c.covariates, kp);
  const double k_ss = eval_kernel(u, u, kp);
  const Eigen::VectorXd a = k_factor_[curve].solve(k);

  r.random_effect = k.dot(post.weights);
  const double k_a = k.dot(a);
  double cond = k_ss - k_a;
  if (cond < 0.0) {
    r.clamped = true;
    cond = 0.0;
  }
  r.conditional_var = cond;
  // a^T Omega a = k^T K^-1 k - k^T (K + D^-1)^-1 k
  r.omega_term = std::max(0.0, k_a - k.dot(correction_[curve] * k));
  r.mean = r.mean_structure + r.random_effect;
  r.variance = r.omega_term + r.conditional_var + r.noise_var;
  return r;
}

PredictionResult Predictor::predict_unseen(int level, double t_star,
                                           const std::optional<Eigen::VectorXd>& u_star) const {
  if (level < 1 || level > model_.data.num_levels()) throw LookupError("level out of range");
  PredictionResult r;
  r.mean_structure = mean_structure(level, t_star);
  r.mean = r.mean_structure;
  r.noise_var = model_.state.etp.sigma2;
  if (model_.method == Method::kTPNoRandomEffect) {
    r.variance = r.noise_var;
    return r;
  }
  Eigen::VectorXd log_sum;
  int count = 0;
  for (int pass = 0; pass < 2 && count == 0; ++pass) {
    for (std::size_t i = 0; i < model_.data.num_curves(); ++i) {
      if (pass == 0 && model_.data.curves()[i].level != level) continue;
      const Eigen::VectorXd lp = model_.state.kernels[i].pack().cwiseMax(1e-300).array().log();
      log_sum = count == 0 ? lp : Eigen::VectorXd(log_sum + lp);
      ++count;
    }
  }
  const KernelParams kp = KernelParams::unpack((log_sum / count).array().exp().matrix());
  const Eigen::VectorXd u = covariate_at(t_star, u_star);
  r.conditional_var = eval_kernel(u, u, kp);
  r.variance = r.conditional_var + r.noise_var;
  return r;
}

PredictionResult predict(const ModelFit& model, const std::string& curve_id, double t_star,
                         const std::optional<Eigen::VectorXd>& u_star) {
  const Predictor p(model);
  return p.predict(p.curve_index(curve_id), t_star, u_star);
}

std::vector<PredictionResult> predict_batch(const ModelFit& model, const std::string& curve_id,
                                            const Eigen::VectorXd& t_stars,
                                            const std::optional<Eigen::MatrixXd>& u_stars,
                                            ExecPolicy policy) {
  if (u_stars && u_stars->rows() != t_stars.size()) {
    throw DimensionError("u_stars must have one row per query time");
  }
  const Predictor p(model);
  const std::size_t curve = p.curve_index(curve_id);
  std::vector<PredictionResult> out(static_cast<std::size_t>(t_stars.size()));
  for_each_index(out.size(), policy, [&](std::size_t q) {
    const auto k = static_cast<Eigen::Index>(q);
    std::optional<Eigen::VectorXd> u;
    if (u_stars) u = u_stars->row(k).transpose();
    out[q] = p.predict(curve, t_stars(k), u);
  });
  return out;
}

}  // namespace rfanova
