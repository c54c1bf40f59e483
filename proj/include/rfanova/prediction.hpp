#pragma once

#include "rfanova/estimation.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfanova {

class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Predictive mean and variance of y_ij(t*).
///   mean     = mean_structure + random_effect
///   variance = omega_term + conditional_var + noise_var
struct PredictionResult {
  double mean = 0.0;
  double variance = 0.0;
  double mean_structure = 0.0;   // z_ij^T beta(t*)
  double random_effect = 0.0;    // a^T tau hat
  double omega_term = 0.0;       // a^T Omega a
  double conditional_var = 0.0;  // k(t*,t*) - k^T K^-1 k
  double noise_var = 0.0;        // sigma2
  bool clamped = false;          // conditional_var was rounded up to 0
};

/// Caches the per-curve factorizations of a fitted model so that repeated
/// queries cost O(n^2). Read-only after construction.
class Predictor {
 public:
  explicit Predictor(const ModelFit& model);

  /// Known curve. `u_star` defaults to the dataset's covariate rule at t_star.
  PredictionResult predict(std::size_t curve, double t_star,
                           const std::optional<Eigen::VectorXd>& u_star = std::nullopt) const;
  /// Curve not seen at fit time: prior random effect with the level's
  /// (log-averaged) kernel parameters.
  PredictionResult predict_unseen(int level, double t_star,
                                  const std::optional<Eigen::VectorXd>& u_star = std::nullopt) const;

  std::size_t curve_index(const std::string& curve_id) const;
  const ModelFit& model() const { return model_; }

 private:
  const ModelFit& model_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> k_factor_;
  std::vector<Eigen::MatrixXd> correction_;  // (K + D^-1)^-1

  Eigen::VectorXd covariate_at(double t_star, const std::optional<Eigen::VectorXd>& u_star) const;
  double mean_structure(int level, double t_star) const;
};

PredictionResult predict(const ModelFit& model, const std::string& curve_id, double t_star,
                         const std::optional<Eigen::VectorXd>& u_star = std::nullopt);

/// Element-wise predict; `u_stars` rows pair with `t_stars` when given.
std::vector<PredictionResult> predict_batch(const ModelFit& model, const std::string& curve_id,
                                            const Eigen::VectorXd& t_stars,
                                            const std::optional<Eigen::MatrixXd>& u_stars = std::nullopt,
                                            ExecPolicy policy = ExecPolicy::kSerial);

}  // namespace rfanova
