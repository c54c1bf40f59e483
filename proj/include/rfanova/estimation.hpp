#pragma once

#include "rfanova/bspline.hpp"
#include "rfanova/dataset.hpp"
#include "rfanova/etp.hpp"
#include "rfanova/gauss_approx.hpp"
#include "rfanova/kernels.hpp"
#include "rfanova/parallel.hpp"

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfanova {

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// TP: EMTD errors with a GP random effect. GP: Gaussian errors, same random
/// effect. TPNoRandomEffect: EMTD errors with tau fixed at zero.
enum class Method { kTP, kGP, kTPNoRandomEffect };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct FitConfig {
  Method method = Method::kTP;
  BasisConfig basis;
  /// Basis domain; defaults to the data's time range.
  std::optional<std::pair<double, double>> domain;
  double lambda = 1e-2;
  /// When non-empty, lambda is chosen from this grid by 5-fold curve-wise CV.
  std::vector<double> lambda_grid;
  bool estimate_nu = true;
  /// Starting value, or the fixed value when estimate_nu is false.
  double nu = 3.0;
  /// Share kernel hyperparameters among the curves of one level.
  bool tie_kernel_within_level = false;
  ModeOptions mode;
  int outer_max = 50;
  double outer_tol = 1e-6;
  int lbfgs_memory = 10;
  ExecPolicy policy = ExecPolicy::kParallel;

  void validate() const;
};

/// The parameter point (B, theta_ij, sigma2, nu).
struct FitState {
  Eigen::MatrixXd B;                 // L x (I+1)
  std::vector<KernelParams> kernels;  // one per curve, dataset order
  EtpParams etp;
};

/// Dataset, basis and penalty bound together, with per-curve design caches.
class Problem {
 public:
  Problem(FunctionalDataset data, const FitConfig& config);
  Problem(FunctionalDataset data, const FitConfig& config, BSplineBasis basis);

  const FunctionalDataset& data() const { return data_; }
  const FitConfig& config() const { return config_; }
  const BSplineBasis& basis() const { return basis_; }
  const Eigen::MatrixXd& penalty() const { return penalty_; }
  double lambda() const { return config_.lambda; }
  Method method() const { return config_.method; }
  Likelihood likelihood() const;
  bool has_random_effect() const { return config_.method != Method::kTPNoRandomEffect; }
  const Eigen::MatrixXd& design(std::size_t curve) const { return designs_[curve]; }

  /// Phi_n B z_ij for one curve.
  Eigen::VectorXd curve_mean(const Eigen::MatrixXd& B, std::size_t curve) const;
  /// jittered K for one curve.
  Eigen::MatrixXd curve_kernel(const KernelParams& params, std::size_t curve) const;

 private:
  FunctionalDataset data_;
  FitConfig config_;
  BSplineBasis basis_;
  Eigen::MatrixXd penalty_;
  std::vector<Eigen::MatrixXd> designs_;
};

struct Evaluation {
  double objective = 0.0;  // loglik - penalty
  double loglik = 0.0;
  double penalty = 0.0;
  std::vector<double> curve_loglik;
  std::vector<LatentPosterior> posteriors;  // empty without a random effect
  // Gradients on the natural scale.
  Eigen::MatrixXd grad_B;
  std::vector<Eigen::VectorXd> grad_kernel;
  double grad_sigma2 = 0.0;
  double grad_nu = 0.0;
};

struct EvalOptions {
  bool gradient = true;
  bool explicit_only = false;
  ExecPolicy policy = ExecPolicy::kSerial;
  /// Per-curve K^-1 tau warm starts (may be empty).
  const std::vector<Eigen::VectorXd>* warm = nullptr;
};

Evaluation evaluate(const Problem& problem, const FitState& state, const EvalOptions& opts = {});

/// Sum of per-curve approximate marginals minus lambda * penalty.
double penalized_loglik(const Problem& problem, const FitState& state);
/// d/dB as Vec(B^T): entry l*(I+1) + c is d/dB(l, c).
Eigen::VectorXd score_B(const Problem& problem, const FitState& state);
/// d/d(theta0, theta_1..p, eta_1..p) of the chosen curve.
Eigen::VectorXd score_theta(const Problem& problem, const FitState& state, std::size_t curve);
double score_sigma2(const Problem& problem, const FitState& state);
double score_nu(const Problem& problem, const FitState& state);

/// Moves the mean of the alpha columns into the mu column so sum_i alpha_i = 0.
Eigen::MatrixXd project_identifiable(const Eigen::MatrixXd& B);

/// Starting point: penalized least squares for B, moment-based kernel and scale.
FitState initial_state(const Problem& problem);

struct ModelFit {
  Method method = Method::kTP;
  FitConfig config;
  FunctionalDataset data;
  BSplineBasis basis{4, Eigen::VectorXd(), 0.0, 1.0};
  FitState state;
  std::vector<LatentPosterior> posteriors;
  double lambda = 0.0;
  std::vector<double> objective_trace;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  int mode_failures = 0;  // curves whose latent mode hit max_iter at the final state
};

ModelFit fit(const FunctionalDataset& data, const FitConfig& config);
ModelFit fit_gp_comparator(const FunctionalDataset& data, FitConfig config);
ModelFit fit_no_random_effect(const FunctionalDataset& data, FitConfig config);

/// Re-solves the latent modes of a fit at its stored parameters.
std::vector<LatentPosterior> refresh_posteriors(const ModelFit& model);

/// 5-fold curve-wise cross-validated prediction error for each lambda; returns
/// the grid value with the smallest error.
double select_lambda(const FunctionalDataset& data, const FitConfig& config,
                     const std::vector<double>& grid, std::vector<double>* cv_errors = nullptr);

}  // namespace rfanova
