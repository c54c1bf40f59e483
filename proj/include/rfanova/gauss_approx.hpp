#pragma once

#include "rfanova/etp.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace rfanova {

/// Observation model for y_k given tau_k. kGaussian swaps the EMTD site
/// likelihood for N(m_k + tau_k, sigma2); it drives the GP comparator and the
/// exactness checks.
enum class Likelihood { kStudentT, kGaussian };

/// One-point log-likelihood g(tau) at residual S = y - m - tau and its
/// derivatives in tau, sigma2 and nu.
struct SiteTerms {
  double g = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
  double g3 = 0.0;
  double g_sigma2 = 0.0;
  double g1_sigma2 = 0.0;
  double g2_sigma2 = 0.0;
  double g_nu = 0.0;
  double g1_nu = 0.0;
  double g2_nu = 0.0;
};

SiteTerms site_terms(double S, const EtpParams& params, Likelihood lik);

struct TaylorSite {
  double alpha;
  double d;
};

/// Second-order expansion of g around tau0: alpha = g'(tau0) - g''(tau0) tau0, d = -g''(tau0).
TaylorSite taylor_site(double y, double m, double tau0, const EtpParams& params,
                       Likelihood lik = Likelihood::kStudentT);

struct ModeOptions {
  double tol = 1e-8;
  int max_iter = 100;
  double curvature_floor = 1e-8;
  int max_halvings = 20;
};

/// Gaussian approximation N(mode, (K^-1 + D)^-1) of p(tau | Y).
struct LatentPosterior {
  Eigen::VectorXd mode;       // tau hat
  Eigen::VectorXd weights;    // K^-1 tau hat, kept without inverting K
  Eigen::VectorXd curvature;  // d_k = -g''(tau hat_k), unfloored
  Eigen::VectorXd floored;    // max(d_k, curvature_floor): the D actually used
  Eigen::VectorXd alpha;      // Taylor score vector at the mode
  Eigen::VectorXd residual;   // Y - mean
  Eigen::MatrixXd K;
  Eigen::MatrixXd precision_factor;  // lower Cholesky of I + D^1/2 K D^1/2
  double log_det = 0.0;              // log |I + K D|
  double joint = 0.0;                // sum_k g_k(mode) - 1/2 mode^T K^-1 mode
  EtpParams etp;
  Likelihood likelihood = Likelihood::kStudentT;
  double curvature_floor = 1e-8;
  bool converged = false;
  int iterations = 0;
};

/// Fisher scoring for the latent mode with step halving. `K` is used exactly
/// as given (callers add jitter). `warm_weights`, when given, starts the
/// iteration at tau = K * warm_weights; otherwise tau starts at 0.
LatentPosterior find_mode(const Eigen::VectorXd& Y, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& K, const EtpParams& params,
                          Likelihood lik = Likelihood::kStudentT, const ModeOptions& opts = {},
                          const std::optional<Eigen::VectorXd>& warm_weights = std::nullopt);

/// sum_k g_k(mode) - 1/2 mode^T K^-1 mode - 1/2 log|I + K D| at the mode.
double approx_marginal_loglik(const LatentPosterior& post);
double approx_marginal_loglik(const Eigen::VectorXd& Y, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& K, const EtpParams& params,
                              Likelihood lik = Likelihood::kStudentT);

/// Omega = (K^-1 + D)^-1 = K - K D^1/2 (I + D^1/2 K D^1/2)^-1 D^1/2 K.
Eigen::MatrixXd posterior_covariance(const LatentPosterior& post);

/// (K + D^-1)^-1 = D^1/2 (I + D^1/2 K D^1/2)^-1 D^1/2.
Eigen::MatrixXd precision_correction(const LatentPosterior& post);

/// Stationarity residual |g'(mode) - K^-1 mode|_inf.
double stationarity_residual(const LatentPosterior& post);

/// Total derivative of approx_marginal_loglik, with the mode re-solved as the
/// parameters move. `explicit_only` drops the terms that come from the mode's
/// own dependence on the parameters (the fixed-mode score).
struct MarginalGradient {
  Eigen::VectorXd mean;    // d/d mean_k
  Eigen::VectorXd kernel;  // d/d packed kernel parameter (natural scale)
  double sigma2 = 0.0;
  double nu = 0.0;
};

MarginalGradient marginal_gradient(const LatentPosterior& post,
                                   const std::vector<Eigen::MatrixXd>& kernel_derivs,
                                   bool explicit_only = false);

/// Same quantities for the model with the random effect removed (tau = 0):
/// the marginal is sum_k g_k(0).
double independent_loglik(const Eigen::VectorXd& residual, const EtpParams& params, Likelihood lik);
MarginalGradient independent_gradient(const Eigen::VectorXd& residual, const EtpParams& params,
                                      Likelihood lik);

}  // namespace rfanova
