#pragma once

#include <Eigen/Dense>

#include <random>
#include <stdexcept>

namespace rfanova {

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Extended t-process error ETP(nu, nu - 1, 0, sigma2 * I(u = v)).
struct EtpParams {
  double nu = 3.0;
  double sigma2 = 1.0;

  void validate() const;
};

/// Bounds applied to nu whenever it is estimated.
inline constexpr double kNuMin = 1.0 + 1e-3;
inline constexpr double kNuMax = 50.0;

/// Log-density of the extended multivariate t distribution with location h and
/// scale sigma2 * I_n:
///   -n/2 log(2 pi (nu-1) sigma2) + lgamma(n/2 + nu) - lgamma(nu)
///   - (n/2 + nu) log(1 + |z - h|^2 / (2 (nu-1) sigma2))
double emtd_logpdf(const Eigen::Ref<const Eigen::VectorXd>& z,
                   const Eigen::Ref<const Eigen::VectorXd>& h, const EtpParams& params);

/// Spherical Gaussian N(h, sigma2 I) log-density.
double gaussian_logpdf(const Eigen::Ref<const Eigen::VectorXd>& z,
                       const Eigen::Ref<const Eigen::VectorXd>& h, double sigma2);

struct GDerivs {
  double g1;
  double g2;
};

/// First and second derivative in tau of the one-point EMTD log-likelihood at
/// residual S = y - m - tau.
GDerivs g_derivs(double S, const EtpParams& params);

/// Supremum of |g1| over S, attained at S = +-sqrt(2 (nu-1) sigma2).
double g1_supremum(const EtpParams& params);

/// Draws r ~ InvGamma(nu, rate nu - 1), then x ~ N(0, r * cov). `cov` must be PSD;
/// a jitter ladder is tried before giving up with NumericError.
Eigen::VectorXd sample_etp(Eigen::Index n, const EtpParams& params, const Eigen::MatrixXd& cov,
                           std::mt19937_64& rng);

/// Lower Cholesky factor of a PSD matrix with escalating diagonal jitter.
Eigen::MatrixXd psd_cholesky(const Eigen::MatrixXd& cov);

}  // namespace rfanova
