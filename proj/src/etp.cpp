#include "rfanova/etp.hpp"

#include "rfanova/kernels.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace rfanova {

void EtpParams::validate() const {
  if (!(nu > 1.0) || !std::isfinite(nu)) {
    throw ParameterError("ETP shape nu must be > 1 (got " + std::to_string(nu) + ")");
  }
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw ParameterError("ETP scale sigma2 must be > 0 (got " + std::to_string(sigma2) + ")");
  }
}

double emtd_logpdf(const Eigen::Ref<const Eigen::VectorXd>& z,
                   const Eigen::Ref<const Eigen::VectorXd>& h, const EtpParams& params) {
  params.validate();
  if (z.size() != h.size() || z.size() < 1) throw DimensionError("emtd_logpdf: size mismatch");
  const double n = static_cast<double>(z.size());
  const double c = 2.0 * (params.nu - 1.0) * params.sigma2;
  const double r2 = (z - h).squaredNorm();
  return -0.5 * n * std::log(std::numbers::pi * c) + std::lgamma(0.5 * n + params.nu) -
         std::lgamma(params.nu) - (0.5 * n + params.nu) * std::log1p(r2 / c);
}

double gaussian_logpdf(const Eigen::Ref<const Eigen::VectorXd>& z,
                       const Eigen::Ref<const Eigen::VectorXd>& h, double sigma2) {
  if (!(sigma2 > 0.0)) throw ParameterError("gaussian_logpdf: sigma2 must be > 0");
  if (z.size() != h.size()) throw DimensionError("gaussian_logpdf: size mismatch");
  const double n = static_cast<double>(z.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * (z - h).squaredNorm() / sigma2;
}

GDerivs g_derivs(double S, const EtpParams& params) {
  params.validate();
  const double a = 1.0 + 2.0 * params.nu;
  const double c = 2.0 * (params.nu - 1.0) * params.sigma2;
  const double q = c + S * S;
  return {a * S / q, a * (S * S - c) / (q * q)};
}

double g1_supremum(const EtpParams& params) {
  params.validate();
  const double c = 2.0 * (params.nu - 1.0) * params.sigma2;
  return (1.0 + 2.0 * params.nu) / (2.0 * std::sqrt(c));
}

Eigen::MatrixXd psd_cholesky(const Eigen::MatrixXd& cov) {
  const double scale = std::max(cov.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  for (double jitter : {0.0, 1e-12, 1e-10, 1e-8, 1e-6}) {
    Eigen::MatrixXd m = cov;
    m.diagonal().array() += jitter * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericError("covariance is not positive semidefinite (Cholesky failed after jitter)");
}

Eigen::VectorXd sample_etp(Eigen::Index n, const EtpParams& params, const Eigen::MatrixXd& cov,
                           std::mt19937_64& rng) {
  params.validate();
  if (cov.rows() != n || cov.cols() != n) throw DimensionError("sample_etp: covariance size");
  const Eigen::MatrixXd chol = psd_cholesky(cov);
  // 1/r ~ Gamma(shape nu, rate nu - 1)
  std::gamma_distribution<double> gamma(params.nu, 1.0 / (params.nu - 1.0));
  const double r = 1.0 / gamma(rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd w(n);
  for (Eigen::Index k = 0; k < n; ++k) w(k) = normal(rng);
  return std::sqrt(r) * (chol * w);
}

}  // namespace rfanova
