#include "rfanova/gauss_approx.hpp"

#include "rfanova/kernels.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <numbers>

namespace rfanova {

SiteTerms site_terms(double S, const EtpParams& params, Likelihood lik) {
  params.validate();
  SiteTerms s;
  const double S2 = S * S;
  if (lik == Likelihood::kGaussian) {
    const double v = params.sigma2;
    s.g = -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * S2 / v;
    s.g1 = S / v;
    s.g2 = -1.0 / v;
    s.g3 = 0.0;
    s.g_sigma2 = -0.5 / v + 0.5 * S2 / (v * v);
    s.g1_sigma2 = -S / (v * v);
    s.g2_sigma2 = 1.0 / (v * v);
    return s;
  }
  const double nu = params.nu;
  const double a = 1.0 + 2.0 * nu;
  const double c = 2.0 * (nu - 1.0) * params.sigma2;
  const double q = c + S2;
  const double q2 = q * q;
  const double q3 = q2 * q;
  const double log_ratio = std::log1p(S2 / c);
  s.g = -0.5 * std::log(std::numbers::pi * c) + std::lgamma(0.5 + nu) - std::lgamma(nu) -
        0.5 * a * log_ratio;
  s.g1 = a * S / q;
  s.g2 = a * (S2 - c) / q2;
  s.g3 = -2.0 * a * S * (3.0 * c - S2) / q3;

  // Partials in c = 2 (nu - 1) sigma2 with a fixed.
  const double g_c = -0.5 / c + 0.5 * a * S2 / (c * q);
  const double g1_c = -a * S / q2;
  const double g2_c = a * (c - 3.0 * S2) / q3;
  const double dc_dsigma2 = 2.0 * (nu - 1.0);
  const double dc_dnu = 2.0 * params.sigma2;
  s.g_sigma2 = g_c * dc_dsigma2;
  s.g1_sigma2 = g1_c * dc_dsigma2;
  s.g2_sigma2 = g2_c * dc_dsigma2;
  s.g_nu = boost::math::digamma(0.5 + nu) - boost::math::digamma(nu) - log_ratio + g_c * dc_dnu;
  s.g1_nu = 2.0 * S / q + g1_c * dc_dnu;
  s.g2_nu = 2.0 * (S2 - c) / q2 + g2_c * dc_dnu;
  return s;
}

TaylorSite taylor_site(double y, double m, double tau0, const EtpParams& params, Likelihood lik) {
  const SiteTerms s = site_terms(y - m - tau0, params, lik);
  return {s.g1 - s.g2 * tau0, -s.g2};
}

namespace {

struct SiteState {
  Eigen::VectorXd g1;
  Eigen::VectorXd g2;
  double g_sum = 0.0;
};

SiteState evaluate_sites(const Eigen::VectorXd& residual, const Eigen::VectorXd& tau,
                         const EtpParams& params, Likelihood lik) {
  const Eigen::Index n = residual.size();
  SiteState st{Eigen::VectorXd(n), Eigen::VectorXd(n), 0.0};
  for (Eigen::Index k = 0; k < n; ++k) {
    const SiteTerms s = site_terms(residual(k) - tau(k), params, lik);
    st.g1(k) = s.g1;
    st.g2(k) = s.g2;
    st.g_sum += s.g;
  }
  return st;
}

Eigen::MatrixXd factor_precision(const Eigen::MatrixXd& K, const Eigen::VectorXd& sqrt_w) {
  Eigen::MatrixXd Bm = sqrt_w.asDiagonal() * K * sqrt_w.asDiagonal();
  Bm.diagonal().array() += 1.0;
  Eigen::LLT<Eigen::MatrixXd> llt(Bm);
  if (llt.info() != Eigen::Success) {
    throw NumericError("I + D^1/2 K D^1/2 is not positive definite");
  }
  return llt.matrixL();
}

}  // namespace

LatentPosterior find_mode(const Eigen::VectorXd& Y, const Eigen::VectorXd& mean,
                          const Eigen::MatrixXd& K, const EtpParams& params, Likelihood lik,
                          const ModeOptions& opts, const std::optional<Eigen::VectorXd>& warm_weights) {
  params.validate();
  const Eigen::Index n = Y.size();
  if (mean.size() != n || K.rows() != n || K.cols() != n) {
    throw DimensionError("find_mode: Y, mean and K sizes disagree");
  }
  LatentPosterior post;
  post.residual = Y - mean;
  post.K = K;
  post.etp = params;
  post.likelihood = lik;
  post.curvature_floor = opts.curvature_floor;

  Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
  if (warm_weights && warm_weights->size() == n) a = *warm_weights;
  Eigen::VectorXd tau = K * a;
  SiteState st = evaluate_sites(post.residual, tau, params, lik);
  double psi = st.g_sum - 0.5 * a.dot(tau);

  bool converged = false;
  int it = 0;
  while (it < opts.max_iter) {
    ++it;
    const Eigen::VectorXd w = (-st.g2).cwiseMax(opts.curvature_floor);
    const Eigen::VectorXd sw = w.cwiseSqrt();
    const Eigen::VectorXd b = w.cwiseProduct(tau) + st.g1;
    const Eigen::MatrixXd L = factor_precision(K, sw);
    const Eigen::VectorXd Kb = K * b;
    Eigen::VectorXd c = L.triangularView<Eigen::Lower>().solve(sw.cwiseProduct(Kb));
    const Eigen::VectorXd a_full =
        b - sw.cwiseProduct(L.transpose().triangularView<Eigen::Upper>().solve(c));
    const Eigen::VectorXd da = a_full - a;
    const Eigen::VectorXd dtau = K * a_full - tau;

    double step = 1.0;
    Eigen::VectorXd a_new = a_full;
    Eigen::VectorXd tau_new = tau + dtau;
    SiteState st_new = evaluate_sites(post.residual, tau_new, params, lik);
    double psi_new = st_new.g_sum - 0.5 * a_new.dot(tau_new);
    for (int h = 0; h < opts.max_halvings && !(psi_new >= psi - 1e-12 * (1.0 + std::abs(psi))); ++h) {
      step *= 0.5;
      a_new = a + step * da;
      tau_new = tau + step * dtau;
      st_new = evaluate_sites(post.residual, tau_new, params, lik);
      psi_new = st_new.g_sum - 0.5 * a_new.dot(tau_new);
    }
    const double change = (tau_new - tau).cwiseAbs().maxCoeff();
    a = a_new;
    tau = tau_new;
    st = st_new;
    psi = psi_new;
    if (change < opts.tol) {
      converged = true;
      break;
    }
  }

  post.mode = tau;
  post.weights = a;
  post.curvature = -st.g2;
  post.floored = post.curvature.cwiseMax(opts.curvature_floor);
  post.alpha = st.g1 + post.floored.cwiseProduct(tau);
  post.precision_factor = factor_precision(K, post.floored.cwiseSqrt());
  post.log_det = 2.0 * post.precision_factor.diagonal().array().log().sum();
  post.joint = psi;
  post.converged = converged;
  post.iterations = it;
  return post;
}

double approx_marginal_loglik(const LatentPosterior& post) { return post.joint - 0.5 * post.log_det; }

double approx_marginal_loglik(const Eigen::VectorXd& Y, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& K, const EtpParams& params, Likelihood lik) {
  return approx_marginal_loglik(find_mode(Y, mean, K, params, lik));
}

Eigen::MatrixXd precision_correction(const LatentPosterior& post) {
  const Eigen::VectorXd sw = post.floored.cwiseSqrt();
  const auto L = post.precision_factor.triangularView<Eigen::Lower>();
  Eigen::MatrixXd X = L.solve(Eigen::MatrixXd(sw.asDiagonal()));
  Eigen::MatrixXd R = X.transpose() * X;
  return 0.5 * (R + R.transpose());
}

Eigen::MatrixXd posterior_covariance(const LatentPosterior& post) {
  const Eigen::VectorXd sw = post.floored.cwiseSqrt();
  const auto L = post.precision_factor.triangularView<Eigen::Lower>();
  const Eigen::MatrixXd V = L.solve(sw.asDiagonal() * post.K);
  Eigen::MatrixXd omega = post.K - V.transpose() * V;
  return 0.5 * (omega + omega.transpose());
}

double stationarity_residual(const LatentPosterior& post) {
  Eigen::VectorXd r(post.mode.size());
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    r(k) = site_terms(post.residual(k) - post.mode(k), post.etp, post.likelihood).g1 - post.weights(k);
  }
  return r.cwiseAbs().maxCoeff();
}

MarginalGradient marginal_gradient(const LatentPosterior& post,
                                   const std::vector<Eigen::MatrixXd>& kernel_derivs,
                                   bool explicit_only) {
  const Eigen::Index n = post.mode.size();
  const Eigen::MatrixXd R = precision_correction(post);
  const Eigen::VectorXd omega_diag = (post.K - post.K * R * post.K).diagonal();

  std::vector<SiteTerms> sites(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    sites[static_cast<std::size_t>(k)] =
        site_terms(post.residual(k) - post.mode(k), post.etp, post.likelihood);
  }
  // D is floored; floored sites do not move with the parameters.
  auto active = [&](Eigen::Index k) { return post.curvature(k) > post.curvature_floor; };

  MarginalGradient grad;
  grad.mean.resize(n);
  Eigen::VectorXd s2(n);        // d(-1/2 log|B|)/d tau_k
  Eigen::VectorXd g1_sigma2(n);
  Eigen::VectorXd g1_nu(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& s = sites[static_cast<std::size_t>(k)];
    const bool on = active(k);
    s2(k) = on ? 0.5 * omega_diag(k) * s.g3 : 0.0;
    grad.mean(k) = s.g1 + s2(k);
    grad.sigma2 += s.g_sigma2 + (on ? 0.5 * omega_diag(k) * s.g2_sigma2 : 0.0);
    grad.nu += s.g_nu + (on ? 0.5 * omega_diag(k) * s.g2_nu : 0.0);
    g1_sigma2(k) = s.g1_sigma2;
    g1_nu(k) = s.g1_nu;
  }

  const auto& dK = kernel_derivs;
  grad.kernel.resize(static_cast<Eigen::Index>(dK.size()));
  for (std::size_t j = 0; j < dK.size(); ++j) {
    const Eigen::VectorXd Ca = dK[j] * post.weights;
    grad.kernel(static_cast<Eigen::Index>(j)) =
        0.5 * post.weights.dot(Ca) - 0.5 * (R.cwiseProduct(dK[j])).sum();
  }
  if (explicit_only) return grad;

  // Mode sensitivity: d tau/d psi = (I + K W)^-1 K dF/d psi with the unfloored Hessian W.
  Eigen::MatrixXd M = post.K * post.curvature.asDiagonal();
  M.diagonal().array() += 1.0;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
  const Eigen::VectorXd u = lu.transpose().solve(s2);
  const Eigen::VectorXd Ku = post.K * u;
  grad.mean -= post.curvature.cwiseProduct(Ku);
  grad.sigma2 += Ku.dot(g1_sigma2);
  grad.nu += Ku.dot(g1_nu);
  for (std::size_t j = 0; j < dK.size(); ++j) {
    grad.kernel(static_cast<Eigen::Index>(j)) += u.dot(dK[j] * post.weights);
  }
  return grad;
}

double independent_loglik(const Eigen::VectorXd& residual, const EtpParams& params, Likelihood lik) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < residual.size(); ++k) total += site_terms(residual(k), params, lik).g;
  return total;
}

MarginalGradient independent_gradient(const Eigen::VectorXd& residual, const EtpParams& params,
                                      Likelihood lik) {
  MarginalGradient grad;
  grad.mean.resize(residual.size());
  for (Eigen::Index k = 0; k < residual.size(); ++k) {
    const SiteTerms s = site_terms(residual(k), params, lik);
    grad.mean(k) = s.g1;
    grad.sigma2 += s.g_sigma2;
    grad.nu += s.g_nu;
  }
  return grad;
}

}  // namespace rfanova
