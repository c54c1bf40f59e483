#pragma once

// Reference implementations used only by the tests. They are written from the
// textbook definitions and deliberately share no code with the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

/// Cox-de Boor recursion for B_{j,k}(t) on a full knot vector; right end
/// handled by closing the last non-empty interval.
inline double cox_de_boor(const Eigen::VectorXd& knots, int j, int order, double t) {
  const double right = knots(knots.size() - 1);
  if (order == 1) {
    const double a = knots(j), b = knots(j + 1);
    if (a <= t && t < b) return 1.0;
    if (t == right && b == right && a < b) return 1.0;
    return 0.0;
  }
  double out = 0.0;
  const double d1 = knots(j + order - 1) - knots(j);
  const double d2 = knots(j + order) - knots(j + 1);
  if (d1 > 0) out += (t - knots(j)) / d1 * cox_de_boor(knots, j, order - 1, t);
  if (d2 > 0) out += (knots(j + order) - t) / d2 * cox_de_boor(knots, j + 1, order - 1, t);
  return out;
}

/// Clamped knot vector with `order` repeats at each end.
inline Eigen::VectorXd clamped_knots(int order, const Eigen::VectorXd& interior, double a, double b) {
  Eigen::VectorXd k(interior.size() + 2 * order);
  k.head(order).setConstant(a);
  k.segment(order, interior.size()) = interior;
  k.tail(order).setConstant(b);
  return k;
}

inline Eigen::VectorXd basis_values(const Eigen::VectorXd& knots, int order, double t) {
  const int L = static_cast<int>(knots.size()) - order;
  Eigen::VectorXd v(L);
  for (int j = 0; j < L; ++j) v(j) = cox_de_boor(knots, j, order, t);
  return v;
}

/// Second derivative by a five-point central stencil of the Cox-de Boor values.
inline Eigen::VectorXd basis_second_derivative(const Eigen::VectorXd& knots, int order, double t, double h) {
  return (-basis_values(knots, order, t + 2 * h) + 16 * basis_values(knots, order, t + h) -
          30 * basis_values(knots, order, t) + 16 * basis_values(knots, order, t - h) -
          basis_values(knots, order, t - 2 * h)) /
         (12 * h * h);
}

/// Composite Simpson rule of f over every knot span, `panels` (even) per span.
inline Eigen::MatrixXd simpson_gram(const Eigen::VectorXd& breaks,
                                    const std::function<Eigen::VectorXd(double)>& f, int panels) {
  Eigen::MatrixXd G;
  for (Eigen::Index s = 0; s + 1 < breaks.size(); ++s) {
    const double a = breaks(s), b = breaks(s + 1);
    if (!(b > a)) continue;
    const double h = (b - a) / panels;
    for (int k = 0; k <= panels; ++k) {
      // stay strictly inside the span so one-sided pieces are used at the ends
      const double t = std::clamp(a + k * h, a + 1e-9 * (b - a), b - 1e-9 * (b - a));
      const double w = (k == 0 || k == panels) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      const Eigen::VectorXd v = f(t);
      if (G.size() == 0) G = Eigen::MatrixXd::Zero(v.size(), v.size());
      G += (w * h / 3.0) * v * v.transpose();
    }
  }
  return G;
}

/// Composite kernel straight from its definition.
inline double kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v, double theta0,
                     const Eigen::VectorXd& theta, const Eigen::VectorXd& eta) {
  double quad = 0.0, lin = 0.0;
  for (Eigen::Index q = 0; q < u.size(); ++q) {
    quad += theta(q) * (u(q) - v(q)) * (u(q) - v(q));
    lin += eta(q) * u(q) * v(q);
  }
  return theta0 * std::exp(-0.5 * quad) + lin;
}

/// log N(y; m, S) by an explicit eigen-decomposition.
inline double gaussian_log_density(const Eigen::VectorXd& y, const Eigen::VectorXd& m, const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const Eigen::VectorXd r = es.eigenvectors().transpose() * (y - m);
  double quad = 0.0, logdet = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    quad += r(k) * r(k) / es.eigenvalues()(k);
    logdet += std::log(es.eigenvalues()(k));
  }
  return -0.5 * (static_cast<double>(y.size()) * std::log(2 * std::numbers::pi) + logdet + quad);
}

struct GpPrediction {
  double mean;
  double variance;
};

/// Standard GP regression with noise variance sigma2, using a dense solve.
inline GpPrediction gp_regression(const Eigen::MatrixXd& K, const Eigen::VectorXd& y, const Eigen::VectorXd& m,
                                  const Eigen::VectorXd& k_star, double k_ss, double m_star, double sigma2) {
  const Eigen::MatrixXd A = K + sigma2 * Eigen::MatrixXd::Identity(K.rows(), K.cols());
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  const Eigen::VectorXd w = lu.solve(y - m);
  const Eigen::VectorXd v = lu.solve(k_star);
  return {m_star + k_star.dot(w), k_ss - k_star.dot(v) + sigma2};
}

/// One-point EMTD density written from the display, without log1p.
inline double emtd_density(double z, double nu, double sigma2) {
  const double c = 2.0 * (nu - 1.0) * sigma2;
  return std::exp(std::lgamma(nu + 0.5) - std::lgamma(nu)) / std::sqrt(std::numbers::pi * c) *
         std::pow(1.0 + z * z / c, -(nu + 0.5));
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Relative error of a gradient vector against a reference.
inline double relative_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).norm() / std::max(want.norm(), 1e-8);
}

inline Eigen::MatrixXd random_psd(int n, std::mt19937_64& rng, int rank = -1) {
  std::normal_distribution<double> nd;
  const int r = rank < 0 ? n : rank;
  Eigen::MatrixXd A(n, r);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r; ++j) A(i, j) = nd(rng);
  return A * A.transpose() / r;
}

}  // namespace oracle
