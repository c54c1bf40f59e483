#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace rfanova {

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class OrderError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Roughness operator  L phi = omega0 phi + omega1 D phi + D^2 phi  with constant weights.
struct DerivativeOperator {
  double omega0 = 0.0;
  double omega1 = 0.0;

  bool pure_second_derivative() const { return omega0 == 0.0 && omega1 == 0.0; }
};

/// Clamped B-spline basis on [a, b]. `order` is degree + 1.
class BSplineBasis {
 public:
  BSplineBasis(int order, Eigen::VectorXd interior_knots, double a, double b);

  /// `num_basis` functions with equally spaced interior knots.
  static BSplineBasis uniform(int order, int num_basis, double a, double b);

  int order() const { return order_; }
  int num_basis() const { return static_cast<int>(interior_.size()) + order_; }
  double lower() const { return a_; }
  double upper() const { return b_; }
  const Eigen::VectorXd& interior_knots() const { return interior_; }
  const Eigen::VectorXd& knots() const { return knots_; }

  /// Phi(t); throws DomainError outside [a, b].
  Eigen::VectorXd eval(double t) const;
  /// Row d holds the d-th derivative of Phi(t), d = 0..max_deriv.
  Eigen::MatrixXd eval_derivs(double t, int max_deriv) const;
  /// n x L matrix whose rows are Phi(t_k)^T.
  Eigen::MatrixXd design(const Eigen::VectorXd& times) const;

 private:
  int order_;
  double a_;
  double b_;
  Eigen::VectorXd interior_;
  Eigen::VectorXd knots_;

  Eigen::Index span_index(double t) const;
};

Eigen::VectorXd eval_basis(const BSplineBasis& basis, double t);

/// beta(t) = B^T Phi(t) = (mu(t), alpha_1(t), ..., alpha_I(t)).
Eigen::VectorXd eval_beta(const Eigen::MatrixXd& B, const BSplineBasis& basis, double t);

/// L_PhiPhi = int_a^b [L Phi][L Phi]^T dt by Gauss-Legendre on every knot span.
Eigen::MatrixXd penalty_matrix(const BSplineBasis& basis, const DerivativeOperator& op = {});

/// lambda * sum_c B_c^T L_PhiPhi B_c over the columns of B.
double penalty_value(const Eigen::MatrixXd& B, const Eigen::MatrixXd& penalty, double lambda);

/// Basis block of the fit config.
struct BasisConfig {
  int order = 4;
  int num_basis = 0;  // 0 selects min(floor(n/2), 15), raised to `order` if needed
  DerivativeOperator op;

  int resolve_num_basis(long max_curve_length) const;
};

}  // namespace rfanova
