#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace rfanova {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Hyperparameters of the composite kernel
///
///   k(u, v) = theta0 * exp(-1/2 sum_q theta_q (u_q - v_q)^2) + sum_q eta_q u_q v_q
///
/// theta0 > 0 and theta_q, eta_q >= 0 make k positive semidefinite.
struct KernelParams {
  double theta0 = 1.0;
  Eigen::VectorXd theta;  // inverse squared length-scales, length p
  Eigen::VectorXd eta;    // linear-term weights, length p

  static KernelParams isotropic(Eigen::Index p, double theta0, double theta, double eta);

  Eigen::Index dim() const { return theta.size(); }
  /// 2p + 1 entries: theta0, theta_1..theta_p, eta_1..eta_p.
  Eigen::Index num_params() const { return 2 * dim() + 1; }
  bool valid() const;

  /// Packed natural-scale vector in the order of num_params().
  Eigen::VectorXd pack() const;
  static KernelParams unpack(const Eigen::VectorXd& packed);
};

double eval_kernel(const Eigen::Ref<const Eigen::VectorXd>& u1,
                   const Eigen::Ref<const Eigen::VectorXd>& u2, const KernelParams& params);

/// Gram matrix over the rows of `covariates` (n x p).
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& covariates, const KernelParams& params);

/// dK/d(param) for every packed parameter: theta0, theta_1..p, eta_1..p.
std::vector<Eigen::MatrixXd> kernel_grad(const Eigen::MatrixXd& covariates,
                                         const KernelParams& params);

/// k(u_star, row_k) for every row.
Eigen::VectorXd cross_kernel(const Eigen::Ref<const Eigen::VectorXd>& u_star,
                             const Eigen::MatrixXd& covariates, const KernelParams& params);

/// Relative jitter added to the diagonal before any factorization of K.
inline constexpr double kKernelJitter = 1e-8;

/// K + kKernelJitter * mean(diag K) * I.
Eigen::MatrixXd jittered(const Eigen::MatrixXd& K);

/// Derivatives of jittered(K): the diagonal shift moves with the parameters too.
std::vector<Eigen::MatrixXd> jittered_grad(std::vector<Eigen::MatrixXd> grads);

}  // namespace rfanova
