#include "rfanova/kernels.hpp"

#include <cmath>
#include <string>

namespace rfanova {

KernelParams KernelParams::isotropic(Eigen::Index p, double theta0, double theta, double eta) {
  KernelParams k;
  k.theta0 = theta0;
  k.theta = Eigen::VectorXd::Constant(p, theta);
  k.eta = Eigen::VectorXd::Constant(p, eta);
  return k;
}

bool KernelParams::valid() const {
  return std::isfinite(theta0) && theta0 > 0.0 && theta.size() == eta.size() &&
         theta.allFinite() && eta.allFinite() && (theta.array() >= 0.0).all() &&
         (eta.array() >= 0.0).all();
}

Eigen::VectorXd KernelParams::pack() const {
  Eigen::VectorXd v(num_params());
  v(0) = theta0;
  v.segment(1, dim()) = theta;
  v.segment(1 + dim(), dim()) = eta;
  return v;
}

KernelParams KernelParams::unpack(const Eigen::VectorXd& packed) {
  if (packed.size() < 1 || packed.size() % 2 == 0) {
    throw DimensionError("packed kernel parameters must have odd length 2p+1");
  }
  const Eigen::Index p = (packed.size() - 1) / 2;
  KernelParams k;
  k.theta0 = packed(0);
  k.theta = packed.segment(1, p);
  k.eta = packed.segment(1 + p, p);
  return k;
}

namespace {

void check_dims(Eigen::Index got, const KernelParams& params) {
  if (got != params.dim()) {
    throw DimensionError("covariate dimension " + std::to_string(got) +
                         " does not match kernel dimension " + std::to_string(params.dim()));
  }
}

}  // namespace

double eval_kernel(const Eigen::Ref<const Eigen::VectorXd>& u1,
                   const Eigen::Ref<const Eigen::VectorXd>& u2, const KernelParams& params) {
  check_dims(u1.size(), params);
  check_dims(u2.size(), params);
  const double quad = (params.theta.array() * (u1 - u2).array().square()).sum();
  const double linear = (params.eta.array() * u1.array() * u2.array()).sum();
  return params.theta0 * std::exp(-0.5 * quad) + linear;
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& covariates, const KernelParams& params) {
  check_dims(covariates.cols(), params);
  const Eigen::Index n = covariates.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index m = 0; m <= l; ++m) {
      const double v = eval_kernel(covariates.row(l).transpose(), covariates.row(m).transpose(), params);
      K(l, m) = v;
      K(m, l) = v;
    }
  }
  if (!K.allFinite()) throw NumericError("kernel matrix has non-finite entries");
  return K;
}

std::vector<Eigen::MatrixXd> kernel_grad(const Eigen::MatrixXd& covariates,
                                         const KernelParams& params) {
  check_dims(covariates.cols(), params);
  const Eigen::Index n = covariates.rows();
  const Eigen::Index p = params.dim();
  std::vector<Eigen::MatrixXd> grads(static_cast<std::size_t>(2 * p + 1), Eigen::MatrixXd(n, n));
  for (Eigen::Index l = 0; l < n; ++l) {
    for (Eigen::Index m = 0; m <= l; ++m) {
      const Eigen::ArrayXd diff2 = (covariates.row(l) - covariates.row(m)).array().square().transpose();
      const double se = std::exp(-0.5 * (params.theta.array() * diff2).sum());
      auto set = [&](Eigen::Index idx, double v) {
        grads[static_cast<std::size_t>(idx)](l, m) = v;
        grads[static_cast<std::size_t>(idx)](m, l) = v;
      };
      set(0, se);
      for (Eigen::Index q = 0; q < p; ++q) {
        set(1 + q, -0.5 * params.theta0 * se * diff2(q));
        set(1 + p + q, covariates(l, q) * covariates(m, q));
      }
    }
  }
  for (const auto& g : grads) {
    if (!g.allFinite()) throw NumericError("kernel gradient has non-finite entries");
  }
  return grads;
}

Eigen::VectorXd cross_kernel(const Eigen::Ref<const Eigen::VectorXd>& u_star,
                             const Eigen::MatrixXd& covariates, const KernelParams& params) {
  check_dims(u_star.size(), params);
  check_dims(covariates.cols(), params);
  Eigen::VectorXd k(covariates.rows());
  for (Eigen::Index l = 0; l < covariates.rows(); ++l) {
    k(l) = eval_kernel(u_star, covariates.row(l).transpose(), params);
  }
  return k;
}

Eigen::MatrixXd jittered(const Eigen::MatrixXd& K) {
  Eigen::MatrixXd out = K;
  out.diagonal().array() += kKernelJitter * K.diagonal().mean();
  return out;
}

std::vector<Eigen::MatrixXd> jittered_grad(std::vector<Eigen::MatrixXd> grads) {
  for (auto& g : grads) {
    g.diagonal().array() += kKernelJitter * g.diagonal().mean();
  }
  return grads;
}

}  // namespace rfanova
