#include "rfanova/kernels.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace rfanova;

namespace {

KernelParams random_params(Eigen::Index p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 2.0);
  KernelParams k;
  k.theta0 = u(rng);
  k.theta.resize(p);
  k.eta.resize(p);
  for (Eigen::Index q = 0; q < p; ++q) {
    k.theta(q) = u(rng);
    k.eta(q) = 0.5 * u(rng);
  }
  return k;
}

Eigen::MatrixXd random_covariates(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd U(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index q = 0; q < p; ++q) U(i, q) = u(rng);
  return U;
}

}  // namespace

TEST_CASE("kernel matches its definition") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto kp = random_params(2, rng);
    const Eigen::MatrixXd U = random_covariates(5, 2, rng);
    const Eigen::MatrixXd K = kernel_matrix(U, kp);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        CHECK(K(i, j) == doctest::Approx(oracle::kernel(U.row(i).transpose(), U.row(j).transpose(), kp.theta0,
                                                        kp.theta, kp.eta))
                             .epsilon(1e-14));
  }
}

TEST_CASE("scalar examples") {
  const auto kp = KernelParams::isotropic(1, 0.1, 10.0, 0.1);
  Eigen::VectorXd u(1), v(1);
  u << 0.2;
  v << 0.2;
  CHECK(eval_kernel(u, v, kp) == doctest::Approx(0.1 + 0.1 * 0.04).epsilon(1e-15));
  v << 0.0;
  CHECK(eval_kernel(u, v, kp) == doctest::Approx(0.1 * std::exp(-0.5 * 10 * 0.04)).epsilon(1e-15));
}

TEST_CASE("kernel matrices are symmetric PSD") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    const auto kp = random_params(1 + rep % 3, rng);
    const Eigen::MatrixXd K = kernel_matrix(random_covariates(8, 1 + rep % 3, rng), kp);
    CHECK((K - K.transpose()).cwiseAbs().maxCoeff() == 0.0);
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues().minCoeff();
    CHECK(min_eig >= -1e-12 * K.diagonal().maxCoeff());
  }
}

TEST_CASE("kernel_grad matches central differences") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index p = 1 + rep % 2;
    const auto kp = random_params(p, rng);
    const Eigen::MatrixXd U = random_covariates(6, p, rng);
    const auto grads = kernel_grad(U, kp);
    REQUIRE(static_cast<Eigen::Index>(grads.size()) == kp.num_params());
    const Eigen::VectorXd x = kp.pack();
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double h = 1e-6;
      Eigen::VectorXd xp = x, xm = x;
      xp(k) += h;
      xm(k) -= h;
      const Eigen::MatrixXd fd =
          (kernel_matrix(U, KernelParams::unpack(xp)) - kernel_matrix(U, KernelParams::unpack(xm))) / (2 * h);
      const Eigen::Map<const Eigen::VectorXd> got(grads[k].data(), grads[k].size());
      const Eigen::Map<const Eigen::VectorXd> want(fd.data(), fd.size());
      CHECK(oracle::relative_error(got, want) < 1e-5);
    }
  }
}

TEST_CASE("cross kernel agrees with the Gram matrix") {
  std::mt19937_64 rng(4);
  const auto kp = random_params(2, rng);
  const Eigen::MatrixXd U = random_covariates(5, 2, rng);
  const Eigen::MatrixXd K = kernel_matrix(U, kp);
  const Eigen::VectorXd k = cross_kernel(U.row(3).transpose(), U, kp);
  CHECK((k - K.col(3)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("pack and unpack round trip") {
  std::mt19937_64 rng(5);
  const auto kp = random_params(3, rng);
  const auto back = KernelParams::unpack(kp.pack());
  CHECK(back.theta0 == kp.theta0);
  CHECK(back.theta == kp.theta);
  CHECK(back.eta == kp.eta);
  CHECK(kp.num_params() == 7);
  CHECK(kp.valid());
}

TEST_CASE("jitter is proportional to the mean diagonal") {
  Eigen::MatrixXd K = Eigen::MatrixXd::Identity(3, 3) * 2.0;
  const Eigen::MatrixXd J = jittered(K);
  CHECK(J(0, 0) == doctest::Approx(2.0 + kKernelJitter * 2.0).epsilon(1e-15));
  CHECK(J(0, 1) == 0.0);
}

TEST_CASE("invalid parameters are rejected") {
  KernelParams kp = KernelParams::isotropic(1, -1.0, 1.0, 0.1);
  CHECK_FALSE(kp.valid());
  Eigen::MatrixXd U(2, 1);
  U << 0, 1;
  const auto ok = KernelParams::isotropic(2, 1.0, 1.0, 0.1);
  CHECK_THROWS_AS(kernel_matrix(U, ok), DimensionError);
}

TEST_CASE("limits of the cross kernel") {
  Eigen::MatrixXd U(3, 1);
  U << 0.1, 0.5, 0.9;
  const auto sharp = KernelParams::isotropic(1, 0.7, 1e8, 0.0);
  const Eigen::VectorXd k = cross_kernel(U.row(1).transpose(), U, sharp);
  CHECK(k(1) == doctest::Approx(0.7));
  CHECK(std::abs(k(0)) < 1e-100);
  CHECK(std::abs(k(2)) < 1e-100);

  const auto kp = KernelParams::isotropic(1, 0.7, 2.0, 5.0);
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(3, 1);
  CHECK((cross_kernel(Eigen::VectorXd::Zero(1), Z, kp).array() == 0.7).all());

  const auto flat = KernelParams::isotropic(1, 1.0, 0.0, 0.0);
  const auto grads = kernel_grad(U, flat);
  CHECK((grads[0].array() == 1.0).all());
  const auto lin = kernel_grad(U, kp);
  CHECK(lin[2](0, 2) == doctest::Approx(0.1 * 0.9));
}

TEST_CASE("model-1 kernel value and duplicated rows") {
  const auto kp = KernelParams::isotropic(1, 0.1, 10.0, 0.1);
  Eigen::VectorXd u(1);
  u << 0.2;
  CHECK(eval_kernel(u, u, kp) == doctest::Approx(0.104).epsilon(1e-15));
  Eigen::MatrixXd U(3, 1);
  U << 0.2, 0.2, 0.4;
  const Eigen::MatrixXd K = kernel_matrix(U, kp);
  CHECK(Eigen::FullPivLU<Eigen::MatrixXd>(K).rank() < 3);
  CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues().minCoeff() >= -1e-12);
}
