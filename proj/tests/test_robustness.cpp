#include "rfanova/robustness.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

using namespace rfanova;

namespace {

ModelFit probe_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto data = fixture::random_dataset(rng, 2, 2, 8);
  FitConfig cfg;
  cfg.policy = ExecPolicy::kSerial;
  cfg.lambda = 0.1;
  const Problem pb(data, cfg);
  FitState s = fixture::random_state(pb, rng);
  s.etp = {1.1, 0.1};
  return fixture::make_model(data, cfg, pb.basis(), s);
}

}  // namespace

TEST_CASE("TP score plateaus while the gaussian score grows") {
  const ModelFit m = probe_model(70);
  Eigen::VectorXd c(4);
  c << 0.0, 1e3, 1e4, 1e6;
  const BoundednessProbe p = score_boundedness_probe(m, m.data, 1, c);
  CHECK(std::abs(p.tp_score_norms(3) / p.tp_score_norms(1) - 1.0) < 0.05);
  CHECK(p.gp_score_norms(3) >= 100.0 * p.gp_score_norms(1));
  CHECK(p.tp_sup_estimate == p.tp_score_norms.maxCoeff());
  CHECK(p.tp_score_norms(0) ==
        doctest::Approx(stacked_score_norm(m.data, m.config, m.basis, m.state, Method::kTP)).epsilon(1e-14));

  ProbeOptions serial;
  serial.policy = ExecPolicy::kSerial;
  const BoundednessProbe q = score_boundedness_probe(m, m.data, 1, c, serial);
  CHECK(q.tp_score_norms == p.tp_score_norms);
  CHECK(q.gp_score_norms == p.gp_score_norms);
}

TEST_CASE("probe argument checks") {
  const ModelFit m = probe_model(71);
  Eigen::VectorXd bad(2);
  bad << 10.0, 1.0;
  CHECK_THROWS_AS(score_boundedness_probe(m, m.data, 0, bad), std::invalid_argument);
  Eigen::VectorXd ok(1);
  ok << 1.0;
  CHECK_THROWS_AS(score_boundedness_probe(m, m.data, 9, ok), std::out_of_range);
  ProbeOptions far;
  far.observation = 100;
  CHECK_THROWS_AS(score_boundedness_probe(m, m.data, 0, ok, far), std::out_of_range);
}

TEST_CASE("regret term closed forms") {
  CHECK(regret_term(Eigen::MatrixXd::Zero(4, 4), 0.3) == 0.0);
  CHECK(regret_term(0.3 * Eigen::MatrixXd::Identity(5, 5), 0.3) == doctest::Approx(5 * std::log(2.0)).epsilon(1e-14));
  Eigen::MatrixXd one(1, 1);
  one << 0.104;
  CHECK(regret_term(one, 0.1) == doctest::Approx(std::log(1.0 + 1.04)).epsilon(1e-14));
  CHECK_THROWS(regret_term(Eigen::MatrixXd::Zero(2, 3), 1.0));
  CHECK_THROWS(regret_term(Eigen::MatrixXd::Zero(2, 2), 0.0));

  std::mt19937_64 rng(72);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::MatrixXd K = oracle::random_psd(6, rng, 1 + rep % 6);
    const Eigen::MatrixXd extra = oracle::random_psd(6, rng, 1);
    const double sigma2 = 0.05 + 0.01 * rep;
    const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(K).eigenvalues();
    const double want = (1.0 + ev.array().cwiseMax(0.0) / sigma2).log().sum();
    CHECK(regret_term(K, sigma2) == doctest::Approx(want).epsilon(1e-10));
    CHECK(regret_term(K + extra, sigma2) >= regret_term(K, sigma2));
  }
}

TEST_CASE("regret growth: sublinear for a smooth kernel, linear for white noise") {
  const auto smooth = KernelParams::isotropic(1, 0.1, 10.0, 0.1);
  const auto rows = regret_growth_report(smooth, 0.1, {5, 20, 80}, 0.0, 0.4, 20, 7);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1].ratio < rows[0].ratio);
  CHECK(rows[2].ratio < rows[1].ratio);
  CHECK(rows[0].ratio == doctest::Approx(rows[0].mean_regret / 5));

  const auto white = KernelParams::isotropic(1, 0.5, 1e12, 0.0);
  const auto flat = regret_growth_report(white, 0.1, {5, 40}, 0.0, 1.0, 5, 8);
  CHECK(flat[0].ratio == doctest::Approx(std::log(6.0)).epsilon(1e-6));
  CHECK(flat[1].ratio == doctest::Approx(std::log(6.0)).epsilon(1e-6));

  const auto serial = regret_growth_report(smooth, 0.1, {5, 20, 80}, 0.0, 0.4, 20, 7, ExecPolicy::kSerial);
  for (std::size_t k = 0; k < 3; ++k) CHECK(serial[k].mean_regret == rows[k].mean_regret);
  CHECK_THROWS(regret_growth_report(smooth, 0.1, {0}, 0.0, 1.0, 5, 1));
}
