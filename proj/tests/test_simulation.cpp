#include "rfanova/simulation.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <doctest.h>

#include <sstream>

using namespace rfanova;

TEST_CASE("design functions") {
  CHECK(SimDesign::mu(1.5) == 2.25);
  for (double t : {0.0, 0.7, 2.0}) {
    double total = 0.0;
    for (int i = 1; i <= SimDesign::kLevels; ++i) total += SimDesign::alpha(i, t);
    CHECK(std::abs(total) < 1e-15);
  }
  CHECK(SimDesign::alpha(1, 0.0) == 0.5);
  CHECK_THROWS(SimDesign::alpha(4, 0.0));
  const auto k = SimDesign::kernel();
  CHECK(k.theta0 == 0.1);
  CHECK(k.theta(0) == 10.0);
  CHECK(k.eta(0) == 0.1);
}

TEST_CASE("model 3 truth is the mean structure") {
  SimConfig cfg;
  cfg.model_id = 3;
  std::mt19937_64 rng(60);
  const SimulatedData sim = generate(cfg, rng);
  REQUIRE(sim.grid.size() == 61);
  CHECK(sim.grid(30) == doctest::Approx(1.0).epsilon(1e-15));
  for (std::size_t i = 0; i < sim.truth.size(); ++i) {
    const int level = sim.train.curves()[i].level;
    CHECK(sim.truth[i](30) == doctest::Approx(1.0 + SimDesign::alpha(level, 1.0)).epsilon(1e-14));
  }
}

TEST_CASE("generated split and curve layout") {
  SimConfig cfg;
  std::mt19937_64 rng(61);
  const SimulatedData sim = generate(cfg, rng);
  CHECK(sim.train.num_curves() == 6);
  CHECK(sim.test.num_curves() == 6);
  CHECK(sim.train_index.size() == 11);
  CHECK(sim.test_index.size() == 50);
  CHECK(std::is_sorted(sim.train_index.begin(), sim.train_index.end()));
  for (const auto& c : sim.train.curves()) {
    CHECK(c.size() == 11);
    CHECK((c.covariates - 0.2 * c.times).cwiseAbs().maxCoeff() < 1e-15);
  }
  CHECK(sim.train.curves()[3].id == "2:2");
  CHECK(sim.train.covariate_rule().scale == 0.2);
}

TEST_CASE("generation is deterministic under a fixed seed") {
  SimConfig cfg;
  for (int rep = 0; rep < 100; ++rep) {
    cfg.model_id = 1 + rep % 3;
    std::mt19937_64 a(1000 + rep), b(1000 + rep);
    const SimulatedData x = generate(cfg, a), y = generate(cfg, b);
    CHECK(x.train_index == y.train_index);
    for (std::size_t i = 0; i < x.train.num_curves(); ++i) {
      CHECK(x.train.curves()[i].values == y.train.curves()[i].values);
      CHECK(x.test.curves()[i].values == y.test.curves()[i].values);
    }
  }
}

TEST_CASE("contamination changes exactly one value") {
  SimConfig cfg;
  std::mt19937_64 rng(62);
  const SimulatedData sim = generate(cfg, rng);
  std::pair<std::size_t, Eigen::Index> picked;
  const FunctionalDataset dirty = contaminate(sim.train, Disturbance::kConst2, rng, &picked);
  int changed = 0;
  for (std::size_t i = 0; i < dirty.num_curves(); ++i) {
    const Eigen::VectorXd d = dirty.curves()[i].values - sim.train.curves()[i].values;
    for (Eigen::Index k = 0; k < d.size(); ++k) {
      if (d(k) != 0.0) {
        ++changed;
        CHECK(i == picked.first);
        CHECK(k == picked.second);
        CHECK(d(k) == doctest::Approx(2.0).epsilon(1e-14));
      }
    }
  }
  CHECK(changed == 1);
  const FunctionalDataset same = contaminate(sim.train, Disturbance::kNone, rng);
  for (std::size_t i = 0; i < same.num_curves(); ++i) CHECK(same.curves()[i].values == sim.train.curves()[i].values);
  CHECK(disturbance_from_string(to_string(Disturbance::kT3)) == Disturbance::kT3);
  CHECK_THROWS(disturbance_from_string("x"));
}

TEST_CASE("contaminated observation is chosen uniformly") {
  SimConfig cfg;
  std::mt19937_64 rng(63);
  const SimulatedData sim = generate(cfg, rng);
  const std::size_t total = sim.train.total_observations();
  std::vector<double> counts(total, 0.0);
  const int draws = 10000;
  for (int s = 0; s < draws; ++s) {
    std::mt19937_64 r(static_cast<std::uint64_t>(s));
    std::pair<std::size_t, Eigen::Index> picked;
    contaminate(sim.train, Disturbance::kConst2, r, &picked);
    counts[picked.first * 11 + static_cast<std::size_t>(picked.second)] += 1.0;
  }
  const double expected = static_cast<double>(draws) / static_cast<double>(total);
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(total - 1));
  CHECK(chi2 < boost::math::quantile(dist, 0.999));
}

TEST_CASE("prediction error and mean squared error") {
  Eigen::VectorXd yhat(4), obs(4), truth(4);
  yhat << 1, 2, 3, 4;
  obs << 1, 1, 5, 4;
  truth << 0, 2, 3, 6;
  const PeMse r = pe_mse(yhat, obs, truth);
  CHECK(r.pe == doctest::Approx(0.75));
  CHECK(r.mse == doctest::Approx(5.0 / 4.0));
  const PeMse zero = pe_mse(yhat, yhat, yhat);
  CHECK(zero.pe == 0.0);
  CHECK(zero.mse == 0.0);
  CHECK_THROWS(pe_mse(yhat, obs.head(3), truth));
  CHECK_THROWS(pe_mse(Eigen::VectorXd(), Eigen::VectorXd(), Eigen::VectorXd()));
}

TEST_CASE("pairwise sum and paired test") {
  std::vector<double> x(1000);
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = 0.1 * static_cast<double>(k);
  CHECK(pairwise_sum(x.data(), x.size()) == doctest::Approx(0.1 * 999 * 1000 / 2).epsilon(1e-14));
  CHECK(pairwise_sum(x.data(), 0) == 0.0);

  const std::vector<double> a{1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<double> b{1.5, 2.4, 3.7, 4.4, 5.6};
  const PairedTest t = paired_t_test_less(a, b);
  // differences -0.5 -0.4 -0.7 -0.4 -0.6: mean -0.52, sd 0.1303840
  CHECK(t.mean_diff == doctest::Approx(-0.52));
  CHECK(t.t_stat == doctest::Approx(-0.52 / (0.130384048104053 / std::sqrt(5.0))).epsilon(1e-10));
  CHECK(t.p_value < 1e-3);
  CHECK(paired_t_test_less(b, a).p_value > 0.999);
  CHECK(t.n == 5);
  CHECK_THROWS(paired_t_test_less(a, std::vector<double>{1.0}));
}

TEST_CASE("replicate seeds are distinct and stable") {
  CHECK(replicate_seed(42, 0) == replicate_seed(42, 0));
  CHECK(replicate_seed(42, 0) != replicate_seed(42, 1));
  CHECK(replicate_seed(42, 0) != replicate_seed(43, 0));
}

TEST_CASE("experiment rerun is bit-identical and the table is well formed") {
  SimConfig cfg;
  cfg.replications = 3;
  cfg.fit.outer_max = 10;
  const ExperimentResult a = run_experiment(cfg);
  const ExperimentResult b = run_experiment(cfg);
  REQUIRE(a.methods.size() == 3);
  for (std::size_t m = 0; m < 3; ++m) {
    CHECK(a.methods[m].pe == b.methods[m].pe);
    CHECK(a.methods[m].mse == b.methods[m].mse);
  }
  CHECK(a.failed + static_cast<int>(a.retained.size()) == 3);
  std::ostringstream out;
  write_table_csv(a, out);
  const std::string text = out.str();
  CHECK(text.rfind("# replicates=", 0) == 0);
  CHECK(text.find("method,metric,mean,sd") != std::string::npos);
  CHECK(text.find("TP(tau=0),MSE,") != std::string::npos);

  const auto single = run_replicate(cfg, static_cast<int>(a.retained[0]));
  CHECK(single[0].pe == a.methods[0].pe[0]);
}

TEST_CASE("configuration validation") {
  SimConfig cfg;
  cfg.model_id = 4;
  CHECK_THROWS(cfg.validate());
  cfg = SimConfig{};
  cfg.replications = 0;
  CHECK_THROWS(cfg.validate());
  cfg = SimConfig{};
  cfg.n_train = 61;
  CHECK_THROWS(cfg.validate());
}
