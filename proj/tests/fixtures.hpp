#pragma once

// Small random problems shared by the estimation, prediction and acceptance tests.

#include "rfanova/estimation.hpp"

#include <random>
#include <string>
#include <vector>

namespace fixture {

/// `levels` x `reps` curves with `n` random times on [0, 1], u = scale * t.
inline rfanova::FunctionalDataset random_dataset(std::mt19937_64& rng, int levels = 2, int reps = 2, int n = 6,
                                                 double scale = 0.5) {
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  std::normal_distribution<double> nd;
  std::student_t_distribution<double> heavy(2.0);
  std::vector<rfanova::Curve> curves;
  std::vector<std::string> labels;
  for (int i = 1; i <= levels; ++i) labels.push_back("L" + std::to_string(i));
  for (int i = 1; i <= levels; ++i) {
    for (int j = 1; j <= reps; ++j) {
      rfanova::Curve c;
      c.id = std::to_string(i) + "-" + std::to_string(j);
      c.level = i;
      c.replicate = j;
      std::vector<double> t(n);
      for (auto& x : t) x = ut(rng);
      t[0] = 0.0;
      t[n - 1] = 1.0;
      std::sort(t.begin(), t.end());
      c.times = Eigen::Map<Eigen::VectorXd>(t.data(), n);
      c.values.resize(n);
      for (int k = 0; k < n; ++k) {
        c.values(k) = std::sin(3.0 * t[k]) + 0.3 * i + 0.2 * heavy(rng);
      }
      c.covariates = scale * c.times;
      curves.push_back(std::move(c));
    }
  }
  return rfanova::FunctionalDataset(std::move(curves), labels, {rfanova::CovariateRule::Kind::kScaledTime, scale});
}

/// Starting point with randomly perturbed kernels and scale, away from any optimum.
inline rfanova::FitState random_state(const rfanova::Problem& problem, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  rfanova::FitState s = rfanova::initial_state(problem);
  for (Eigen::Index i = 0; i < s.B.size(); ++i) s.B.data()[i] += 0.1 * nd(rng);
  for (auto& k : s.kernels) {
    k.theta0 = 0.3 * std::exp(0.5 * nd(rng));
    for (Eigen::Index q = 0; q < k.theta.size(); ++q) {
      k.theta(q) = 2.0 * std::exp(0.5 * nd(rng));
      k.eta(q) = 0.2 * std::exp(0.5 * nd(rng));
    }
  }
  s.etp.sigma2 = 0.1 * std::exp(0.5 * nd(rng));
  s.etp.nu = 1.2 + 3.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return s;
}

inline rfanova::FitConfig tight_config(rfanova::Method method) {
  rfanova::FitConfig f;
  f.method = method;
  f.mode.tol = 1e-13;
  f.mode.max_iter = 500;
  f.policy = rfanova::ExecPolicy::kSerial;
  return f;
}

/// A fitted-model record assembled at a chosen parameter point, with its latent modes solved.
inline rfanova::ModelFit make_model(const rfanova::FunctionalDataset& data, const rfanova::FitConfig& cfg,
                                    const rfanova::BSplineBasis& basis, const rfanova::FitState& state) {
  rfanova::ModelFit m;
  m.method = cfg.method;
  m.config = cfg;
  m.data = data;
  m.basis = basis;
  m.state = state;
  m.lambda = cfg.lambda;
  m.posteriors = rfanova::refresh_posteriors(m);
  return m;
}

}  // namespace fixture
