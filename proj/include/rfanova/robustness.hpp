#pragma once

#include "rfanova/estimation.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace rfanova {

struct BoundednessProbe {
  Eigen::VectorXd magnitudes;
  Eigen::VectorXd tp_score_norms;
  Eigen::VectorXd gp_score_norms;
  /// max over the grid of the TP norms
  double tp_sup_estimate = 0.0;
};

struct ProbeOptions {
  Eigen::Index observation = 0;  // which point of the curve gets +c
  /// Refit all parameters for each c instead of holding them at the fitted values.
  bool refit = false;
  ExecPolicy policy = ExecPolicy::kParallel;
};

/// Euclidean norm of the stacked (B, kernel, sigma2) score of `method` at
/// `state` on `data`.
double stacked_score_norm(const FunctionalDataset& data, const FitConfig& config,
                          const BSplineBasis& basis, const FitState& state, Method method);

/// Adds c to one observation of `curve` for every c in `magnitudes` and records
/// the stacked score norms of the TP model and its Gaussian comparator.
BoundednessProbe score_boundedness_probe(const ModelFit& model, const FunctionalDataset& data,
                                         std::size_t curve, const Eigen::VectorXd& magnitudes,
                                         const ProbeOptions& opts = {});

/// log|I + K / sigma2|.
double regret_term(const Eigen::MatrixXd& K, double sigma2);

struct RegretRow {
  int n = 0;
  double mean_regret = 0.0;
  double ratio = 0.0;  // mean_regret / n
};

/// Monte-Carlo average of regret_term(K(U_n), sigma2) with U_n drawn uniformly
/// on [lower, upper]^p, for every n in `sizes`.
std::vector<RegretRow> regret_growth_report(const KernelParams& kernel, double sigma2,
                                            const std::vector<int>& sizes, double lower, double upper,
                                            int draws, std::uint64_t seed,
                                            ExecPolicy policy = ExecPolicy::kParallel);

}  // namespace rfanova
