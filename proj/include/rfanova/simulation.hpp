#pragma once

#include "rfanova/dataset.hpp"
#include "rfanova/estimation.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace rfanova {

enum class Disturbance { kNone, kConst2, kNormal02, kT3 };

std::string to_string(Disturbance d);
Disturbance disturbance_from_string(const std::string& s);

struct SimConfig {
  int model_id = 1;
  int n_train = 11;
  Disturbance disturb = Disturbance::kConst2;
  int replications = 100;
  std::uint64_t seed = 42;
  int grid_points = 61;
  double grid_lower = 0.0;
  double grid_upper = 2.0;
  /// Template for all three fits; method is overridden per fit. lambda = 1.
  FitConfig fit = [] {
    FitConfig f;
    f.lambda = 1.0;
    return f;
  }();
  /// Estimate nu instead of fixing it at the generating value 1.1.
  bool estimate_nu = false;
  /// Outer loop over replicates; inner fits always run serially.
  ExecPolicy policy = ExecPolicy::kParallel;

  void validate() const;
};

/// Design constants of the generating models.
struct SimDesign {
  static constexpr int kLevels = 3;
  static constexpr int kReplicates = 2;
  static constexpr double kCovariateScale = 0.2;
  static constexpr double kNu = 1.1;
  static constexpr double kSigma2 = 0.1;
  static KernelParams kernel();  // theta0 = 0.1, theta = 10, eta = 0.1
  static double mu(double t);
  static double alpha(int level, double t);
};

struct SimulatedData {
  Eigen::VectorXd grid;
  std::vector<int> train_index;  // sorted grid positions shared by all curves
  std::vector<int> test_index;
  FunctionalDataset train;
  FunctionalDataset test;
  /// Noise-free values mu + alpha_i + tau_ij on the full grid, one per curve.
  std::vector<Eigen::VectorXd> truth;
};

SimulatedData generate(const SimConfig& config, std::mt19937_64& rng);

/// Adds one disturbance to a single training value chosen uniformly over all
/// observations. `picked`, when given, receives (curve, observation).
FunctionalDataset contaminate(const FunctionalDataset& train, Disturbance scheme, std::mt19937_64& rng,
                              std::pair<std::size_t, Eigen::Index>* picked = nullptr);

struct PeMse {
  double pe = 0.0;
  double mse = 0.0;
};

/// PE = mean |yhat - observed|, MSE = mean (yhat - truth)^2.
PeMse pe_mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& observed,
             const Eigen::VectorXd& truth);

struct ReplicationResult {
  Method method = Method::kTP;
  double pe_mean = 0.0;
  double pe_sd = 0.0;
  double mse_mean = 0.0;
  double mse_sd = 0.0;
  std::vector<double> pe;   // per retained replicate
  std::vector<double> mse;
};

struct ExperimentResult {
  SimConfig config;
  std::vector<ReplicationResult> methods;  // TP, GP, TP0
  std::vector<int> retained;               // replicate indices kept
  int failed = 0;
};

/// splitmix64 of (master, index): replicate r is reproducible on its own.
std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index);

/// Per-replicate (PE, MSE) for TP, GP and TP0, in that order. Throws when any fit fails.
std::vector<PeMse> run_replicate(const SimConfig& config, int replicate);

ExperimentResult run_experiment(const SimConfig& config);

/// Rows method x metric, columns mean and sd.
void write_table_csv(const ExperimentResult& result, std::ostream& out);

/// Pairwise summation with a fixed tree shape.
double pairwise_sum(const double* x, std::size_t n);

struct PairedTest {
  double mean_diff = 0.0;  // mean(a - b)
  double t_stat = 0.0;
  double p_value = 1.0;    // one-sided, H1: mean(a - b) < 0
  std::size_t n = 0;
};

PairedTest paired_t_test_less(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace rfanova
