#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfanova {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : std::runtime_error(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

class DuplicateTimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One observed curve y_ij(t_1..t_n) with its covariate path u_ij(t_k).
/// `level` is 1-based.
struct Curve {
  std::string id;
  int level = 1;
  int replicate = 1;
  Eigen::VectorXd times;
  Eigen::VectorXd values;
  Eigen::MatrixXd covariates;  // n x p

  Eigen::Index size() const { return times.size(); }
  Eigen::Index covariate_dim() const { return covariates.cols(); }
};

/// How u(t) is obtained at times that were not observed. `kSupplied` means
/// the caller has to pass covariate rows explicitly.
struct CovariateRule {
  enum class Kind { kSupplied, kScaledTime };
  Kind kind = Kind::kScaledTime;
  double scale = 1.0;

  Eigen::VectorXd at(double t) const;
  bool known() const { return kind == Kind::kScaledTime; }
};

enum class TimeGridPolicy { kShared, kPerCurve };

class FunctionalDataset {
 public:
  FunctionalDataset() = default;
  /// Validates every invariant and throws ValidationError on the first failure.
  FunctionalDataset(std::vector<Curve> curves, std::vector<std::string> level_labels,
                    CovariateRule rule = {});

  const std::vector<Curve>& curves() const { return curves_; }
  std::size_t num_curves() const { return curves_.size(); }
  int num_levels() const { return static_cast<int>(level_labels_.size()); }
  Eigen::Index covariate_dim() const { return dim_; }
  const std::vector<std::string>& level_labels() const { return level_labels_; }
  const CovariateRule& covariate_rule() const { return rule_; }
  TimeGridPolicy grid_policy() const { return policy_; }

  /// Looks up by curve id; returns nullopt when absent.
  std::optional<std::size_t> find(const std::string& curve_id) const;
  std::size_t total_observations() const;
  double min_time() const;
  double max_time() const;

 private:
  std::vector<Curve> curves_;
  std::vector<std::string> level_labels_;
  CovariateRule rule_;
  Eigen::Index dim_ = 0;
  TimeGridPolicy policy_ = TimeGridPolicy::kShared;
};

/// Column names used by load_csv. Covariate columns are discovered by prefix
/// (`u1`, `u2`, ...), contiguous from 1.
struct CsvSchema {
  std::string curve_id = "curve_id";
  std::string level = "level";
  std::string time = "t";
  std::string value = "y";
  std::string covariate_prefix = "u";
};

FunctionalDataset load_csv(const std::string& path, const CsvSchema& schema = {});
FunctionalDataset parse_csv(std::istream& in, const CsvSchema& schema = {});
void save_csv(const FunctionalDataset& data, const std::string& path);
void write_csv(const FunctionalDataset& data, std::ostream& out);

/// z_ij: first entry and entry (level+1) are 1, length I+1.
Eigen::VectorXd design_vector(int level, int num_levels);

}  // namespace rfanova
