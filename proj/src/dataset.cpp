#include "rfanova/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace rfanova {

Eigen::VectorXd CovariateRule::at(double t) const {
  if (kind != Kind::kScaledTime) {
    throw ValidationError("covariates are not a known function of t; supply them explicitly");
  }
  Eigen::VectorXd u(1);
  u(0) = scale * t;
  return u;
}

FunctionalDataset::FunctionalDataset(std::vector<Curve> curves,
                                     std::vector<std::string> level_labels, CovariateRule rule)
    : curves_(std::move(curves)), level_labels_(std::move(level_labels)), rule_(rule) {
  if (curves_.empty()) throw ValidationError("dataset has no curves");
  if (level_labels_.empty()) throw ValidationError("dataset has no levels");
  const int num_levels = static_cast<int>(level_labels_.size());
  dim_ = curves_.front().covariate_dim();
  for (const auto& c : curves_) {
    const auto n = c.size();
    if (n < 1) throw ValidationError("curve " + c.id + " has no observations");
    if (c.values.size() != n || c.covariates.rows() != n) {
      throw ValidationError("curve " + c.id + ": times, values and covariate rows differ in length");
    }
    if (c.covariate_dim() != dim_) {
      throw ValidationError("curve " + c.id + ": covariate dimension differs from other curves");
    }
    if (c.level < 1 || c.level > num_levels) {
      throw ValidationError("curve " + c.id + ": level index out of range");
    }
    if (!c.times.allFinite() || !c.values.allFinite() || !c.covariates.allFinite()) {
      throw ValidationError("curve " + c.id + " contains non-finite entries");
    }
    for (Eigen::Index k = 1; k < n; ++k) {
      if (!(c.times(k) > c.times(k - 1))) {
        throw ValidationError("curve " + c.id + ": times are not strictly increasing");
      }
    }
  }
  policy_ = TimeGridPolicy::kShared;
  for (const auto& c : curves_) {
    if (c.size() != curves_.front().size() || c.times != curves_.front().times) {
      policy_ = TimeGridPolicy::kPerCurve;
      break;
    }
  }
}

std::optional<std::size_t> FunctionalDataset::find(const std::string& curve_id) const {
  for (std::size_t i = 0; i < curves_.size(); ++i) {
    if (curves_[i].id == curve_id) return i;
  }
  return std::nullopt;
}

std::size_t FunctionalDataset::total_observations() const {
  return std::accumulate(curves_.begin(), curves_.end(), std::size_t{0},
                         [](std::size_t acc, const Curve& c) { return acc + c.size(); });
}

double FunctionalDataset::min_time() const {
  double lo = curves_.front().times(0);
  for (const auto& c : curves_) lo = std::min(lo, c.times(0));
  return lo;
}

double FunctionalDataset::max_time() const {
  double hi = curves_.front().times(curves_.front().size() - 1);
  for (const auto& c : curves_) hi = std::max(hi, c.times(c.size() - 1));
  return hi;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\r')) cell.pop_back();
    std::size_t start = cell.find_first_not_of(' ');
    out.push_back(start == std::string::npos ? std::string{} : cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || cell.empty()) {
    throw ParseError("non-numeric value '" + cell + "' in column " + column, row);
  }
  if (!std::isfinite(value)) {
    throw ParseError("non-finite value '" + cell + "' in column " + column, row);
  }
  return value;
}

struct RawRow {
  double t;
  double y;
  std::vector<double> u;
  std::size_t row;
};

}  // namespace

FunctionalDataset parse_csv(std::istream& in, const CsvSchema& schema) {
  std::string line;
  std::size_t row = 0;
  std::optional<CovariateRule> declared_rule;

  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    if (line.front() == '#') {
      const std::string key = "# covariate_rule=scaled_time:";
      if (line.rfind(key, 0) == 0) {
        CovariateRule r;
        r.kind = CovariateRule::Kind::kScaledTime;
        r.scale = parse_number(line.substr(key.size()), row, "covariate_rule");
        declared_rule = r;
      }
      continue;
    }
    header = split(line);
    break;
  }
  if (header.empty()) throw SchemaError("CSV has no header row");

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column(schema.curve_id);
  const std::size_t c_level = column(schema.level);
  const std::size_t c_t = column(schema.time);
  const std::size_t c_y = column(schema.value);
  std::vector<std::size_t> c_u;
  for (int q = 1;; ++q) {
    auto it = std::find(header.begin(), header.end(), schema.covariate_prefix + std::to_string(q));
    if (it == header.end()) break;
    c_u.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  std::vector<std::string> curve_order;
  std::unordered_map<std::string, std::vector<RawRow>> rows_by_curve;
  std::unordered_map<std::string, std::string> level_of_curve;
  std::vector<std::string> level_labels;

  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r" || line.front() == '#') continue;
    auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                           std::to_string(cells.size()),
                       row);
    }
    const std::string& id = cells[c_id];
    const std::string& level = cells[c_level];
    if (id.empty()) throw ParseError("empty curve_id", row);
    if (level.empty()) throw ParseError("empty level", row);
    RawRow r{parse_number(cells[c_t], row, schema.time), parse_number(cells[c_y], row, schema.value),
             {}, row};
    for (std::size_t q = 0; q < c_u.size(); ++q) {
      r.u.push_back(parse_number(cells[c_u[q]], row, header[c_u[q]]));
    }
    auto [lv, inserted] = level_of_curve.emplace(id, level);
    if (inserted) {
      curve_order.push_back(id);
    } else if (lv->second != level) {
      throw ParseError("curve '" + id + "' changes level", row);
    }
    if (std::find(level_labels.begin(), level_labels.end(), level) == level_labels.end()) {
      level_labels.push_back(level);
    }
    rows_by_curve[id].push_back(std::move(r));
  }
  if (curve_order.empty()) throw SchemaError("CSV has no data rows");

  const Eigen::Index p = c_u.empty() ? 1 : static_cast<Eigen::Index>(c_u.size());
  CovariateRule rule;
  if (!c_u.empty()) {
    rule = declared_rule.value_or(CovariateRule{CovariateRule::Kind::kSupplied, 1.0});
  }

  std::map<int, int> replicate_count;
  std::vector<Curve> curves;
  for (const auto& id : curve_order) {
    auto& rows = rows_by_curve[id];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRow& a, const RawRow& b) { return a.t < b.t; });
    for (std::size_t k = 1; k < rows.size(); ++k) {
      if (rows[k].t == rows[k - 1].t) {
        throw DuplicateTimeError("duplicate time " + std::to_string(rows[k].t) + " in curve '" +
                                 id + "' (rows " + std::to_string(rows[k - 1].row) + " and " +
                                 std::to_string(rows[k].row) + ")");
      }
    }
    Curve c;
    c.id = id;
    const auto& label = level_of_curve[id];
    c.level = static_cast<int>(std::find(level_labels.begin(), level_labels.end(), label) -
                               level_labels.begin()) + 1;
    c.replicate = ++replicate_count[c.level];
    const auto n = static_cast<Eigen::Index>(rows.size());
    c.times.resize(n);
    c.values.resize(n);
    c.covariates.resize(n, p);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& r = rows[static_cast<std::size_t>(k)];
      c.times(k) = r.t;
      c.values(k) = r.y;
      if (c_u.empty()) {
        c.covariates(k, 0) = r.t;
      } else {
        for (Eigen::Index q = 0; q < p; ++q) c.covariates(k, q) = r.u[static_cast<std::size_t>(q)];
      }
    }
    curves.push_back(std::move(c));
  }
  return FunctionalDataset(std::move(curves), std::move(level_labels), rule);
}

FunctionalDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_csv(in, schema);
}

void write_csv(const FunctionalDataset& data, std::ostream& out) {
  const auto& rule = data.covariate_rule();
  if (rule.known()) {
    out << "# covariate_rule=scaled_time:" << std::setprecision(17) << rule.scale << '\n';
  }
  out << "curve_id,level,t,y";
  for (Eigen::Index q = 0; q < data.covariate_dim(); ++q) out << ",u" << q + 1;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& c : data.curves()) {
    const auto& label = data.level_labels()[static_cast<std::size_t>(c.level - 1)];
    for (Eigen::Index k = 0; k < c.size(); ++k) {
      out << c.id << ',' << label << ',' << c.times(k) << ',' << c.values(k);
      for (Eigen::Index q = 0; q < c.covariate_dim(); ++q) out << ',' << c.covariates(k, q);
      out << '\n';
    }
  }
}

void save_csv(const FunctionalDataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_csv(data, out);
}

Eigen::VectorXd design_vector(int level, int num_levels) {
  if (num_levels < 1 || level < 1 || level > num_levels) {
    throw std::out_of_range("level " + std::to_string(level) + " outside 1.." +
                            std::to_string(num_levels));
  }
  Eigen::VectorXd z = Eigen::VectorXd::Zero(num_levels + 1);
  z(0) = 1.0;
  z(level) = 1.0;
  return z;
}

}  // namespace rfanova
