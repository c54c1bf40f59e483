#include "rfanova/fit_io.hpp"

#include <json.hpp>

#include <fstream>

namespace rfanova {

using nlohmann::json;

namespace {

json to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json rows_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(m.row(r).transpose()));
  return rows;
}

Eigen::MatrixXd matrix_from(const json& rows, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Eigen::VectorXd row = vec_from(rows[r]);
    if (row.size() != cols) throw SchemaError("fit file: ragged matrix");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

json config_json(const FitConfig& c) {
  json j;
  j["lambda"] = c.lambda;
  j["lambda_grid"] = c.lambda_grid;
  j["estimate_nu"] = c.estimate_nu;
  j["nu"] = c.nu;
  j["tie_kernel_within_level"] = c.tie_kernel_within_level;
  j["outer_max"] = c.outer_max;
  j["outer_tol"] = c.outer_tol;
  j["lbfgs_memory"] = c.lbfgs_memory;
  j["mode"] = {{"tol", c.mode.tol},
               {"max_iter", c.mode.max_iter},
               {"curvature_floor", c.mode.curvature_floor},
               {"max_halvings", c.mode.max_halvings}};
  return j;
}

FitConfig config_from(const json& j) {
  FitConfig c;
  c.lambda = j.at("lambda").get<double>();
  c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
  c.estimate_nu = j.at("estimate_nu").get<bool>();
  c.nu = j.at("nu").get<double>();
  c.tie_kernel_within_level = j.at("tie_kernel_within_level").get<bool>();
  c.outer_max = j.at("outer_max").get<int>();
  c.outer_tol = j.at("outer_tol").get<double>();
  c.lbfgs_memory = j.at("lbfgs_memory").get<int>();
  const json& m = j.at("mode");
  c.mode.tol = m.at("tol").get<double>();
  c.mode.max_iter = m.at("max_iter").get<int>();
  c.mode.curvature_floor = m.at("curvature_floor").get<double>();
  c.mode.max_halvings = m.at("max_halvings").get<int>();
  return c;
}

}  // namespace

void write_fit(const ModelFit& model, std::ostream& out) {
  json j;
  j["format"] = kFitFormat;
  j["version"] = kFitFormatVersion;
  j["method"] = to_string(model.method);
  j["lambda"] = model.lambda;
  j["config"] = config_json(model.config);
  j["basis"] = {{"order", model.basis.order()},
                {"lower", model.basis.lower()},
                {"upper", model.basis.upper()},
                {"interior_knots", to_json(model.basis.interior_knots())},
                {"omega0", model.config.basis.op.omega0},
                {"omega1", model.config.basis.op.omega1}};
  j["B"] = rows_to_json(model.state.B);
  j["etp"] = {{"nu", model.state.etp.nu}, {"sigma2", model.state.etp.sigma2}};
  const CovariateRule& rule = model.data.covariate_rule();
  j["covariate_rule"] = {{"kind", rule.known() ? "scaled_time" : "supplied"}, {"scale", rule.scale}};
  j["levels"] = model.data.level_labels();
  j["convergence"] = {{"converged", model.converged},
                      {"iterations", model.iterations},
                      {"objective", model.objective},
                      {"objective_trace", model.objective_trace},
                      {"mode_failures", model.mode_failures}};
  json curves = json::array();
  for (std::size_t i = 0; i < model.data.num_curves(); ++i) {
    const Curve& c = model.data.curves()[i];
    json jc;
    jc["id"] = c.id;
    jc["level"] = c.level;
    jc["replicate"] = c.replicate;
    jc["times"] = to_json(c.times);
    jc["values"] = to_json(c.values);
    jc["covariates"] = rows_to_json(c.covariates);
    const KernelParams& kp = model.state.kernels[i];
    jc["kernel"] = {{"theta0", kp.theta0}, {"theta", to_json(kp.theta)}, {"eta", to_json(kp.eta)}};
    if (i < model.posteriors.size()) jc["mode_weights"] = to_json(model.posteriors[i].weights);
    curves.push_back(std::move(jc));
  }
  j["curves"] = std::move(curves);
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed to write fit");
}

void save_fit(const ModelFit& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_fit(model, out);
}

ModelFit read_fit(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("fit file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kFitFormat) {
    throw VersionError("not an rfanova fit file");
  }
  if (j.value("version", -1) != kFitFormatVersion) {
    throw VersionError("unsupported fit file version " + j.at("version").dump());
  }
  try {
    ModelFit model;
    model.method = method_from_string(j.at("method").get<std::string>());
    model.config = config_from(j.at("config"));
    model.config.method = model.method;
    model.lambda = j.at("lambda").get<double>();

    const json& jb = j.at("basis");
    model.basis = BSplineBasis(jb.at("order").get<int>(), vec_from(jb.at("interior_knots")),
                               jb.at("lower").get<double>(), jb.at("upper").get<double>());
    model.config.basis.order = model.basis.order();
    model.config.basis.num_basis = model.basis.num_basis();
    model.config.basis.op.omega0 = jb.at("omega0").get<double>();
    model.config.basis.op.omega1 = jb.at("omega1").get<double>();
    model.config.domain = std::make_pair(model.basis.lower(), model.basis.upper());

    CovariateRule rule;
    const json& jr = j.at("covariate_rule");
    rule.kind = jr.at("kind").get<std::string>() == "scaled_time" ? CovariateRule::Kind::kScaledTime
                                                                   : CovariateRule::Kind::kSupplied;
    rule.scale = jr.at("scale").get<double>();

    std::vector<Curve> curves;
    std::vector<LatentPosterior> warm;
    bool have_weights = true;
    for (const json& jc : j.at("curves")) {
      Curve c;
      c.id = jc.at("id").get<std::string>();
      c.level = jc.at("level").get<int>();
      c.replicate = jc.at("replicate").get<int>();
      c.times = vec_from(jc.at("times"));
      c.values = vec_from(jc.at("values"));
      const json& cov = jc.at("covariates");
      const auto p = cov.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(cov[0].size());
      c.covariates = matrix_from(cov, p);
      const json& jk = jc.at("kernel");
      KernelParams kp;
      kp.theta0 = jk.at("theta0").get<double>();
      kp.theta = vec_from(jk.at("theta"));
      kp.eta = vec_from(jk.at("eta"));
      model.state.kernels.push_back(kp);
      LatentPosterior post;
      if (jc.contains("mode_weights")) {
        post.weights = vec_from(jc.at("mode_weights"));
      } else {
        have_weights = false;
      }
      warm.push_back(std::move(post));
      curves.push_back(std::move(c));
    }
    model.data = FunctionalDataset(std::move(curves), j.at("levels").get<std::vector<std::string>>(), rule);

    const json& jB = j.at("B");
    model.state.B = matrix_from(jB, model.data.num_levels() + 1);
    model.state.etp.nu = j.at("etp").at("nu").get<double>();
    model.state.etp.sigma2 = j.at("etp").at("sigma2").get<double>();
    model.state.etp.validate();

    const json& jc = j.at("convergence");
    model.converged = jc.at("converged").get<bool>();
    model.iterations = jc.at("iterations").get<int>();
    model.objective = jc.at("objective").get<double>();
    model.objective_trace = jc.at("objective_trace").get<std::vector<double>>();
    model.mode_failures = jc.at("mode_failures").get<int>();

    if (model.method != Method::kTPNoRandomEffect) {
      if (have_weights) model.posteriors = std::move(warm);
      model.posteriors = refresh_posteriors(model);
    }
    return model;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed fit file: ") + e.what());
  }
}

ModelFit load_fit(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fit file '" + path + "'");
  return read_fit(in);
}

}  // namespace rfanova
