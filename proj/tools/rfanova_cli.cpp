#include "rfanova/dataset.hpp"
#include "rfanova/estimation.hpp"
#include "rfanova/fit_io.hpp"
#include "rfanova/prediction.hpp"
#include "rfanova/robustness.hpp"
#include "rfanova/simulation.hpp"
#include "rfanova/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rfanova;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

json default_config() {
  return json{
      {"seed", 42},
      {"threads", 0},
      {"basis", {{"order", 4}, {"num_basis", 0}, {"omega0", 0.0}, {"omega1", 0.0}}},
      {"optimizer",
       {{"lambda", 1e-2},
        {"lambda_grid", json::array()},
        {"outer_max", 50},
        {"outer_tol", 1e-6},
        {"mode_tol", 1e-8},
        {"mode_max_iter", 100},
        {"lbfgs_memory", 10}}},
      {"likelihood", {{"method", "tp"}, {"estimate_nu", true}, {"nu", 3.0}, {"tie_kernel_within_level", false}}},
      {"simulation",
       {{"model", 1}, {"n_train", 11}, {"disturb", "const2"}, {"reps", 100}, {"estimate_nu", false},
        {"lambda", 1.0}}},
  };
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string header_line(const json& config) {
  std::ostringstream os;
  os << "# seed=" << config.at("seed").get<std::uint64_t>() << ", version=" << kVersion << ", config-hash="
     << std::hex << fnv1a(config.dump());
  return os.str();
}

FitConfig fit_config_from(const json& c) {
  FitConfig f;
  const json& b = c.at("basis");
  f.basis.order = b.at("order").get<int>();
  f.basis.num_basis = b.at("num_basis").get<int>();
  f.basis.op.omega0 = b.at("omega0").get<double>();
  f.basis.op.omega1 = b.at("omega1").get<double>();
  const json& o = c.at("optimizer");
  f.lambda = o.at("lambda").get<double>();
  f.lambda_grid = o.at("lambda_grid").get<std::vector<double>>();
  f.outer_max = o.at("outer_max").get<int>();
  f.outer_tol = o.at("outer_tol").get<double>();
  f.mode.tol = o.at("mode_tol").get<double>();
  f.mode.max_iter = o.at("mode_max_iter").get<int>();
  f.lbfgs_memory = o.at("lbfgs_memory").get<int>();
  const json& l = c.at("likelihood");
  f.method = method_from_string(l.at("method").get<std::string>());
  f.estimate_nu = l.at("estimate_nu").get<bool>();
  f.nu = l.at("nu").get<double>();
  f.tie_kernel_within_level = l.at("tie_kernel_within_level").get<bool>();
  f.validate();
  return f;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void require_input(const std::string& path) {
  if (!fs::is_regular_file(path)) throw std::runtime_error("input file '" + path + "' not found");
}

void require_output(const std::string& path) {
  if (path.empty() || path == "-") return;
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw std::runtime_error("output directory '" + parent.string() + "' does not exist");
  }
}

/// Writes to `path`, or stdout for "" / "-".
template <class Writer>
void emit(const std::string& path, Writer&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write(out);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

struct FitFlags {
  std::optional<std::string> method;
  std::optional<double> lambda;
  std::optional<std::string> lambda_grid;
  std::optional<double> nu;
  bool fix_nu = false;
  bool tie_kernel = false;
  std::optional<int> basis_order;
  std::optional<int> num_basis;
  std::optional<int> outer_max;
  std::optional<double> outer_tol;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON run configuration; flags override its values")
      ->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--threads", c.threads, "cap on worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
}

void add_fit_flags(CLI::App* app, FitFlags& f) {
  app->add_option("--method", f.method, "tp, gp or tp0")->check(CLI::IsMember({"tp", "gp", "tp0"}));
  app->add_option("--lambda", f.lambda, "penalty weight");
  app->add_option("--lambda-grid", f.lambda_grid, "comma-separated penalty grid for cross-validation");
  app->add_option("--nu", f.nu, "degrees of freedom (start value, or fixed with --fix-nu)");
  app->add_flag("--fix-nu", f.fix_nu, "hold nu fixed");
  app->add_flag("--tie-kernel", f.tie_kernel, "share kernel parameters within a level");
  app->add_option("--basis-order", f.basis_order, "B-spline order");
  app->add_option("--num-basis", f.num_basis, "number of basis functions (0 = automatic)");
  app->add_option("--outer-max", f.outer_max, "maximum optimizer iterations");
  app->add_option("--outer-tol", f.outer_tol, "relative objective tolerance");
}

json resolve_config(const Common& c, const FitFlags* f) {
  json cfg = default_config();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    json file;
    try {
      in >> file;
    } catch (const json::exception& e) {
      throw std::runtime_error("config '" + c.config_path + "' is not valid JSON: " + e.what());
    }
    cfg.merge_patch(file);
  }
  if (c.seed) cfg["seed"] = *c.seed;
  if (c.threads) cfg["threads"] = *c.threads;
  if (f) {
    if (f->method) cfg["likelihood"]["method"] = *f->method;
    if (f->lambda) cfg["optimizer"]["lambda"] = *f->lambda;
    if (f->lambda_grid) cfg["optimizer"]["lambda_grid"] = parse_list(*f->lambda_grid);
    if (f->nu) cfg["likelihood"]["nu"] = *f->nu;
    if (f->fix_nu) cfg["likelihood"]["estimate_nu"] = false;
    if (f->tie_kernel) cfg["likelihood"]["tie_kernel_within_level"] = true;
    if (f->basis_order) cfg["basis"]["order"] = *f->basis_order;
    if (f->num_basis) cfg["basis"]["num_basis"] = *f->num_basis;
    if (f->outer_max) cfg["optimizer"]["outer_max"] = *f->outer_max;
    if (f->outer_tol) cfg["optimizer"]["outer_tol"] = *f->outer_tol;
  }
  set_thread_cap(cfg.at("threads").get<int>());
  return cfg;
}

int cmd_fit(const Common& common, const FitFlags& flags, const std::string& data_path, const std::string& out) {
  require_input(data_path);
  require_output(out);
  const json cfg = resolve_config(common, &flags);
  const FitConfig fc = fit_config_from(cfg);
  const FunctionalDataset data = load_csv(data_path);
  const ModelFit model = fit(data, fc);
  save_fit(model, out);
  std::cout << "method=" << to_string(model.method) << " iterations=" << model.iterations
            << " objective=" << model.objective << " nu=" << model.state.etp.nu
            << " sigma2=" << model.state.etp.sigma2 << " lambda=" << model.lambda
            << " converged=" << (model.converged ? "yes" : "no") << '\n';
  return model.converged ? kExitOk : kExitNotConverged;
}

int cmd_predict(const Common& common, const std::string& fit_path, const std::string& curve,
                const std::string& times, const std::string& out) {
  require_input(fit_path);
  require_output(out);
  json cfg = resolve_config(common, nullptr);
  const ModelFit model = load_fit(fit_path);
  cfg["fit"] = fit_path;
  const Predictor predictor(model);

  std::vector<std::size_t> curves;
  if (curve.empty()) {
    for (std::size_t i = 0; i < model.data.num_curves(); ++i) curves.push_back(i);
  } else {
    curves.push_back(predictor.curve_index(curve));
  }
  const std::vector<double> grid = parse_list(times);
  if (!grid.empty() && !model.data.covariate_rule().known()) {
    throw std::runtime_error("covariates are not a known function of time; predict at observed times only");
  }
  emit(out, [&](std::ostream& os) {
    os << header_line(cfg) << '\n' << "curve_id,t,mean,variance,mean_structure,random_effect\n";
    os.precision(12);
    for (std::size_t i : curves) {
      const Curve& c = model.data.curves()[i];
      if (grid.empty()) {
        for (Eigen::Index k = 0; k < c.size(); ++k) {
          const auto r = predictor.predict(i, c.times(k), Eigen::VectorXd(c.covariates.row(k).transpose()));
          os << c.id << ',' << c.times(k) << ',' << r.mean << ',' << r.variance << ',' << r.mean_structure
             << ',' << r.random_effect << '\n';
        }
      } else {
        for (double t : grid) {
          const auto r = predictor.predict(i, t);
          os << c.id << ',' << t << ',' << r.mean << ',' << r.variance << ',' << r.mean_structure << ','
             << r.random_effect << '\n';
        }
      }
    }
  });
  return kExitOk;
}

struct SimFlags {
  std::optional<int> model;
  std::optional<int> n_train;
  std::optional<std::string> disturb;
  std::optional<int> reps;
  std::optional<double> lambda;
  bool estimate_nu = false;
};

int cmd_simulate(const Common& common, const SimFlags& flags, const std::string& out) {
  require_output(out);
  json cfg = resolve_config(common, nullptr);
  json& s = cfg["simulation"];
  if (flags.model) s["model"] = *flags.model;
  if (flags.n_train) s["n_train"] = *flags.n_train;
  if (flags.disturb) s["disturb"] = *flags.disturb;
  if (flags.reps) s["reps"] = *flags.reps;
  if (flags.lambda) s["lambda"] = *flags.lambda;
  if (flags.estimate_nu) s["estimate_nu"] = true;

  SimConfig sc;
  sc.model_id = s.at("model").get<int>();
  sc.n_train = s.at("n_train").get<int>();
  sc.disturb = disturbance_from_string(s.at("disturb").get<std::string>());
  sc.replications = s.at("reps").get<int>();
  sc.seed = cfg.at("seed").get<std::uint64_t>();
  sc.estimate_nu = s.at("estimate_nu").get<bool>();
  sc.fit = fit_config_from(cfg);
  sc.fit.lambda = s.at("lambda").get<double>();
  sc.validate();

  const ExperimentResult result = run_experiment(sc);
  emit(out, [&](std::ostream& os) {
    os << header_line(cfg) << '\n';
    write_table_csv(result, os);
  });
  if (!out.empty() && out != "-") write_table_csv(result, std::cout);
  return kExitOk;
}

int cmd_robustness(const Common& common, const std::string& fit_path, const std::string& curve, int obs,
                   const std::string& magnitudes, bool refit, const std::string& out) {
  require_input(fit_path);
  require_output(out);
  json cfg = resolve_config(common, nullptr);
  cfg["fit"] = fit_path;
  const ModelFit model = load_fit(fit_path);
  const Predictor lookup(model);
  const std::size_t idx = lookup.curve_index(curve);
  const std::vector<double> mags = parse_list(magnitudes);
  ProbeOptions opts;
  opts.observation = obs;
  opts.refit = refit;
  const BoundednessProbe probe = score_boundedness_probe(
      model, model.data, idx, Eigen::Map<const Eigen::VectorXd>(mags.data(), static_cast<Eigen::Index>(mags.size())),
      opts);
  emit(out, [&](std::ostream& os) {
    os << header_line(cfg) << '\n' << "c,tp_score_norm,gp_score_norm\n";
    os.precision(12);
    for (Eigen::Index k = 0; k < probe.magnitudes.size(); ++k) {
      os << probe.magnitudes(k) << ',' << probe.tp_score_norms(k) << ',' << probe.gp_score_norms(k) << '\n';
    }
  });
  return kExitOk;
}

struct RegretFlags {
  std::string sizes = "20,40,80,160";
  int draws = 50;
  double theta0 = 0.1;
  double theta = 10.0;
  double eta = 0.1;
  double sigma2 = 0.1;
  double lower = 0.0;
  double upper = 0.4;
};

int cmd_regret(const Common& common, const RegretFlags& f, const std::string& out) {
  require_output(out);
  json cfg = resolve_config(common, nullptr);
  cfg["regret"] = {{"n", f.sizes}, {"draws", f.draws}, {"theta0", f.theta0}, {"theta", f.theta},
                   {"eta", f.eta}, {"sigma2", f.sigma2}, {"lower", f.lower}, {"upper", f.upper}};
  std::vector<int> sizes;
  for (double v : parse_list(f.sizes)) sizes.push_back(static_cast<int>(v));
  const auto rows = regret_growth_report(KernelParams::isotropic(1, f.theta0, f.theta, f.eta), f.sigma2, sizes,
                                         f.lower, f.upper, f.draws, cfg.at("seed").get<std::uint64_t>());
  emit(out, [&](std::ostream& os) {
    os << header_line(cfg) << '\n' << "n,mean_regret,ratio\n";
    os.precision(12);
    for (const auto& r : rows) os << r.n << ',' << r.mean_regret << ',' << r.ratio << '\n';
  });
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust functional ANOVA with t-process errors and Gaussian-process random effects"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  FitFlags fit_flags;

  std::string data_path, fit_out = "fit.json";
  auto* fit_cmd = app.add_subcommand("fit", "fit a model to a CSV dataset");
  add_common(fit_cmd, common);
  add_fit_flags(fit_cmd, fit_flags);
  fit_cmd->add_option("--data", data_path, "input CSV (curve_id,level,t,y[,u1..])")->required();
  fit_cmd->add_option("--out", fit_out, "fit file to write");

  std::string fit_in, curve, times, pred_out;
  auto* pred_cmd = app.add_subcommand("predict", "predictive mean and variance from a fit file");
  add_common(pred_cmd, common);
  pred_cmd->add_option("--fit", fit_in, "fit file")->required();
  pred_cmd->add_option("--curve", curve, "curve id (default: all curves)");
  pred_cmd->add_option("--times", times, "comma-separated query times (default: observed times)");
  pred_cmd->add_option("--out", pred_out, "output CSV (default: stdout)");

  SimFlags sim_flags;
  std::string sim_out;
  auto* sim_cmd = app.add_subcommand("simulate", "replicated simulation comparing TP, GP and TP(tau=0)");
  add_common(sim_cmd, common);
  sim_cmd->add_option("--model", sim_flags.model, "generating model 1, 2 or 3");
  sim_cmd->add_option("--n-train", sim_flags.n_train, "training points per curve");
  sim_cmd->add_option("--disturb", sim_flags.disturb, "none, const2, normal02 or t3");
  sim_cmd->add_option("--reps", sim_flags.reps, "replicates");
  sim_cmd->add_option("--lambda", sim_flags.lambda, "penalty weight for all three fits");
  sim_cmd->add_flag("--estimate-nu", sim_flags.estimate_nu, "estimate nu instead of fixing it at 1.1");
  sim_cmd->add_option("--out", sim_out, "table CSV (default: stdout)");

  auto* diag_cmd = app.add_subcommand("diagnose", "robustness and regret diagnostics");
  diag_cmd->require_subcommand(1);

  std::string rob_fit, rob_curve, rob_out, rob_mags = "0,1,10,100,1000,10000,100000,1000000";
  int rob_obs = 0;
  bool rob_refit = false;
  auto* rob_cmd = diag_cmd->add_subcommand("robustness", "score norms under growing contamination");
  add_common(rob_cmd, common);
  rob_cmd->add_option("--fit", rob_fit, "fit file")->required();
  rob_cmd->add_option("--curve", rob_curve, "curve id")->required();
  rob_cmd->add_option("--obs", rob_obs, "observation index within the curve");
  rob_cmd->add_option("--magnitudes", rob_mags, "comma-separated contamination sizes");
  rob_cmd->add_flag("--refit", rob_refit, "refit at each size and report parameter displacement");
  rob_cmd->add_option("--out", rob_out, "output CSV (default: stdout)");

  RegretFlags regret;
  std::string regret_out;
  auto* reg_cmd = diag_cmd->add_subcommand("regret", "growth of log|I + K/sigma2| with n");
  add_common(reg_cmd, common);
  reg_cmd->add_option("--n", regret.sizes, "comma-separated sample sizes");
  reg_cmd->add_option("--draws", regret.draws, "Monte-Carlo draws per size");
  reg_cmd->add_option("--theta0", regret.theta0);
  reg_cmd->add_option("--theta", regret.theta);
  reg_cmd->add_option("--eta", regret.eta);
  reg_cmd->add_option("--sigma2", regret.sigma2);
  reg_cmd->add_option("--lower", regret.lower, "covariate lower bound");
  reg_cmd->add_option("--upper", regret.upper, "covariate upper bound");
  reg_cmd->add_option("--out", regret_out, "output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (*fit_cmd) return cmd_fit(common, fit_flags, data_path, fit_out);
    if (*pred_cmd) return cmd_predict(common, fit_in, curve, times, pred_out);
    if (*sim_cmd) return cmd_simulate(common, sim_flags, sim_out);
    if (*rob_cmd) return cmd_robustness(common, rob_fit, rob_curve, rob_obs, rob_mags, rob_refit, rob_out);
    if (*reg_cmd) return cmd_regret(common, regret, regret_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
