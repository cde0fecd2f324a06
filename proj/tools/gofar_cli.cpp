// gofar: simulate / fit / cv / evaluate front end.

#include "gofar/error.hpp"
#include "gofar/gofar.hpp"
#include "gofar/io.hpp"
#include "gofar/simbench.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// JSON config files: top-level keys are flags of the main app, nested
/// objects address subcommands, e.g. {"fit": {"method": "gofar-s"}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        j[name] = opt->as<std::string>();
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::parse_error& e) {
      throw CLI::ConversionError(std::string("config file: ") + e.what());
    }
    std::vector<CLI::ConfigItem> out;
    collect(out, j, "", {});
    return out;
  }

 private:
  static void collect(std::vector<CLI::ConfigItem>& out, const json& j, const std::string& name,
                      std::vector<std::string> prefix) {
    if (j.is_object()) {
      if (!name.empty()) prefix.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) collect(out, *it, it.key(), prefix);
      return;
    }
    if (name.empty()) return;
    CLI::ConfigItem item;
    item.parents = std::move(prefix);
    item.name = name;
    auto scalar = [](const json& v) {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
      return v.dump();
    };
    if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(scalar(v));
    } else {
      item.inputs.push_back(scalar(j));
    }
    out.push_back(std::move(item));
  }
};

struct DataArgs {
  std::string x_path, y_path, z_path, offset_path, families;
  bool no_intercept = false;
  double alpha_p = gofar::kDefaultAlphaP;
};

struct TuneArgs {
  gofar::TuningConfig cfg;
  bool no_one_sd = false;
  std::optional<double> lambda;
  std::uint64_t seed = 0;
};

void add_data_options(CLI::App* sub, DataArgs& d) {
  sub->add_option("--x", d.x_path, "Predictor matrix X (CSV)")->required();
  sub->add_option("--y", d.y_path, "Response matrix Y (CSV, NA for missing)")->required();
  sub->add_option("--z", d.z_path, "Extra control columns (CSV), placed after the intercept");
  sub->add_flag("--no-intercept", d.no_intercept, "Do not prepend a ones column to Z");
  sub->add_option("--offset", d.offset_path, "Offset matrix O (CSV); default zero");
  sub->add_option("--families", d.families,
                  "Response families, e.g. \"g×15,b×15\" or a JSON array")
      ->required();
  sub->add_option("--alpha-p", d.alpha_p, "Curvature bound for Poisson columns")
      ->capture_default_str();
}

void add_tuning_options(CLI::App* sub, TuneArgs& t) {
  sub->add_option("--nlambda", t.cfg.n_lambda, "Lambda path length")->capture_default_str();
  sub->add_option("--lambda-min-ratio", t.cfg.lambda_min_ratio, "lambda_min / lambda_max")
      ->capture_default_str();
  sub->add_option("--folds", t.cfg.folds, "Cross-validation folds")->capture_default_str();
  sub->add_flag("--no-one-sd", t.no_one_sd, "Pick the CV minimizer instead of the one-SD rule");
  sub->add_option("--alpha", t.cfg.alpha, "Elastic net mixing")->capture_default_str();
  sub->add_option("--gamma", t.cfg.gamma, "Adaptive weight exponent")->capture_default_str();
  sub->add_option("--epsilon", t.cfg.epsilon, "Solver tolerance")->capture_default_str();
  sub->add_option("--max-iter", t.cfg.max_iter, "Solver iteration cap")->capture_default_str();
  sub->add_option("--threads", t.cfg.threads, "Worker threads")->capture_default_str();
}

/// Data as read from disk; the problem keeps references into it.
struct LoadedData {
  gofar::ObservedOutcomes y;
  gofar::DesignMatrices design;
  gofar::FamilyList families;
};

LoadedData load_data(const DataArgs& d) {
  LoadedData out;
  try {
    out.families = gofar::parse_family_list(d.families);
  } catch (const std::exception& e) {
    throw gofar::DataError(std::string("--families: ") + e.what());
  }
  const gofar::CsvMatrix X = gofar::read_csv(d.x_path, false);
  const gofar::CsvMatrix Y = gofar::read_csv(d.y_path, true);
  out.y = gofar::ObservedOutcomes(Y.values, Y.mask);
  gofar::validate_outcomes(out.y, out.families);
  out.design = gofar::DesignMatrices::with_intercept(X.values, Y.values.cols());
  if (!d.z_path.empty()) {
    const Eigen::MatrixXd extra = gofar::read_csv(d.z_path, false).values;
    if (extra.rows() != out.design.n()) throw gofar::DataError("Z and X row counts disagree");
    if (d.no_intercept) {
      out.design.Z = extra;
    } else {
      out.design.Z.conservativeResize(Eigen::NoChange, 1 + extra.cols());
      out.design.Z.rightCols(extra.cols()) = extra;
    }
  } else if (d.no_intercept) {
    throw gofar::DataError("--no-intercept needs --z with at least one control column");
  }
  if (!d.offset_path.empty()) out.design.O = gofar::read_csv(d.offset_path, false).values;
  try {
    out.design.validate();
  } catch (const std::invalid_argument& e) {
    throw gofar::DataError(e.what());
  }
  if (out.design.n() != out.y.rows() || out.design.q() != out.y.cols()) {
    throw gofar::DataError("X, Y, Z and offset row/column counts disagree");
  }
  return out;
}

gofar::TuningConfig tuning_from(const TuneArgs& t) {
  gofar::TuningConfig cfg = t.cfg;
  cfg.use_one_sd = !t.no_one_sd;
  cfg.fixed_lambda = t.lambda;
  cfg.seed = t.seed;
  return cfg;
}

int parse_setup(const std::string& s) {
  if (s == "I" || s == "1" || s == "i") return 1;
  if (s == "II" || s == "2" || s == "ii") return 2;
  throw gofar::DataError("--setup must be I or II");
}

std::string family_layout(std::string f) {
  std::transform(f.begin(), f.end(), f.begin(), [](unsigned char c) { return std::tolower(c); });
  if (f == "g-b" || f == "g_b") return "gb";
  if (f == "g-p" || f == "g_p") return "gp";
  return f;
}

std::string metrics_line(const gofar::Metrics& m, double rank, const std::string& lead = "") {
  std::ostringstream ss;
  ss.precision(10);
  ss << lead << m.ErC << ',' << m.ErTheta << ',' << m.FPR << ',' << m.FNR << ',' << m.Rpct << ','
     << rank << ',' << m.time_s << '\n';
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized co-sparse factor regression"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file supplying any flag (flags on the command line win)");
  app.require_subcommand(1);

  // simulate
  CLI::App* sim = app.add_subcommand("simulate", "Generate a synthetic data set");
  std::string setup = "I", layout = "gaussian", sim_out = ".";
  std::uint64_t sim_seed = 0;
  double missing = 0.0, snr = 0.5;
  std::optional<int> sim_n, sim_p, sim_rank;
  sim->add_option("--setup", setup, "Setup I (p=100) or II (p=300)")->capture_default_str();
  sim->add_option("--family", layout, "gaussian, bernoulli, poisson, gb or gp")
      ->capture_default_str();
  sim->add_option("--seed", sim_seed, "Master seed")->required();
  sim->add_option("--missing", missing, "Fraction of response cells to delete")
      ->capture_default_str();
  sim->add_option("--snr", snr, "Signal-to-noise ratio for Gaussian columns")->capture_default_str();
  sim->add_option("--n", sim_n, "Override the number of samples");
  sim->add_option("--p", sim_p, "Override the number of predictors");
  sim->add_option("--rank", sim_rank, "True rank (1-3)");
  sim->add_option("--out", sim_out, "Output directory")->capture_default_str();

  // fit
  CLI::App* fit = app.add_subcommand("fit", "Fit GOFAR(S), GOFAR(P) or G-INIT");
  DataArgs fit_data;
  TuneArgs fit_tune;
  std::string method = "gofar-s", fit_out = "fit.json";
  int rmax = 6;
  std::optional<int> fit_rank;
  add_data_options(fit, fit_data);
  add_tuning_options(fit, fit_tune);
  fit->add_option("--method", method, "gofar-s, gofar-p or ginit")
      ->check(CLI::IsMember({"gofar-s", "gofar-p", "ginit"}))
      ->capture_default_str();
  fit->add_option("--rmax", rmax, "Maximum number of components for gofar-s")
      ->capture_default_str();
  fit->add_option("--rank", fit_rank, "Rank for gofar-p and ginit");
  fit->add_option("--lambda", fit_tune.lambda, "Fixed lambda (skips cross-validation)");
  fit->add_option("--seed", fit_tune.seed, "Seed for CV fold assignment")->capture_default_str();
  fit->add_option("--out", fit_out, "Output fit JSON")->capture_default_str();

  // cv
  CLI::App* cv = app.add_subcommand("cv", "Cross-validation curve of one extraction step");
  DataArgs cv_data;
  TuneArgs cv_tune;
  int component = 1;
  std::string cv_csv = "cv.csv", cv_json = "cv.json";
  add_data_options(cv, cv_data);
  add_tuning_options(cv, cv_tune);
  cv->add_option("--seed", cv_tune.seed, "Seed for CV fold assignment")->required();
  cv->add_option("--component", component, "Extraction step (1-based)")->capture_default_str();
  cv->add_option("--out-csv", cv_csv, "Curve as CSV")->capture_default_str();
  cv->add_option("--out-json", cv_json, "Curve as JSON")->capture_default_str();

  // evaluate
  CLI::App* ev = app.add_subcommand("evaluate", "Score fits against simulation truth");
  std::string fit_path, truth_path, aggregate_dir, ev_out = "metrics.csv";
  ev->add_option("--fit", fit_path, "fit.json");
  ev->add_option("--truth", truth_path, "truth.json");
  ev->add_option("--aggregate", aggregate_dir,
                 "Directory of replicate subdirectories, each holding fit.json and truth.json");
  ev->add_option("--out", ev_out, "Output CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      gofar::SimSpec spec = gofar::SimSpec::setup(parse_setup(setup), family_layout(layout));
      spec.seed = sim_seed;
      spec.missing_fraction = missing;
      spec.snr = snr;
      if (sim_n) spec.n = *sim_n;
      if (sim_p) spec.p = *sim_p;
      if (sim_rank) spec.rank = *sim_rank;
      try {
        spec.validate();
      } catch (const std::invalid_argument& e) {
        throw gofar::DataError(e.what());
      }
      const gofar::SimTruth truth = gofar::simulate(spec);
      const fs::path dir(sim_out);
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw gofar::IoError("cannot create " + dir.string() + ": " + ec.message());
      gofar::write_csv(dir / "X.csv", truth.X);
      gofar::write_csv(dir / "Y.csv", truth.Y.values(), &truth.Y.mask());
      gofar::write_csv(dir / "Z.csv", truth.Z);
      gofar::write_text(dir / "truth.json", gofar::truth_to_json(truth).dump(1) + "\n");
      gofar::write_text(dir / "spec.json", gofar::spec_to_json(spec).dump(2) + "\n");
      return 0;
    }

    if (fit->parsed()) {
      const LoadedData data = load_data(fit_data);
      const gofar::GlmProblem problem(data.y, data.design, data.families, fit_data.alpha_p);
      const gofar::TuningConfig cfg = tuning_from(fit_tune);
      gofar::FitResult result;
      if (method == "gofar-s") {
        result = gofar::fit_sequential(problem, rmax, cfg);
      } else {
        if (!fit_rank) throw gofar::DataError("--rank is required for method " + method);
        result = method == "gofar-p" ? gofar::fit_parallel(problem, *fit_rank, cfg)
                                     : gofar::fit_ginit(problem, *fit_rank);
      }
      gofar::write_text(fit_out, gofar::fit_to_json(result, data.families).dump(1) + "\n");
      return 0;
    }

    if (cv->parsed()) {
      const LoadedData data = load_data(cv_data);
      const gofar::GlmProblem problem(data.y, data.design, data.families, cv_data.alpha_p);
      const gofar::CvCurve curve = gofar::cv_for_step(problem, component, tuning_from(cv_tune));
      if (curve.lambdas.empty()) {
        throw gofar::DataError("extraction stopped before component " + std::to_string(component));
      }
      gofar::write_cv_csv(cv_csv, curve);
      gofar::write_text(cv_json, gofar::cv_to_json(curve, component).dump(1) + "\n");
      return 0;
    }

    if (ev->parsed()) {
      const std::string header = "ErC,ErTheta,FPR,FNR,Rpct,rank,time_s\n";
      if (!aggregate_dir.empty()) {
        std::vector<fs::path> dirs;
        std::error_code ec;
        for (const auto& entry : fs::directory_iterator(aggregate_dir, ec)) {
          if (entry.is_directory() && fs::exists(entry.path() / "fit.json") &&
              fs::exists(entry.path() / "truth.json")) {
            dirs.push_back(entry.path());
          }
        }
        if (ec) throw gofar::DataError("cannot list " + aggregate_dir + ": " + ec.message());
        if (dirs.empty()) throw gofar::DataError("no replicate directories in " + aggregate_dir);
        std::sort(dirs.begin(), dirs.end());
        std::vector<gofar::Metrics> rows;
        for (const auto& dir : dirs) {
          rows.push_back(gofar::metrics(gofar::fit_from_json(gofar::read_json(dir / "fit.json")),
                                        gofar::truth_from_json(gofar::read_json(dir / "truth.json"))));
        }
        const gofar::MetricsSummary s = gofar::aggregate(rows);
        gofar::write_text(ev_out, "stat," + header + metrics_line(s.mean, s.rank_mean, "mean,") +
                                      metrics_line(s.sd, s.rank_sd, "sd,"));
        return 0;
      }
      if (fit_path.empty() || truth_path.empty()) {
        throw gofar::DataError("evaluate needs --fit and --truth, or --aggregate");
      }
      for (const auto& p : {fit_path, truth_path}) {
        if (!fs::exists(p)) throw gofar::DataError("missing file " + p);
      }
      const gofar::Metrics m = gofar::metrics(gofar::fit_from_json(gofar::read_json(fit_path)),
                                              gofar::truth_from_json(gofar::read_json(truth_path)));
      gofar::write_text(ev_out, header + metrics_line(m, m.rank));
      return 0;
    }
  } catch (const gofar::SolverError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return 4;
  } catch (const gofar::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const gofar::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
