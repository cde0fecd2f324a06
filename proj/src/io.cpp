#include "gofar/io.hpp"

#include "gofar/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gofar {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.begin(), v.end()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void require_schema(const json& j, const char* what) {
  if (!j.is_object() || j.value("schema", 0) != kSchemaVersion) {
    throw DataError(std::string(what) + " has a missing or unsupported schema version");
  }
}

}  // namespace

CsvMatrix read_csv(const std::filesystem::path& path, bool allow_na) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> seen;
  std::string line;
  long r = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<double> vals;
    std::vector<bool> obs;
    std::string_view rest = line;
    long c = 0;
    while (true) {
      const std::size_t comma = rest.find(',');
      const std::string_view cell = trim(rest.substr(0, comma));
      if (cell == "NA") {
        if (!allow_na) throw DataError("missing value not allowed in " + path.filename().string(), r, c);
        vals.push_back(0.0);
        obs.push_back(false);
      } else {
        double x = 0.0;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), x);
        if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
          throw DataError("malformed number '" + std::string(cell) + "' in " +
                              path.filename().string(),
                          r, c);
        }
        vals.push_back(x);
        obs.push_back(true);
      }
      ++c;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (!rows.empty() && vals.size() != rows.front().size()) {
      throw DataError("row has " + std::to_string(vals.size()) + " fields, expected " +
                          std::to_string(rows.front().size()) + " in " + path.filename().string(),
                      r, static_cast<long>(vals.size()) - 1);
    }
    rows.push_back(std::move(vals));
    seen.push_back(std::move(obs));
    ++r;
  }
  if (in.bad()) throw IoError("error reading " + path.string());
  if (rows.empty()) throw DataError(path.filename().string() + " is empty");
  CsvMatrix out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = static_cast<Eigen::Index>(rows.front().size());
  out.values.resize(n, m);
  out.mask.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      out.values(i, j) = rows[i][j];
      out.mask(i, j) = seen[i][j];
    }
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& M, const MaskArray* mask) {
  std::string text;
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j > 0) text += ',';
      text += (mask != nullptr && !(*mask)(i, j)) ? std::string("NA") : format_double(M(i, j));
    }
    text += '\n';
  }
  write_text(path, text);
}

json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    rows.push_back(vector_to_json(M.row(i).transpose()));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw DataError("matrix must be an array of rows");
  if (j.empty()) return {};
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw DataError("ragged matrix in JSON");
    for (Eigen::Index k = 0; k < cols; ++k) M(i, k) = j[i][k].get<double>();
  }
  return M;
}

json fit_to_json(const FitResult& fit, const FamilyList& families, bool with_timing) {
  json j;
  j["schema"] = kSchemaVersion;
  j["method"] = fit.diagnostics.method;
  j["families"] = json::array();
  for (Family f : families) j["families"].push_back(to_string(f));
  j["rank"] = fit.rank;
  j["components"] = json::array();
  for (const auto& c : fit.components) {
    j["components"].push_back({{"d", c.d}, {"u", vector_to_json(c.u)}, {"v", vector_to_json(c.v)}});
  }
  j["C"] = matrix_to_json(fit.C);
  j["beta"] = matrix_to_json(fit.beta);
  j["phi"] = vector_to_json(fit.phi);
  json diag;
  diag["u_gram"] = matrix_to_json(fit.diagnostics.u_gram);
  diag["v_gram"] = matrix_to_json(fit.diagnostics.v_gram);
  diag["steps"] = json::array();
  for (const auto& s : fit.diagnostics.steps) {
    diag["steps"].push_back({{"index", s.index},
                             {"lambda", s.lambda},
                             {"lambda_path", s.lambda_path},
                             {"cv_mean", s.cv_mean},
                             {"cv_sd", s.cv_sd},
                             {"chosen_index", s.chosen_index},
                             {"objective_trace", s.objective_trace},
                             {"iterations", s.iterations},
                             {"converged", s.converged},
                             {"backtracks", s.backtracks},
                             {"screened_null", s.screened_null}});
  }
  j["diagnostics"] = std::move(diag);
  if (with_timing) j["time_s"] = fit.diagnostics.time_s;
  return j;
}

FitResult fit_from_json(const json& j) {
  require_schema(j, "fit JSON");
  try {
    FitResult fit;
    for (const auto& c : j.at("components")) {
      fit.components.push_back(
          {c.at("d").get<double>(), vector_from_json(c.at("u")), vector_from_json(c.at("v"))});
    }
    fit.C = matrix_from_json(j.at("C"));
    fit.beta = matrix_from_json(j.at("beta"));
    fit.phi = vector_from_json(j.at("phi"));
    fit.rank = j.at("rank").get<int>();
    fit.diagnostics.method = j.value("method", std::string());
    fit.diagnostics.time_s = j.value("time_s", 0.0);
    if (j.contains("diagnostics")) {
      const json& diag = j.at("diagnostics");
      fit.diagnostics.u_gram = matrix_from_json(diag.at("u_gram"));
      fit.diagnostics.v_gram = matrix_from_json(diag.at("v_gram"));
      for (const auto& s : diag.at("steps")) {
        ComponentDiagnostics d;
        d.index = s.at("index").get<int>();
        d.lambda = s.at("lambda").get<double>();
        d.lambda_path = s.at("lambda_path").get<std::vector<double>>();
        d.cv_mean = s.at("cv_mean").get<std::vector<double>>();
        d.cv_sd = s.at("cv_sd").get<std::vector<double>>();
        d.chosen_index = s.at("chosen_index").get<int>();
        d.objective_trace = s.at("objective_trace").get<std::vector<double>>();
        d.iterations = s.at("iterations").get<int>();
        d.converged = s.at("converged").get<bool>();
        d.backtracks = s.at("backtracks").get<int>();
        d.screened_null = s.at("screened_null").get<bool>();
        fit.diagnostics.steps.push_back(std::move(d));
      }
    }
    return fit;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed fit JSON: ") + e.what());
  }
}

json spec_to_json(const SimSpec& spec) {
  return {{"schema", kSchemaVersion},
          {"n", spec.n},
          {"p", spec.p},
          {"q_gaussian", spec.q_gaussian},
          {"q_bernoulli", spec.q_bernoulli},
          {"q_poisson", spec.q_poisson},
          {"rank", spec.rank},
          {"d", spec.d},
          {"scale", spec.effective_scale()},
          {"snr", spec.snr},
          {"missing_fraction", spec.missing_fraction},
          {"seed", spec.seed}};
}

json truth_to_json(const SimTruth& t) {
  json j;
  j["schema"] = kSchemaVersion;
  j["spec"] = spec_to_json(t.spec);
  j["families"] = json::array();
  for (Family f : t.families) j["families"].push_back(to_string(f));
  j["sigma"] = t.sigma;
  j["U"] = matrix_to_json(t.U);
  j["V"] = matrix_to_json(t.V);
  j["D"] = vector_to_json(t.D);
  j["beta"] = matrix_to_json(t.beta);
  j["C"] = matrix_to_json(t.C);
  // 1-based supports, so the generated index pattern can be read off directly.
  json supports = json::array();
  for (Eigen::Index k = 0; k < t.U.cols(); ++k) {
    std::vector<int> su, sv;
    for (Eigen::Index i = 0; i < t.U.rows(); ++i) {
      if (t.U(i, k) != 0.0) su.push_back(static_cast<int>(i + 1));
    }
    for (Eigen::Index i = 0; i < t.V.rows(); ++i) {
      if (t.V(i, k) != 0.0) sv.push_back(static_cast<int>(i + 1));
    }
    supports.push_back({{"u", su}, {"v", sv}});
  }
  j["supports"] = std::move(supports);
  j["X"] = matrix_to_json(t.X);
  return j;
}

SimTruth truth_from_json(const json& j) {
  require_schema(j, "truth JSON");
  try {
    SimTruth t;
    const json& s = j.at("spec");
    t.spec.n = s.at("n").get<int>();
    t.spec.p = s.at("p").get<int>();
    t.spec.q_gaussian = s.at("q_gaussian").get<int>();
    t.spec.q_bernoulli = s.at("q_bernoulli").get<int>();
    t.spec.q_poisson = s.at("q_poisson").get<int>();
    t.spec.rank = s.at("rank").get<int>();
    t.spec.d = s.at("d").get<std::array<double, 3>>();
    t.spec.scale = s.at("scale").get<double>();
    t.spec.snr = s.at("snr").get<double>();
    t.spec.missing_fraction = s.at("missing_fraction").get<double>();
    t.spec.seed = s.at("seed").get<std::uint64_t>();
    for (const auto& f : j.at("families")) t.families.push_back(parse_family(f.get<std::string>()));
    t.sigma = j.at("sigma").get<double>();
    t.U = matrix_from_json(j.at("U"));
    t.V = matrix_from_json(j.at("V"));
    t.D = vector_from_json(j.at("D"));
    t.beta = matrix_from_json(j.at("beta"));
    t.C = matrix_from_json(j.at("C"));
    t.X = matrix_from_json(j.at("X"));
    t.Z = Eigen::MatrixXd::Ones(t.X.rows(), 1);
    t.Theta = t.Z * t.beta + t.X * t.C;
    return t;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed truth JSON: ") + e.what());
  }
}

json cv_to_json(const CvCurve& curve, int component) {
  return {{"schema", kSchemaVersion},
          {"component", component},
          {"lambda", curve.lambdas},
          {"mean_nll", curve.mean_nll},
          {"sd_nll", curve.sd_nll},
          {"fold_nll", curve.fold_nll},
          {"chosen_index", curve.chosen_index},
          {"chosen_lambda", curve.lambdas.at(static_cast<std::size_t>(curve.chosen_index))}};
}

void write_cv_csv(const std::filesystem::path& path, const CvCurve& curve) {
  std::string text = "lambda,mean_nll,sd_nll\n";
  for (std::size_t j = 0; j < curve.lambdas.size(); ++j) {
    text += format_double(curve.lambdas[j]) + ',' + format_double(curve.mean_nll[j]) + ',' +
            format_double(curve.sd_nll[j]) + '\n';
  }
  write_text(path, text);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.filename().string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("error writing " + path.string());
}

}  // namespace gofar
