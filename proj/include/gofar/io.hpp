#pragma once

#include "gofar/families.hpp"
#include "gofar/model.hpp"
#include "gofar/simbench.hpp"
#include "gofar/tuning.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace gofar {

inline constexpr int kSchemaVersion = 1;

struct CsvMatrix {
  Eigen::MatrixXd values;
  MaskArray mask;  // false where the cell read "NA"
};

/// Headerless comma-separated numbers. "NA" cells are only accepted with
/// allow_na. Throws IoError when the file cannot be read and DataError
/// (naming the cell) on malformed content.
CsvMatrix read_csv(const std::filesystem::path& path, bool allow_na);

/// Writes with round-trip precision; cells outside `mask` (if given) as NA.
void write_csv(const std::filesystem::path& path, const Eigen::MatrixXd& M,
               const MaskArray* mask = nullptr);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& M);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

/// Fit serialization. `with_timing` = false drops wall-clock fields so that
/// runs can be compared byte for byte.
nlohmann::json fit_to_json(const FitResult& fit, const FamilyList& families,
                           bool with_timing = true);
FitResult fit_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const SimSpec& spec);
nlohmann::json truth_to_json(const SimTruth& truth);
/// Rebuilds the truth (Y is not stored in truth.json and stays empty).
SimTruth truth_from_json(const nlohmann::json& j);

nlohmann::json cv_to_json(const CvCurve& curve, int component);
void write_cv_csv(const std::filesystem::path& path, const CvCurve& curve);

nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace gofar
