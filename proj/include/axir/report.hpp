#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace axir {

/// Labelled 2-D table of means with per-cell contribution counts. A cell
/// with no contributions has no value; it renders blank, never as zero.
struct Matrix {
  std::string name;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::optional<double>> values;  // row-major
  std::vector<std::size_t> counts;            // row-major

  Matrix() = default;
  Matrix(std::string name, std::vector<std::string> rows, std::vector<std::string> cols);

  std::size_t n_rows() const { return row_labels.size(); }
  std::size_t n_cols() const { return col_labels.size(); }
  std::optional<double>& value(std::size_t r, std::size_t c) { return values[r * n_cols() + c]; }
  const std::optional<double>& value(std::size_t r, std::size_t c) const {
    return values[r * n_cols() + c];
  }
  std::size_t& count(std::size_t r, std::size_t c) { return counts[r * n_cols() + c]; }
  std::size_t count(std::size_t r, std::size_t c) const { return counts[r * n_cols() + c]; }

  /// (row, col) of the largest present value.
  std::optional<std::pair<std::size_t, std::size_t>> argmax() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

enum class ReportFormat { Csv, Json, Svg, Ascii };
ReportFormat parse_report_format(const std::string& text);
std::string extension(ReportFormat format);

/// Lossless: values print with 17 significant digits. Layout: header row
/// `layer,<col>...,` then per row `<label>,<values>...` followed by a
/// second block of the same shape holding counts.
std::string to_csv(const Matrix& m);
Matrix matrix_from_csv(const std::string& text, const std::string& name = "");

nlohmann::json to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

/// Two-colour linear ramp with value annotations and a min/max legend.
std::string to_svg(const Matrix& m);

/// Character ramp " .:-=+*#%@" with a min/max legend.
std::string to_ascii(const Matrix& m);

std::string render(const Matrix& m, ReportFormat format);

/// Writes `dir/<matrix.name>.<ext>` for each format. Returns written paths.
std::vector<std::filesystem::path> emit_report(const Matrix& m, const std::filesystem::path& dir,
                                               const std::vector<ReportFormat>& formats);

}  // namespace axir
