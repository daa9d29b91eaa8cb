#include "axir/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "axir/dataset_io.hpp"
#include "axir/error.hpp"

namespace axir {

Matrix::Matrix(std::string n, std::vector<std::string> rows, std::vector<std::string> cols)
    : name(std::move(n)),
      row_labels(std::move(rows)),
      col_labels(std::move(cols)),
      values(row_labels.size() * col_labels.size()),
      counts(row_labels.size() * col_labels.size(), 0) {}

std::optional<std::pair<std::size_t, std::size_t>> Matrix::argmax() const {
  std::optional<std::pair<std::size_t, std::size_t>> best;
  double best_v = 0.0;
  for (std::size_t r = 0; r < n_rows(); ++r) {
    for (std::size_t c = 0; c < n_cols(); ++c) {
      const auto& v = value(r, c);
      if (v && (!best || *v > best_v)) {
        best = {r, c};
        best_v = *v;
      }
    }
  }
  return best;
}

ReportFormat parse_report_format(const std::string& text) {
  if (text == "csv") return ReportFormat::Csv;
  if (text == "json") return ReportFormat::Json;
  if (text == "svg") return ReportFormat::Svg;
  if (text == "ascii" || text == "txt") return ReportFormat::Ascii;
  throw DataError("unknown report format: " + text);
}

std::string extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::Csv: return "csv";
    case ReportFormat::Json: return "json";
    case ReportFormat::Svg: return "svg";
    case ReportFormat::Ascii: return "txt";
  }
  return "";
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::pair<double, double> value_range(const Matrix& m) {
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& v : m.values) {
    if (!v) continue;
    lo = any ? std::min(lo, *v) : *v;
    hi = any ? std::max(hi, *v) : *v;
    any = true;
  }
  return {lo, hi};
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string to_csv(const Matrix& m) {
  std::string s;
  auto block = [&](const std::string& corner, auto cell) {
    s += csv_field(corner);
    for (const auto& c : m.col_labels) s += "," + csv_field(c);
    s += "\n";
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
      s += csv_field(m.row_labels[r]);
      for (std::size_t c = 0; c < m.n_cols(); ++c) s += "," + cell(r, c);
      s += "\n";
    }
  };
  block("layer", [&](std::size_t r, std::size_t c) {
    const auto& v = m.value(r, c);
    return v ? fmt17(*v) : std::string();
  });
  s += "\n";
  block("count", [&](std::size_t r, std::size_t c) { return std::to_string(m.count(r, c)); });
  return s;
}

Matrix matrix_from_csv(const std::string& text, const std::string& name) {
  std::vector<std::vector<std::string>> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(split_csv_line(line));
  }
  const auto blank = std::find_if(lines.begin(), lines.end(),
                                  [](const auto& l) { return l.size() == 1 && l[0].empty(); });
  if (lines.empty() || blank == lines.end()) throw DataError("matrix csv: missing count block");
  const std::size_t n_rows = static_cast<std::size_t>(blank - lines.begin()) - 1;
  const auto& header = lines[0];
  std::vector<std::string> cols(header.begin() + 1, header.end());
  std::vector<std::string> rows;
  for (std::size_t r = 0; r < n_rows; ++r) rows.push_back(lines[1 + r].at(0));
  Matrix m(name, rows, cols);
  const std::size_t count_start = n_rows + 2;
  if (lines.size() < count_start + 1 + n_rows) throw DataError("matrix csv: truncated count block");
  try {
    for (std::size_t r = 0; r < n_rows; ++r) {
      const auto& vl = lines[1 + r];
      const auto& cl = lines[count_start + 1 + r];
      if (vl.size() != cols.size() + 1 || cl.size() != cols.size() + 1) {
        throw DataError("matrix csv: ragged row " + rows[r]);
      }
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (!vl[c + 1].empty()) m.value(r, c) = std::stod(vl[c + 1]);
        m.count(r, c) = std::stoul(cl[c + 1]);
      }
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const DataError*>(&e)) throw;
    throw DataError(std::string("matrix csv: bad number: ") + e.what());
  }
  return m;
}

nlohmann::json to_json(const Matrix& m) {
  nlohmann::json values = nlohmann::json::array();
  nlohmann::json counts = nlohmann::json::array();
  for (std::size_t r = 0; r < m.n_rows(); ++r) {
    nlohmann::json vr = nlohmann::json::array(), cr = nlohmann::json::array();
    for (std::size_t c = 0; c < m.n_cols(); ++c) {
      const auto& v = m.value(r, c);
      vr.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
      cr.push_back(m.count(r, c));
    }
    values.push_back(std::move(vr));
    counts.push_back(std::move(cr));
  }
  return {{"name", m.name}, {"rows", m.row_labels}, {"cols", m.col_labels},
          {"values", values}, {"counts", counts}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  try {
    Matrix m(j.at("name").get<std::string>(), j.at("rows").get<std::vector<std::string>>(),
             j.at("cols").get<std::vector<std::string>>());
    const auto& values = j.at("values");
    const auto& counts = j.at("counts");
    if (values.size() != m.n_rows() || counts.size() != m.n_rows()) {
      throw DataError("matrix json: row count mismatch");
    }
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
      if (values[r].size() != m.n_cols() || counts[r].size() != m.n_cols()) {
        throw DataError("matrix json: column count mismatch");
      }
      for (std::size_t c = 0; c < m.n_cols(); ++c) {
        if (!values[r][c].is_null()) m.value(r, c) = values[r][c].get<double>();
        m.count(r, c) = counts[r][c].get<std::size_t>();
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("matrix json: ") + e.what());
  }
}

std::string to_svg(const Matrix& m) {
  const int cell = 48, left = 80, top = 40, legend = 40;
  const int width = left + cell * static_cast<int>(m.n_cols()) + 20;
  const int height = top + cell * static_cast<int>(m.n_rows()) + legend;
  const auto [lo, hi] = value_range(m);
  auto colour = [&](double v) {
    const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    // white -> dark blue
    const int r = static_cast<int>(std::lround(255 - t * (255 - 8)));
    const int g = static_cast<int>(std::lround(255 - t * (255 - 48)));
    const int b = static_cast<int>(std::lround(255 - t * (255 - 107)));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return std::string(buf);
  };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"4\" y=\"16\" font-size=\"13\">" << xml_escape(m.name) << "</text>\n";
  for (std::size_t c = 0; c < m.n_cols(); ++c) {
    s << "<text x=\"" << left + cell * c + cell / 2 << "\" y=\"" << top - 6
      << "\" text-anchor=\"middle\">" << xml_escape(m.col_labels[c]) << "</text>\n";
  }
  for (std::size_t r = 0; r < m.n_rows(); ++r) {
    const int y = top + cell * static_cast<int>(r);
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"end\">"
      << xml_escape(m.row_labels[r]) << "</text>\n";
    for (std::size_t c = 0; c < m.n_cols(); ++c) {
      const int x = left + cell * static_cast<int>(c);
      const auto& v = m.value(r, c);
      s << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"" << (v ? colour(*v) : std::string("#ffffff")) << "\" stroke=\"#cccccc\"/>\n";
      if (v) {
        const bool dark = hi > lo && (*v - lo) / (hi - lo) > 0.6;
        s << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
          << "\" text-anchor=\"middle\" fill=\"" << (dark ? "#ffffff" : "#000000") << "\">"
          << fmt3(*v) << "</text>\n";
      }
    }
  }
  const int ly = top + cell * static_cast<int>(m.n_rows()) + 24;
  s << "<text x=\"" << left << "\" y=\"" << ly << "\">min " << fmt3(lo) << "  max " << fmt3(hi)
    << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string to_ascii(const Matrix& m) {
  static const std::string ramp = " .:-=+*#%@";
  const auto [lo, hi] = value_range(m);
  std::size_t label_w = 5;
  for (const auto& r : m.row_labels) label_w = std::max(label_w, r.size());
  std::size_t col_w = 1;
  for (const auto& c : m.col_labels) col_w = std::max(col_w, c.size());
  std::ostringstream s;
  s << m.name << "\n" << std::string(label_w, ' ');
  for (const auto& c : m.col_labels) s << ' ' << std::string(col_w - c.size(), ' ') << c;
  s << "\n";
  for (std::size_t r = 0; r < m.n_rows(); ++r) {
    s << std::string(label_w - m.row_labels[r].size(), ' ') << m.row_labels[r];
    for (std::size_t c = 0; c < m.n_cols(); ++c) {
      const auto& v = m.value(r, c);
      char ch = ' ';
      if (v) {
        const double t = hi > lo ? (*v - lo) / (hi - lo) : 1.0;
        const auto i = static_cast<std::size_t>(std::lround(t * (ramp.size() - 1)));
        ch = ramp[std::min(i, ramp.size() - 1)];
        if (ch == ' ') ch = '.';
      }
      s << ' ' << std::string(col_w - 1, ' ') << ch;
    }
    s << "\n";
  }
  s << "min " << fmt3(lo) << "  max " << fmt3(hi) << "\n";
  return s.str();
}

std::string render(const Matrix& m, ReportFormat format) {
  switch (format) {
    case ReportFormat::Csv: return to_csv(m);
    case ReportFormat::Json: return to_json(m).dump(2) + "\n";
    case ReportFormat::Svg: return to_svg(m);
    case ReportFormat::Ascii: return to_ascii(m);
  }
  return "";
}

std::vector<std::filesystem::path> emit_report(const Matrix& m, const std::filesystem::path& dir,
                                               const std::vector<ReportFormat>& formats) {
  std::vector<std::filesystem::path> out;
  for (auto f : formats) {
    auto path = dir / (m.name + "." + extension(f));
    write_file(path, render(m, f));
    out.push_back(std::move(path));
  }
  return out;
}

}  // namespace axir
