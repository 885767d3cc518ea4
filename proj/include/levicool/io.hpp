#pragma once

// Output files: CSV tables, JSON documents and optional SVG line plots.
// Files go through OutputSet so a failed command can remove what it wrote.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "levicool/errors.hpp"

namespace levicool {

namespace fs = std::filesystem;

/// Fixed-format number so identical doubles give identical bytes.
inline std::string csv_number(double v) {
  if (std::isnan(v))
    return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

struct Column {
  std::string name;
  std::vector<double> values;
};

struct Table {
  std::vector<Column> columns;
  std::vector<std::string> text_names;         // appended after numeric columns
  std::vector<std::vector<std::string>> text_columns;  // same length as rows

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().values.size(); }
};

inline std::string to_csv(const Table &t) {
  const std::size_t n = t.rows();
  for (const auto &c : t.columns)
    if (c.values.size() != n)
      throw NumericalError("column " + c.name + " has " + std::to_string(c.values.size()) +
                           " rows, expected " + std::to_string(n));
  std::ostringstream out;
  bool first = true;
  for (const auto &c : t.columns) {
    out << (first ? "" : ",") << c.name;
    first = false;
  }
  for (const auto &name : t.text_names) {
    out << (first ? "" : ",") << name;
    first = false;
  }
  out << "\n";
  for (std::size_t i = 0; i < n; ++i) {
    first = true;
    for (const auto &c : t.columns) {
      out << (first ? "" : ",") << csv_number(c.values[i]);
      first = false;
    }
    for (const auto &col : t.text_columns) {
      out << (first ? "" : ",") << col.at(i);
      first = false;
    }
    out << "\n";
  }
  return out.str();
}

/// Parsed CSV with a header row. Non-numeric cells become NaN.
struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  int find(const std::string &name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name)
        return static_cast<int>(i);
    return -1;
  }
  const std::vector<double> &column(const std::string &name) const {
    const int i = find(name);
    if (i < 0)
      throw ValidationError("CSV has no column '" + name + "'");
    return columns[static_cast<std::size_t>(i)];
  }
};

inline std::vector<std::string> split_csv_line(const std::string &line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ','))
    cells.push_back(cell);
  if (!line.empty() && line.back() == ',')
    cells.emplace_back();
  for (auto &c : cells) {
    c.erase(0, c.find_first_not_of(" \t\""));
    c.erase(c.find_last_not_of(" \t\r\"") + 1);
  }
  return cells;
}

inline CsvData read_csv(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot read " + path.string());
  CsvData d;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#')
      continue;
    d.header = split_csv_line(line);
    break;
  }
  if (d.header.empty())
    throw ValidationError(path.string() + ": missing header row");
  d.columns.resize(d.header.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#' || line == "\r")
      continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != d.header.size())
      throw ValidationError(path.string() + ":" + std::to_string(row) + ": expected " +
                            std::to_string(d.header.size()) + " fields, got " +
                            std::to_string(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      char *end = nullptr;
      const double v = std::strtod(cells[i].c_str(), &end);
      d.columns[i].push_back(end && *end == '\0' && !cells[i].empty()
                                 ? v
                                 : std::numeric_limits<double>::quiet_NaN());
    }
  }
  return d;
}

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct PlotSpec {
  std::string title, x_label, y_label;
  bool log_x = false, log_y = false;
  std::vector<Series> series;
};

/// Minimal SVG line plot. Non-finite points and non-positive points on log
/// axes are skipped.
inline std::string render_svg(const PlotSpec &p) {
  const double W = 720, H = 480, L = 80, R = 20, T = 40, B = 60;
  auto tx = [&](double v) { return p.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return p.log_y ? std::log10(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!p.log_x || x > 0) && (!p.log_y || y > 0);
  };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto &s : p.series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
      if (usable(s.x[i], s.y[i])) {
        x0 = std::min(x0, tx(s.x[i]));
        x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, ty(s.y[i]));
        y1 = std::max(y1, ty(s.y[i]));
      }
  if (!std::isfinite(x0)) {
    x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  }
  if (x1 == x0)
    x1 = x0 + 1;
  if (y1 == y0)
    y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
  auto tick = [](double v, bool log) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", log ? std::pow(10.0, v) : v);
    return std::string(buf);
  };

  static const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << p.title
    << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\""
    << H - T - B << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    const double X = L + (W - L - R) * k / 4.0, Y = H - B - (H - T - B) * k / 4.0;
    o << "<text x=\"" << X << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
      << tick(xv, p.log_x) << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << Y + 4 << "\" text-anchor=\"end\">" << tick(yv, p.log_y)
      << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">"
    << p.x_label << "</text>\n";
  o << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << p.y_label << "</text>\n";
  for (std::size_t k = 0; k < p.series.size(); ++k) {
    const auto &s = p.series[k];
    const char *col = colors[k % 5];
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
      if (usable(s.x[i], s.y[i]))
        o << px(s.x[i]) << "," << py(s.y[i]) << " ";
    o << "\"/>\n";
    o << "<text x=\"" << W - R - 8 << "\" y=\"" << T + 16 + 16 * k << "\" text-anchor=\"end\" fill=\""
      << col << "\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Files written by one command. rollback() deletes them.
class OutputSet {
public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec)
      throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  const fs::path &dir() const { return dir_; }
  const std::vector<std::string> &files() const { return files_; }

  fs::path write_text(const std::string &name, const std::string &content) {
    const fs::path path = dir_ / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot write " + path.string());
    if (std::find(files_.begin(), files_.end(), name) == files_.end())
      files_.push_back(name);
    out << content;
    out.flush();
    if (!out)
      throw IoError("write failed for " + path.string());
    return path;
  }

  fs::path write_csv(const std::string &name, const Table &t) { return write_text(name, to_csv(t)); }

  fs::path write_json(const std::string &name, const nlohmann::json &doc) {
    return write_text(name, doc.dump(2) + "\n");
  }

  fs::path write_svg(const std::string &name, const PlotSpec &p) {
    return write_text(name, render_svg(p));
  }

  void rollback() {
    for (const auto &f : files_) {
      std::error_code ec;
      fs::remove(dir_ / f, ec);
    }
    files_.clear();
  }

private:
  fs::path dir_;
  std::vector<std::string> files_;
};

} // namespace levicool
