#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "zss/common.hpp"

namespace zss {

// Reports are plain structured text: a TSV table plus a human-readable
// summary block. Formatting is fixed-precision so identical runs produce
// identical bytes.

inline std::string format_fixed(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

struct ReportTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_tsv() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) os << '\t';
      os << columns[i];
    }
    os << '\n';
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) os << '\t';
        os << row[i];
      }
      os << '\n';
    }
    return os.str();
  }
};

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "report: cannot open '" + path + "' for writing");
  f << content;
  check(f.good(), "report: write to '" + path + "' failed");
}

/// Minimal SVG bar histogram (value distribution plots in run reports).
inline std::string svg_histogram(const std::vector<double>& values, int bins,
                                 const std::string& title) {
  check(bins >= 1, "svg_histogram: need at least one bin");
  double lo = 1e300, hi = -1e300;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (values.empty()) lo = hi = 0;
  if (hi <= lo) hi = lo + 1;
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  int peak = 1;
  for (int c : counts) peak = std::max(peak, c);

  const int w = 640, h = 360, margin = 40;
  double bw = static_cast<double>(w - 2 * margin) / bins;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\">\n";
  os << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << title << "</text>\n";
  for (int b = 0; b < bins; ++b) {
    double frac = static_cast<double>(counts[static_cast<std::size_t>(b)]) / peak;
    double bh = frac * (h - 2 * margin);
    os << "<rect x=\"" << format_fixed(margin + b * bw, 1) << "\" y=\""
       << format_fixed(h - margin - bh, 1) << "\" width=\"" << format_fixed(bw * 0.9, 1)
       << "\" height=\"" << format_fixed(bh, 1) << "\" fill=\"#4878a8\"/>\n";
  }
  os << "<text x=\"" << margin << "\" y=\"" << h - margin + 16 << "\" font-size=\"11\">"
     << format_fixed(lo, 2) << "</text>\n";
  os << "<text x=\"" << w - margin << "\" y=\"" << h - margin + 16
     << "\" text-anchor=\"end\" font-size=\"11\">" << format_fixed(hi, 2) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace zss
