#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dilemma/alignment.hpp"
#include "dilemma/analysis.hpp"
#include "dilemma/csv.hpp"
#include "dilemma/scenario.hpp"

namespace dilemma {

namespace svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return std::string(buf);
}

struct Tick {
  double value;
  double offset;  // pixel offset along the axis
};

// Round tick positions covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) hi = lo + 1.0;
  double span = hi - lo;
  double raw = span / target;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double mult : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (mag * mult >= raw) {
      step = mag * mult;
      break;
    }
  }
  std::vector<double> ticks;
  double first = std::ceil(lo / step) * step;
  for (double v = first; v <= hi + 1e-12; v += step) {
    double snapped = std::fabs(v) < step * 1e-9 ? 0.0 : v;
    ticks.push_back(snapped);
  }
  return ticks;
}

}  // namespace svg

// ---------------------------------------------------------------------------
// Radar chart: nine spokes (one per moral dimension), one closed polyline
// per AMCE vector.
// ---------------------------------------------------------------------------

struct RadarSeries {
  std::string name;
  std::string color;
  bool dashed = false;
  std::array<double, kNumDimensions> values{};
};

inline std::string radar_chart_svg(const std::vector<RadarSeries>& series,
                                   const std::string& title,
                                   const std::string& manifest_ref = "") {
  if (series.empty())
    throw std::invalid_argument("radar_chart_svg: no series to plot");
  const double width = 720, height = 640;
  const double cx = 360, cy = 340, radius = 230;

  double lo = 0.0, hi = 0.0;
  for (const auto& s : series)
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  double pad = 0.1 * std::max(1e-9, hi - lo);
  lo -= pad;
  hi += pad;
  auto to_r = [&](double v) { return radius * (v - lo) / (hi - lo); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  if (!manifest_ref.empty())
    out << "<!-- manifest: " << manifest_ref << " -->\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << cx << "\" y=\"36\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"18\">"
      << title << "</text>\n";

  auto angle = [&](int k) {
    return -std::numbers::pi / 2.0 +
           2.0 * std::numbers::pi * k / kNumDimensions;
  };
  auto point = [&](int k, double r) {
    return std::pair{cx + r * std::cos(angle(k)), cy + r * std::sin(angle(k))};
  };

  // Grid rings with value labels; the zero ring is emphasized.
  for (double tv : svg::nice_ticks(lo, hi, 4)) {
    double r = to_r(tv);
    if (r < 1.0 || r > radius + 1.0) continue;
    out << "<polygon points=\"";
    for (int k = 0; k < kNumDimensions; ++k) {
      auto [x, y] = point(k, r);
      out << svg::num(x) << ',' << svg::num(y) << ' ';
    }
    bool zero = std::fabs(tv) < 1e-12;
    out << "\" fill=\"none\" stroke=\"" << (zero ? "#888888" : "#dddddd")
        << "\" stroke-width=\"" << (zero ? "1.5" : "1") << "\"/>\n";
    auto [tx, ty] = point(0, r);
    out << "<text x=\"" << svg::num(tx + 6) << "\" y=\"" << svg::num(ty)
        << "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#888888\">"
        << svg::num(tv) << "</text>\n";
  }

  // Spokes and labels.
  for (int k = 0; k < kNumDimensions; ++k) {
    auto [x, y] = point(k, radius);
    out << "<line x1=\"" << cx << "\" y1=\"" << cy << "\" x2=\"" << svg::num(x)
        << "\" y2=\"" << svg::num(y)
        << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
    auto [lx, ly] = point(k, radius + 18);
    std::string anchor = std::fabs(lx - cx) < 10
                             ? "middle"
                             : (lx > cx ? "start" : "end");
    Dimension d = kAllDimensions[static_cast<std::size_t>(k)];
    out << "<text x=\"" << svg::num(lx) << "\" y=\"" << svg::num(ly + 4)
        << "\" text-anchor=\"" << anchor
        << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << dimension_name(d) << "</text>\n";
  }

  // Series polygons.
  for (const auto& s : series) {
    out << "<polygon points=\"";
    for (int k = 0; k < kNumDimensions; ++k) {
      auto [x, y] = point(k, to_r(s.values[static_cast<std::size_t>(k)]));
      out << svg::num(x) << ',' << svg::num(y) << ' ';
    }
    out << "\" fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\"";
    if (s.dashed) out << " stroke-dasharray=\"6,4\"";
    out << "/>\n";
  }

  // Legend.
  double ly = 60;
  for (const auto& s : series) {
    out << "<line x1=\"24\" y1=\"" << ly << "\" x2=\"56\" y2=\"" << ly
        << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"";
    if (s.dashed) out << " stroke-dasharray=\"6,4\"";
    out << "/>\n<text x=\"62\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.name
        << "</text>\n";
    ly += 18;
  }
  out << "</svg>\n";
  return out.str();
}

inline std::string radar_chart_csv(const std::vector<RadarSeries>& series,
                                   const std::string& manifest_ref = "") {
  std::ostringstream out;
  CsvWriter w(out);
  if (!manifest_ref.empty()) w.comment("manifest: " + manifest_ref);
  std::vector<std::string> header = {"dimension"};
  for (const auto& s : series) header.push_back(s.name);
  w.row(header);
  for (int k = 0; k < kNumDimensions; ++k) {
    std::vector<std::string> row = {
        dimension_name(kAllDimensions[static_cast<std::size_t>(k)])};
    for (const auto& s : series)
      row.push_back(csv_num(s.values[static_cast<std::size_t>(k)]));
    w.row(row);
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Delta scatter: uncertainty shifts vs alignment shifts, with per-model
// trajectories from rate 0.05 to 0.1.
// ---------------------------------------------------------------------------

inline std::string trajectory_scatter_svg(const std::vector<TrajectoryRow>& rows,
                                          const std::string& title,
                                          const std::string& manifest_ref = "") {
  const double width = 640, height = 480;
  const double ml = 70, mr = 20, mt = 50, mb = 55;
  double xlo = 0, xhi = 0, ylo = 0, yhi = 0;
  for (const auto& r : rows) {
    xlo = std::min(xlo, r.d_mutual_information);
    xhi = std::max(xhi, r.d_mutual_information);
    ylo = std::min(ylo, r.d_l2);
    yhi = std::max(yhi, r.d_l2);
  }
  double xpad = 0.1 * std::max(1e-9, xhi - xlo);
  double ypad = 0.1 * std::max(1e-9, yhi - ylo);
  xlo -= xpad; xhi += xpad; ylo -= ypad; yhi += ypad;
  auto px = [&](double v) {
    return ml + (v - xlo) / (xhi - xlo) * (width - ml - mr);
  };
  auto py = [&](double v) {
    return height - mb - (v - ylo) / (yhi - ylo) * (height - mt - mb);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  if (!manifest_ref.empty())
    out << "<!-- manifest: " << manifest_ref << " -->\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2
      << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">"
      << title << "</text>\n";

  for (double tv : svg::nice_ticks(xlo, xhi)) {
    out << "<line x1=\"" << svg::num(px(tv)) << "\" y1=\"" << mt << "\" x2=\""
        << svg::num(px(tv)) << "\" y2=\"" << height - mb
        << "\" stroke=\"#eeeeee\"/>\n";
    out << "<text x=\"" << svg::num(px(tv)) << "\" y=\"" << height - mb + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"10\">"
        << svg::num(tv) << "</text>\n";
  }
  for (double tv : svg::nice_ticks(ylo, yhi)) {
    out << "<line x1=\"" << ml << "\" y1=\"" << svg::num(py(tv)) << "\" x2=\""
        << width - mr << "\" y2=\"" << svg::num(py(tv))
        << "\" stroke=\"#eeeeee\"/>\n";
    out << "<text x=\"" << ml - 8 << "\" y=\"" << svg::num(py(tv) + 3)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"10\">"
        << svg::num(tv) << "</text>\n";
  }
  if (xlo < 0 && xhi > 0)
    out << "<line x1=\"" << svg::num(px(0)) << "\" y1=\"" << mt << "\" x2=\""
        << svg::num(px(0)) << "\" y2=\"" << height - mb
        << "\" stroke=\"#999999\"/>\n";
  if (ylo < 0 && yhi > 0)
    out << "<line x1=\"" << ml << "\" y1=\"" << svg::num(py(0)) << "\" x2=\""
        << width - mr << "\" y2=\"" << svg::num(py(0))
        << "\" stroke=\"#999999\"/>\n";

  // Trajectory lines connect a model's two treated rates.
  std::map<std::string, std::vector<const TrajectoryRow*>> by_model;
  for (const auto& r : rows) by_model[r.model].push_back(&r);
  for (auto& [model, pts] : by_model) {
    std::sort(pts.begin(), pts.end(),
              [](const TrajectoryRow* a, const TrajectoryRow* b) {
                return a->rate_to < b->rate_to;
              });
    for (std::size_t i = 1; i < pts.size(); ++i)
      out << "<line x1=\"" << svg::num(px(pts[i - 1]->d_mutual_information))
          << "\" y1=\"" << svg::num(py(pts[i - 1]->d_l2)) << "\" x2=\""
          << svg::num(px(pts[i]->d_mutual_information)) << "\" y2=\""
          << svg::num(py(pts[i]->d_l2))
          << "\" stroke=\"#aaaaaa\" stroke-width=\"1\"/>\n";
  }
  for (const auto& r : rows) {
    const char* color = r.rate_to < 0.075 ? "#2a9d8f" : "#e76f51";
    out << "<circle cx=\"" << svg::num(px(r.d_mutual_information)) << "\" cy=\""
        << svg::num(py(r.d_l2)) << "\" r=\"4\" fill=\"" << color << "\">"
        << "<title>" << r.model << " 0-&gt;" << r.rate_to << "</title>"
        << "</circle>\n";
  }

  out << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">delta mutual information (bits)</text>\n";
  out << "<text x=\"18\" y=\"" << (mt + height - mb) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 18 "
      << (mt + height - mb) / 2 << ")\">delta L2</text>\n";
  out << "</svg>\n";
  return out.str();
}

inline std::string trajectory_csv(const TrajectoryTable& table,
                                  const std::string& manifest_ref = "") {
  std::ostringstream out;
  CsvWriter w(out);
  if (!manifest_ref.empty()) w.comment("manifest: " + manifest_ref);
  w.row({"model", "rate_from", "rate_to", "d_total_entropy",
         "d_conditional_entropy", "d_mutual_information", "d_l2"});
  for (const auto& r : table.rows)
    w.row({r.model, csv_num(r.rate_from), csv_num(r.rate_to),
           csv_num(r.d_total_entropy), csv_num(r.d_conditional_entropy),
           csv_num(r.d_mutual_information), csv_num(r.d_l2)});
  for (const auto& m : table.excluded_models)
    w.comment("excluded (no dropout-0 baseline): " + m);
  return out.str();
}

// ---------------------------------------------------------------------------
// Alignment-score table in the reference layout: one row per model, L2 per
// rate with the baseline delta in parentheses, bold flag for improvements.
// ---------------------------------------------------------------------------

struct ScoreEntry {
  std::string model;
  double dropout_rate = 0.0;
  double l2 = 0.0;
};

inline std::string format_rate(double rate) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", rate);
  return std::string(buf);
}

inline std::string score_table_csv(const std::vector<ScoreEntry>& entries,
                                   const std::string& manifest_ref = "") {
  std::map<std::string, std::map<double, double>> by_model;
  std::set<double> rates;
  for (const auto& e : entries) {
    by_model[e.model][e.dropout_rate] = e.l2;
    rates.insert(e.dropout_rate);
  }
  if (by_model.empty())
    throw std::invalid_argument("score_table_csv: no score entries");
  if (!rates.count(0.0))
    throw std::invalid_argument("score_table_csv: baseline rate 0 missing");

  std::ostringstream out;
  CsvWriter w(out);
  if (!manifest_ref.empty()) w.comment("manifest: " + manifest_ref);
  std::vector<std::string> header = {"model", "l2_0.00"};
  for (double r : rates) {
    if (r == 0.0) continue;
    header.push_back("l2_" + format_rate(r));
    header.push_back("delta_" + format_rate(r));
    header.push_back("cell_" + format_rate(r));
    header.push_back("improved_" + format_rate(r));
  }
  w.row(header);
  for (const auto& [model, per_rate] : by_model) {
    auto base = per_rate.find(0.0);
    if (base == per_rate.end()) continue;
    std::vector<std::string> row = {model, csv_num(base->second)};
    for (double r : rates) {
      if (r == 0.0) continue;
      auto it = per_rate.find(r);
      if (it == per_rate.end()) {
        row.insert(row.end(), {"", "", "", ""});
        continue;
      }
      double delta = it->second - base->second;
      char delta_buf[16], cell_buf[48];
      std::snprintf(delta_buf, sizeof(delta_buf), "%+.2f", delta);
      std::snprintf(cell_buf, sizeof(cell_buf), "%.3f (%s)", it->second,
                    delta_buf);
      row.push_back(csv_num(it->second));
      row.push_back(delta_buf);
      row.push_back(cell_buf);
      row.push_back(delta < 0 ? "1" : "0");
    }
    w.row(row);
  }
  return out.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << text;
}

}  // namespace dilemma
