#include "latentrob/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace latentrob {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

double metric_of(const SweepRow& r, std::string_view metric) {
  if (metric == "sr") return r.sr;
  if (metric == "ar") return r.ar_hi;
  if (metric == "br") return r.br_hi;
  throw std::invalid_argument("plot: metric must be sr, ar or br");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct Point {
  double ratio, mean, sd;
};

}  // namespace

void write_sweep_plot(const std::vector<SweepRow>& rows, const std::filesystem::path& svg, std::string_view metric) {
  // (series name) -> ratio -> values across trials
  std::map<std::string, std::map<double, std::vector<double>>> groups;
  for (const auto& r : rows) {
    const double v = metric_of(r, metric);
    if (std::isfinite(v)) groups[r.experiment + " eps=" + label_num(r.epsilon)][r.ratio].push_back(v);
  }
  if (groups.empty()) throw std::invalid_argument("plot: no rows to draw");

  std::map<std::string, std::vector<Point>> series;
  double xmin = INFINITY, xmax = -INFINITY, ymax = 0.0;
  for (const auto& [name, by_ratio] : groups) {
    for (const auto& [ratio, vals] : by_ratio) {
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      const double sd = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size() - 1)) : 0.0;
      series[name].push_back({ratio, mean, sd});
      xmin = std::min(xmin, ratio);
      xmax = std::max(xmax, ratio);
      ymax = std::max(ymax, mean + sd);
    }
  }
  if (!(ymax > 0.0)) ymax = 1.0;
  ymax *= 1.05;
  const double lx0 = std::log10(xmin);
  double lx1 = std::log10(xmax);
  if (lx1 - lx0 < 1e-9) lx1 = lx0 + 1.0;

  const double w = 760, h = 480, left = 70, right = 230, top = 30, bottom = 60;
  const double pw = w - left - right, ph = h - top - bottom;
  auto px = [&](double ratio) { return left + (std::log10(ratio) - lx0) / (lx1 - lx0) * pw; };
  auto py = [&](double y) { return top + ph - y / ymax * ph; };

  std::ofstream out(svg);
  if (!out) throw std::runtime_error("plot: cannot write " + svg.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(std::ceil(lx0 - 1e-9)); e <= static_cast<int>(std::floor(lx1 + 1e-9)); ++e) {
    const double x = px(std::pow(10.0, e));
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(x) << "\" y2=\"" << num(top + ph + 5)
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(x) << "\" y=\"" << num(top + ph + 18) << "\" text-anchor=\"middle\">" << label_num(std::pow(10.0, e))
        << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double yv = ymax * i / 5.0;
    out << "<line x1=\"" << num(left - 5) << "\" y1=\"" << num(py(yv)) << "\" x2=\"" << num(left) << "\" y2=\"" << num(py(yv))
        << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(left - 8) << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << label_num(std::round(yv * 1000) / 1000)
        << "</text>\n";
  }
  out << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(h - 15) << "\" text-anchor=\"middle\">d / k</text>\n";
  out << "<text x=\"18\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << num(top + ph / 2)
      << ")\">" << metric << " (mean &#177; 1 sd)</text>\n";

  std::size_t idx = 0;
  for (const auto& [name, pts] : series) {
    const char* color = kPalette[idx % (sizeof kPalette / sizeof *kPalette)];
    std::string band, line;
    for (const auto& p : pts) band += num(px(p.ratio)) + "," + num(py(p.mean + p.sd)) + " ";
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) band += num(px(it->ratio)) + "," + num(py(std::max(0.0, it->mean - it->sd))) + " ";
    for (const auto& p : pts) line += num(px(p.ratio)) + "," + num(py(p.mean)) + " ";
    out << "<polygon points=\"" << band << "\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    out << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    const double ly = top + 15 + 18.0 * static_cast<double>(idx);
    out << "<line x1=\"" << num(w - right + 15) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(w - right + 35) << "\" y2=\""
        << num(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(w - right + 40) << "\" y=\"" << num(ly) << "\">" << name << "</text>\n";
    ++idx;
  }
  out << "</svg>\n";
}

}  // namespace latentrob
