#include "itogen/svg.hpp"

#include "itogen/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace itogen::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 60.0;
constexpr double kRight = 20.0;
constexpr double kTop = 36.0;
constexpr double kBottom = 48.0;

const char* colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  return palette[i % 8];
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

Frame fit(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) { x0 -= 0.5; x1 += 0.5; }
  if (!(y1 > y0)) { y0 -= 0.5; y1 += 0.5; }
  const double pad = 0.04 * (y1 - y0);
  return {x0, x1, y0 - pad, y1 + pad};
}

void open(std::ostringstream& out, const Frame& f, const std::string& title,
          const std::string& x_label, const std::string& y_label) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(title) << "</text>\n";
  const double bx = kLeft, by = kTop, bw = kWidth - kLeft - kRight, bh = kHeight - kTop - kBottom;
  out << "<rect x=\"" << bx << "\" y=\"" << by << "\" width=\"" << bw << "\" height=\"" << bh
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    out << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(kHeight - kBottom + 14)
        << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
    out << "<text x=\"" << num(kLeft - 4) << "\" y=\"" << num(f.py(yv) + 4)
        << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n";
  }
  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
  out << "<text x=\"14\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << kHeight / 2 << ")\">" << escape(y_label) << "</text>\n";
}

void legend(std::ostringstream& out, const std::vector<std::string>& labels) {
  for (std::size_t i = 0; i < labels.size() && i < 8; ++i) {
    const double y = kTop + 14.0 + 14.0 * static_cast<double>(i);
    out << "<line x1=\"" << kLeft + 10 << "\" y1=\"" << y - 4 << "\" x2=\"" << kLeft + 28
        << "\" y2=\"" << y - 4 << "\" stroke=\"" << colour(i) << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << kLeft + 32 << "\" y=\"" << y << "\">" << escape(labels[i])
        << "</text>\n";
  }
}

}  // namespace

std::string line_chart(const std::vector<Series>& series, const std::string& title,
                       const std::string& x_label, const std::string& y_label) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DataError("series '" + s.label + "' has mismatched lengths");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) { x0 = 0; x1 = 1; y0 = 0; y1 = 1; }
  const Frame f = fit(x0, x1, y0, y1);
  std::ostringstream out;
  open(out, f, title, x_label, y_label);
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    out << "<polyline fill=\"none\" stroke=\"" << colour(k) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      out << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
    }
    out << "\"/>\n";
    labels.push_back(s.label);
  }
  legend(out, labels);
  out << "</svg>\n";
  return out.str();
}

std::string path_overlay(const sim::PathDataset& ds, std::size_t max_paths,
                         const std::string& title, int coord) {
  std::vector<Series> series;
  const std::size_t n = std::min(max_paths, ds.n_paths());
  for (std::size_t p = 0; p < n; ++p) {
    Series s;
    s.label = "path " + std::to_string(ds.path_ids()[p]);
    for (GridIndex k = 0; k < ds.grid().n_points(); ++k) {
      s.x.push_back(ds.grid().time(k));
      s.y.push_back(ds.at(p, k, coord));
    }
    series.push_back(std::move(s));
  }
  std::string svg = line_chart(series, title, "t", "X_t");
  return svg;
}

std::string marginal_histogram(const eval::MarginalComparison& c, const std::string& label_a,
                               const std::string& label_b) {
  const auto& h = c.histogram;
  const std::size_t bins = h.counts_a.size();
  if (bins == 0) throw DataError("empty histogram");
  auto density = [&](const std::vector<std::size_t>& counts, std::size_t n, std::size_t i) {
    const double w = h.edges[i + 1] - h.edges[i];
    return n == 0 || w <= 0.0 ? 0.0 : static_cast<double>(counts[i]) / (static_cast<double>(n) * w);
  };
  double ymax = 0.0;
  for (std::size_t i = 0; i < bins; ++i) {
    ymax = std::max({ymax, density(h.counts_a, c.n_a, i), density(h.counts_b, c.n_b, i)});
  }
  const Frame f = fit(h.edges.front(), h.edges.back(), 0.0, ymax);
  std::ostringstream out;
  open(out, f, "Distribution of X_t at t = " + tick(c.time), "x", "density");
  const std::vector<std::size_t>* counts[] = {&h.counts_a, &h.counts_b};
  const std::size_t sizes[] = {c.n_a, c.n_b};
  for (int s = 0; s < 2; ++s) {
    for (std::size_t i = 0; i < bins; ++i) {
      const double y = density(*counts[s], sizes[s], i);
      const double x = f.px(h.edges[i]);
      const double w = f.px(h.edges[i + 1]) - x;
      out << "<rect x=\"" << num(x) << "\" y=\"" << num(f.py(y)) << "\" width=\"" << num(w)
          << "\" height=\"" << num(f.py(0.0) - f.py(y)) << "\" fill=\"" << colour(static_cast<std::size_t>(s))
          << "\" fill-opacity=\"0.4\"/>\n";
    }
  }
  legend(out, {label_a, label_b});
  out << "</svg>\n";
  return out.str();
}

}  // namespace itogen::svg
