#include "habitforge/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace habitforge {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 60;
constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string escape(std::string_view text) {
  std::string out;
  for (const char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(double width, double height, const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{3}</text>\n",
      width, height, width / 2, escape(title));
}

// Round tick step (1, 2 or 5 times a power of ten) giving about `target` ticks.
double tick_step(double span, int target) {
  if (!(span > 0)) return 1.0;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (const double m : {1.0, 2.0, 5.0}) {
    if (m * mag >= raw) return m * mag;
  }
  return 10.0 * mag;
}

std::string tick_label(double v) {
  if (std::abs(v) < 1e-12) return "0";
  return fmt::format("{:g}", v);
}

}  // namespace

std::string line_chart(const PlotAxes& axes, std::span<const PlotSeries> series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  y0 = std::min(y0, 0.0);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  const auto py = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

  std::string out = header(kWidth, kHeight, axes.title);
  out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
                     kLeft, kTop, pw, ph);
  const double xs = tick_step(x1 - x0, 8), ys = tick_step(y1 - y0, 6);
  for (double t = std::ceil(x0 / xs) * xs; t <= x1 + 1e-9; t += xs) {
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#ddd\"/>"
                       "<text x=\"{0:.2f}\" y=\"{3:.2f}\" text-anchor=\"middle\">{4}</text>\n",
                       px(t), kTop, kTop + ph, kTop + ph + 16, tick_label(t));
  }
  for (double t = std::ceil(y0 / ys) * ys; t <= y1 + 1e-9; t += ys) {
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"#ddd\"/>"
                       "<text x=\"{3:.2f}\" y=\"{4:.2f}\" text-anchor=\"end\">{5}</text>\n",
                       kLeft, py(t), kLeft + pw, kLeft - 6, py(t) + 4, tick_label(t));
  }
  out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n",
                     kLeft + pw / 2, kHeight - 18, escape(axes.x_label));
  out += fmt::format("<text x=\"18\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0:.2f})\">{1}</text>\n",
                     kTop + ph / 2, escape(axes.y_label));

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % kPalette.size()];
    std::string points;
    double last_y = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (axes.step && !first) points += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(last_y));
      points += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
      last_y = s.y[i];
      first = false;
    }
    out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{} points=\"{}\"/>\n",
                       color, s.dashed ? " stroke-dasharray=\"6 4\"" : "", points);
    const double ly = kTop + 14 + 18 * static_cast<double>(k);
    out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{2:.2f}\" y2=\"{1:.2f}\" stroke=\"{3}\" stroke-width=\"3\"/>"
                       "<text x=\"{4:.2f}\" y=\"{5:.2f}\">{6}</text>\n",
                       kLeft + pw + 12, ly, kLeft + pw + 32, color, kLeft + pw + 38, ly + 4,
                       escape(s.label));
  }
  out += "</svg>\n";
  return out;
}

std::string heatmap(const std::string& title, std::span<const std::string> row_labels,
                    std::span<const std::string> col_labels, const Eigen::MatrixXd& values,
                    bool diverging) {
  const double cell_w = std::clamp(560.0 / std::max<Eigen::Index>(1, values.cols()), 8.0, 70.0);
  const double cell_h = 32.0;
  const double left = 110, top = 50;
  const double width = left + cell_w * static_cast<double>(values.cols()) + 30;
  const double height = top + cell_h * static_cast<double>(values.rows()) + 70;
  double lo = values.size() ? values.minCoeff() : 0.0;
  double hi = values.size() ? values.maxCoeff() : 1.0;
  if (diverging) hi = std::max(std::abs(lo), std::abs(hi)), lo = -hi;
  if (!(hi > lo)) hi = lo + 1;
  const bool annotate = cell_w >= 36;

  std::string out = header(width, height, title);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double v = values(r, c);
      const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
      int red, green, blue;
      if (diverging) {
        const double a = std::abs(2 * t - 1);
        red = t >= 0.5 ? 255 : static_cast<int>(255 * (1 - a));
        blue = t < 0.5 ? 255 : static_cast<int>(255 * (1 - a));
        green = static_cast<int>(255 * (1 - a));
      } else {
        red = static_cast<int>(255 * t);
        green = static_cast<int>(80 + 100 * (1 - std::abs(2 * t - 1)));
        blue = static_cast<int>(255 * (1 - t));
      }
      const double x = left + cell_w * static_cast<double>(c), y = top + cell_h * static_cast<double>(r);
      out += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
                         "fill=\"rgb({},{},{})\"/>\n",
                         x, y, cell_w, cell_h, red, green, blue);
      if (annotate) {
        out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\" font-size=\"10\">{:.2f}</text>\n",
                           x + cell_w / 2, y + cell_h / 2 + 4, v);
      }
    }
    if (static_cast<std::size_t>(r) < row_labels.size()) {
      out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{}</text>\n", left - 6,
                         top + cell_h * (static_cast<double>(r) + 0.5) + 4,
                         escape(row_labels[static_cast<std::size_t>(r)]));
    }
  }
  const std::size_t every = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(40.0 / cell_w)));
  for (std::size_t c = 0; c < col_labels.size(); c += every) {
    const double x = left + cell_w * (static_cast<double>(c) + 0.5);
    const double y = top + cell_h * static_cast<double>(values.rows()) + 14;
    out += fmt::format("<text x=\"{0:.2f}\" y=\"{1:.2f}\" text-anchor=\"end\" font-size=\"10\" "
                       "transform=\"rotate(-45 {0:.2f} {1:.2f})\">{2}</text>\n",
                       x, y, escape(col_labels[c]));
  }
  out += "</svg>\n";
  return out;
}

}  // namespace habitforge
