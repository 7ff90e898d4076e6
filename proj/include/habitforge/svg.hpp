#pragma once

// Minimal standalone SVG charts: line/step plots and annotated heatmaps.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace habitforge {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct PlotAxes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool step = false;  // draw series as right-continuous steps
};

std::string line_chart(const PlotAxes& axes, std::span<const PlotSeries> series);

/// Cells annotated with their value; color runs blue (low) to red (high),
/// or diverging around zero when `diverging` is set.
std::string heatmap(const std::string& title, std::span<const std::string> row_labels,
                    std::span<const std::string> col_labels, const Eigen::MatrixXd& values,
                    bool diverging = false);

}  // namespace habitforge
