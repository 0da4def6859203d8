#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace advcausal {

struct PlotSeries {
  std::string name;
  std::vector<double> values;  // in [0, 1]
};

/// Grouped bar chart as a standalone SVG built from rect/line/text elements
/// only. Byte output is deterministic for identical input. Every series must
/// match the label count and stay inside [0, 1].
void emit_plot_svg(const std::vector<PlotSeries>& series,
                   const std::vector<std::string>& labels,
                   const std::filesystem::path& path, const std::string& title = "",
                   const std::string& y_axis = "accuracy");

}  // namespace advcausal
