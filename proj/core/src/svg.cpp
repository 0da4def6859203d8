#include "advcausal/svg.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "advcausal/common.hpp"

namespace advcausal {

namespace {

// Fixed two-decimal coordinates keep the byte output stable.
std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

const char* kPalette[] = {"#4878cf", "#e0823d", "#5ca45c", "#c34e52",
                          "#8172b2", "#937860", "#da8bc3", "#8c8c8c"};

std::string escape_text(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void emit_plot_svg(const std::vector<PlotSeries>& series,
                   const std::vector<std::string>& labels,
                   const std::filesystem::path& path, const std::string& title,
                   const std::string& y_axis) {
  if (series.empty()) throw ContractError("emit_plot_svg: empty series");
  if (labels.empty()) throw ContractError("emit_plot_svg: empty labels");
  for (const PlotSeries& s : series) {
    if (s.values.size() != labels.size()) {
      throw ContractError("emit_plot_svg: series '" + s.name + "' has " +
                          std::to_string(s.values.size()) + " values for " +
                          std::to_string(labels.size()) + " labels");
    }
    for (double v : s.values) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ContractError("emit_plot_svg: value outside [0, 1] in series '" + s.name + "'");
      }
    }
  }

  const double margin_left = 56.0, margin_right = 16.0;
  const double margin_top = title.empty() ? 18.0 : 34.0;
  const double margin_bottom = 42.0;
  const double plot_w = std::max<std::size_t>(labels.size(), 4) * 72.0;
  const double plot_h = 240.0;
  const double width = margin_left + plot_w + margin_right;
  const double height = margin_top + plot_h + margin_bottom + 18.0 * series.size();

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(width) << "\" height=\""
      << px(height) << "\" viewBox=\"0 0 " << px(width) << " " << px(height) << "\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << px(width) << "\" height=\"" << px(height)
      << "\" fill=\"#ffffff\"/>\n";
  if (!title.empty()) {
    svg << "<text x=\"" << px(width / 2) << "\" y=\"20\" font-family=\"sans-serif\""
        << " font-size=\"14\" text-anchor=\"middle\">" << escape_text(title) << "</text>\n";
  }

  // Axes and horizontal gridlines at 0, 0.25, ..., 1.
  const double x0 = margin_left, y0 = margin_top + plot_h;
  for (int g = 0; g <= 4; ++g) {
    const double frac = g / 4.0;
    const double y = y0 - frac * plot_h;
    svg << "<line x1=\"" << px(x0) << "\" y1=\"" << px(y) << "\" x2=\"" << px(x0 + plot_w)
        << "\" y2=\"" << px(y) << "\" stroke=\"" << (g == 0 ? "#000000" : "#dddddd")
        << "\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << px(x0 - 6) << "\" y=\"" << px(y + 4)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << px(frac)
        << "</text>\n";
  }
  svg << "<line x1=\"" << px(x0) << "\" y1=\"" << px(margin_top) << "\" x2=\"" << px(x0)
      << "\" y2=\"" << px(y0) << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  svg << "<text x=\"14\" y=\"" << px(margin_top + plot_h / 2)
      << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\""
      << " transform=\"rotate(-90 14 " << px(margin_top + plot_h / 2) << ")\">"
      << escape_text(y_axis) << "</text>\n";

  // Grouped bars.
  const double group_w = plot_w / static_cast<double>(labels.size());
  const double pad = group_w * 0.15;
  const double bar_w = (group_w - 2.0 * pad) / static_cast<double>(series.size());
  for (std::size_t c = 0; c < labels.size(); ++c) {
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].values[c];
      const double h = v * plot_h;
      const double bx = x0 + c * group_w + pad + s * bar_w;
      svg << "<rect class=\"bar\" x=\"" << px(bx) << "\" y=\"" << px(y0 - h) << "\" width=\""
          << px(bar_w) << "\" height=\"" << px(h) << "\" fill=\"" << kPalette[s % 8]
          << "\"/>\n";
    }
    svg << "<text x=\"" << px(x0 + c * group_w + group_w / 2) << "\" y=\"" << px(y0 + 16)
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
        << escape_text(labels[c]) << "</text>\n";
  }

  // Legend, one swatch per series.
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double ly = y0 + 30.0 + 18.0 * s;
    svg << "<rect x=\"" << px(x0) << "\" y=\"" << px(ly) << "\" width=\"12\" height=\"12\""
        << " fill=\"" << kPalette[s % 8] << "\"/>\n";
    svg << "<text x=\"" << px(x0 + 18) << "\" y=\"" << px(ly + 10)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape_text(series[s].name)
        << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << svg.str();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace advcausal
