#pragma once

#include <string>
#include <vector>

namespace specarray {

// One labeled line on a chart. x and y must have equal length; points are
// drawn in the given order.
struct SvgSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct SvgChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<SvgSeries> series;
    int width = 720;
    int height = 480;
};

// Self-contained SVG line chart: axes with ticks, one polyline per series,
// legend in the top-right corner. Output is byte-deterministic for a given
// chart (fixed two-decimal coordinates, fixed palette, no timestamps).
std::string render_line_chart(const SvgChart& chart);

void write_line_chart(const std::string& path, const SvgChart& chart);

} // namespace specarray
