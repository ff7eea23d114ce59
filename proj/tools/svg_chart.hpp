#pragma once

#include <string>
#include <vector>

namespace stshared {

/// One outcome: median line with a 2.5-97.5% band.
struct ChartSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> lo;
    std::vector<double> mid;
    std::vector<double> hi;
};

struct LineChart {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<ChartSeries> series;
    int width = 640;
    int height = 400;
};

/// Self-contained SVG document. Each series is a <g class="series"> holding
/// a band <polygon> (omitted when the band has zero width everywhere) and a
/// median <polyline>; coordinates use fixed three-decimal formatting.
std::string render_svg(const LineChart& chart);

}  // namespace stshared
