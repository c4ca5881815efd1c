#pragma once

#include <string>
#include <utility>
#include <vector>

namespace lws {

struct plot_series {
    std::string name;
    std::vector<std::pair<double, double>> points;
};

// Writes a simple standalone line chart: axes with ticks, one polyline per
// series, legend in the top-right corner. Throws std::invalid_argument when
// no series has points.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<plot_series>& series);

} // namespace lws
