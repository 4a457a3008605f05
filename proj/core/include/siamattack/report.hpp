#pragma once

#include <string>
#include <vector>

namespace siam {

struct PlotSeries {
    std::string label;
    std::vector<float> x, y;
};

// Self-contained SVG line plot with axes, ticks, and a legend. Output bytes
// depend only on the inputs, so reports can be compared with a byte diff.
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<PlotSeries>& series);

}  // namespace siam
