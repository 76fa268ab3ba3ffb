#pragma once

#include <string>
#include <vector>

namespace ddpc::cli {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct Panel {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    bool log_y = false;
    bool markers = false;
};

/// Static line chart, panels stacked vertically, shared legend.
std::string render_svg(const std::vector<Panel>& panels, int width = 720, int panel_height = 220);

} // namespace ddpc::cli
