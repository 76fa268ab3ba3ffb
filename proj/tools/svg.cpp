#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace ddpc::cli {

namespace {

constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
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

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void settle() {
        if (!(lo <= hi)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-300) {
            const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
            lo -= pad;
            hi += pad;
        }
    }
};

} // namespace

std::string render_svg(const std::vector<Panel>& panels, int width, int panel_height) {
    const int left = 70, right = 150, top = 30, bottom = 40;
    const int plot_w = width - left - right;
    const int plot_h = panel_height - top - bottom;
    const int height = panel_height * static_cast<int>(std::max<std::size_t>(panels.size(), 1));

    std::string out = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        width, height);

    for (std::size_t pi = 0; pi < panels.size(); ++pi) {
        const Panel& panel = panels[pi];
        const int y0 = static_cast<int>(pi) * panel_height + top;
        auto ty = [&](double v) { return panel.log_y ? std::log10(std::max(v, 1e-300)) : v; };

        Range xr, yr;
        for (const auto& s : panel.series) {
            for (double v : s.x) xr.add(v);
            for (double v : s.y) {
                if (!panel.log_y || v > 0.0) yr.add(ty(v));
            }
        }
        xr.settle();
        yr.settle();
        auto px = [&](double v) { return left + (v - xr.lo) / (xr.hi - xr.lo) * plot_w; };
        auto py = [&](double v) { return y0 + plot_h - (ty(v) - yr.lo) / (yr.hi - yr.lo) * plot_h; };

        out += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"13\">{}</text>\n", left, y0 - 10, escape(panel.title));
        out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", left,
                           y0, plot_w, plot_h);
        for (int k = 0; k <= 4; ++k) {
            const double fx = xr.lo + (xr.hi - xr.lo) * k / 4.0;
            const double fy = yr.lo + (yr.hi - yr.lo) * k / 4.0;
            const double gx = left + plot_w * k / 4.0;
            const double gy = y0 + plot_h - plot_h * k / 4.0;
            out += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.3g}</text>\n", gx,
                               y0 + plot_h + 14, fx);
            out += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", left - 4, gy + 4,
                               panel.log_y ? std::pow(10.0, fy) : fy);
            out += fmt::format("<line x1=\"{}\" x2=\"{}\" y1=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", left,
                               left + plot_w, gy, gy);
        }
        out += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", left + plot_w / 2,
                           y0 + plot_h + 30, escape(panel.x_label));
        out += fmt::format("<text transform=\"translate({},{}) rotate(-90)\" text-anchor=\"middle\">{}</text>\n", 14,
                           y0 + plot_h / 2, escape(panel.y_label));

        for (std::size_t si = 0; si < panel.series.size(); ++si) {
            const Series& s = panel.series[si];
            const char* color = kColors[si % std::size(kColors)];
            std::string pts;
            const std::size_t n = std::min(s.x.size(), s.y.size());
            for (std::size_t i = 0; i < n; ++i) {
                if (!std::isfinite(s.y[i]) || (panel.log_y && s.y[i] <= 0.0)) continue;
                pts += fmt::format("{:.1f},{:.1f} ", px(s.x[i]), py(s.y[i]));
                if (panel.markers) {
                    out += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"{}\"/>\n", px(s.x[i]),
                                       py(s.y[i]), color);
                }
            }
            out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\" points=\"{}\"/>\n", color,
                               pts);
            const int ly = y0 + 12 + static_cast<int>(si) * 16;
            out += fmt::format("<line x1=\"{}\" x2=\"{}\" y1=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                               left + plot_w + 10, left + plot_w + 30, ly, ly, color);
            out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", left + plot_w + 35, ly + 4, escape(s.label));
        }
    }
    out += "</svg>\n";
    return out;
}

} // namespace ddpc::cli
