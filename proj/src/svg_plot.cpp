#include "lws/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace lws {

static const char* k_palette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

static std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<plot_series>& series) {
    double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
    bool any = false;
    for (const plot_series& s : series)
        for (const auto& [x, y] : s.points) {
            if (!any) {
                x_min = x_max = x;
                y_min = y_max = y;
                any = true;
            }
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
    if (!any) throw std::invalid_argument("write_svg_chart: no points to plot");
    if (x_max == x_min) x_max = x_min + 1;
    if (y_max == y_min) y_max = y_min + 1;

    const double width = 720, height = 440;
    const double ml = 70, mr = 160, mt = 40, mb = 55; // margins
    const double pw = width - ml - mr, ph = height - mt - mb;
    const auto px = [&](double x) { return ml + (x - x_min) / (x_max - x_min) * pw; };
    const auto py = [&](double y) { return mt + ph - (y - y_min) / (y_max - y_min) * ph; };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";

    // frame and ticks
    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#444\"/>\n";
    const int n_ticks = 5;
    for (int i = 0; i <= n_ticks; ++i) {
        const double fx = x_min + (x_max - x_min) * i / n_ticks;
        const double fy = y_min + (y_max - y_min) * i / n_ticks;
        out << "<line x1=\"" << px(fx) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(fx)
            << "\" y2=\"" << mt + ph + 5 << "\" stroke=\"#444\"/>\n"
            << "<text x=\"" << px(fx) << "\" y=\"" << mt + ph + 20
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fx)
            << "</text>\n"
            << "<line x1=\"" << ml - 5 << "\" y1=\"" << py(fy) << "\" x2=\"" << ml << "\" y2=\""
            << py(fy) << "\" stroke=\"#444\"/>\n"
            << "<text x=\"" << ml - 8 << "\" y=\"" << py(fy) + 4
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(fy)
            << "</text>\n";
    }
    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
        << "</text>\n"
        << "<text x=\"18\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 18 " << mt + ph / 2 << ")\">" << y_label << "</text>\n";

    // series polylines and legend
    for (size_t s = 0; s < series.size(); ++s) {
        if (series[s].points.empty()) continue;
        const char* color = k_palette[s % (sizeof k_palette / sizeof *k_palette)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
        for (const auto& [x, y] : series[s].points) out << px(x) << "," << py(y) << " ";
        out << "\"/>\n";

        const double ly = mt + 16 + 18 * (double)s;
        out << "<line x1=\"" << ml + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 34
            << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
            << "<text x=\"" << ml + pw + 40 << "\" y=\"" << ly + 4
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].name << "</text>\n";
    }
    out << "</svg>\n";
}

} // namespace lws
