#pragma once
// Minimal static SVG line charts for training curves. Charts are a pure
// function of the input series: regenerating from the same CSV yields
// byte-identical SVG text.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "gradreg/io.hpp"

namespace gradreg {

struct PlotSeries {
    std::string name;
    std::string color;  // e.g. "#1f77b4"
    std::vector<double> x;
    std::vector<double> y;
};

inline void write_svg_chart(std::ostream& out, const std::string& title, const std::string& y_label,
                            const std::vector<PlotSeries>& series) {
    const int width = 640, height = 400;
    const int ml = 70, mr = 20, mt = 40, mb = 40;
    double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
    bool first = true;
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
            if (first) {
                xmin = xmax = s.x[k];
                ymin = ymax = s.y[k];
                first = false;
            } else {
                xmin = std::min(xmin, s.x[k]);
                xmax = std::max(xmax, s.x[k]);
                ymin = std::min(ymin, s.y[k]);
                ymax = std::max(ymax, s.y[k]);
            }
        }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
    auto py = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return std::string(buf);
    };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"16\">" << title << "</text>\n";
    // axes
    out << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\"" << width - mr << "\" y2=\""
        << height - mb << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << height - mb
        << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = xmin + (xmax - xmin) * k / 4.0;
        const double yv = ymin + (ymax - ymin) * k / 4.0;
        out << "<text x=\"" << num(px(xv)) << "\" y=\"" << height - mb + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << num(xv)
            << "</text>\n";
        out << "<text x=\"" << ml - 6 << "\" y=\"" << num(py(yv) + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(yv)
            << "</text>\n";
    }
    out << "<text x=\"" << width / 2 << "\" y=\"" << height - 8
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">epoch</text>\n";
    out << "<text x=\"16\" y=\"" << height / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 "
           "16 " << height / 2 << ")\">" << y_label << "</text>\n";

    int legend_y = mt + 4;
    for (const auto& s : series) {
        out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        bool started = false;
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            if (!std::isfinite(s.y[k])) continue;
            if (started) out << ' ';
            out << num(px(s.x[k])) << ',' << num(py(s.y[k]));
            started = true;
        }
        out << "\"/>\n";
        if (series.size() > 1) {
            out << "<rect x=\"" << width - mr - 120 << "\" y=\"" << legend_y << "\" width=\"12\" "
                   "height=\"4\" fill=\"" << s.color << "\"/>\n";
            out << "<text x=\"" << width - mr - 104 << "\" y=\"" << legend_y + 6
                << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.name << "</text>\n";
            legend_y += 16;
        }
    }
    out << "</svg>\n";
}

}  // namespace gradreg
