#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "streamsparse/errors.hpp"

namespace streamsparse {

/// One curve: batch index against a positive value plotted on a log axis.
struct CurveSeries {
    std::string label;
    std::string color;
    bool dashed = false;
    std::vector<std::pair<long, double>> points;
};

namespace detail {

inline std::string svg_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace detail

/// Self-contained SVG line chart with a log-scaled y axis. No dependency on a
/// plotting toolchain; every byte is a function of the inputs.
inline void write_log_curve_svg(const std::string& path, const std::string& title,
                                const std::vector<CurveSeries>& series) {
    constexpr double width = 860, height = 520;
    constexpr double left = 70, right = 830, top = 50, bottom = 460;

    long b_min = 1, b_max = 1;
    double v_min = 1e300, v_max = 1e-300;
    bool any = false;
    for (const CurveSeries& s : series)
        for (auto [b, v] : s.points) {
            if (!(v > 0.0) || !std::isfinite(v)) continue;
            any = true;
            b_min = std::min(b_min, b);
            b_max = std::max(b_max, b);
            v_min = std::min(v_min, v);
            v_max = std::max(v_max, v);
        }
    if (!any) {
        v_min = 1e-1;
        v_max = 1e1;
    }
    const double log_lo = std::floor(std::log10(v_min));
    const double log_hi = std::ceil(std::log10(v_max) + (v_min == v_max ? 1.0 : 0.0));
    const double b_span = std::max<double>(b_max - b_min, 1);

    auto x_of = [&](double b) { return left + (right - left) * (b - b_min) / b_span; };
    auto y_of = [&](double v) {
        const double t = (std::log10(v) - log_lo) / std::max(log_hi - log_lo, 1e-12);
        return bottom - (bottom - top) * t;
    };

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
       << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << (width / 2) << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"16\">" << title << "</text>\n";

    // log-decade grid and y tick labels
    for (double d = log_lo; d <= log_hi + 1e-9; d += 1.0) {
        const double y = y_of(std::pow(10.0, d));
        os << "<line x1=\"" << left << "\" y1=\"" << detail::svg_num(y) << "\" x2=\"" << right
           << "\" y2=\"" << detail::svg_num(y) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n"
           << "<text x=\"" << (left - 8) << "\" y=\"" << detail::svg_num(y + 4)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e"
           << detail::svg_num(d) << "</text>\n";
    }
    // x ticks: about 10 of them
    const long tick_step = std::max<long>(1, (b_max - b_min) / 10);
    for (long b = b_min; b <= b_max; b += tick_step) {
        const double x = x_of(static_cast<double>(b));
        os << "<line x1=\"" << detail::svg_num(x) << "\" y1=\"" << bottom << "\" x2=\""
           << detail::svg_num(x) << "\" y2=\"" << (bottom + 5) << "\" stroke=\"black\"/>\n"
           << "<text x=\"" << detail::svg_num(x) << "\" y=\"" << (bottom + 18)
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << b
           << "</text>\n";
    }
    os << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\"" << bottom
       << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
       << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << ((left + right) / 2) << "\" y=\"" << (bottom + 38)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">batch b</text>\n";

    double legend_y = top + 8;
    for (const CurveSeries& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.8\""
           << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
        for (auto [b, v] : s.points) {
            if (!(v > 0.0) || !std::isfinite(v)) continue;
            os << detail::svg_num(x_of(static_cast<double>(b))) << ',' << detail::svg_num(y_of(v)) << ' ';
        }
        os << "\"/>\n";
        os << "<line x1=\"" << (right - 190) << "\" y1=\"" << detail::svg_num(legend_y) << "\" x2=\""
           << (right - 160) << "\" y2=\"" << detail::svg_num(legend_y) << "\" stroke=\"" << s.color
           << "\" stroke-width=\"1.8\"" << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n"
           << "<text x=\"" << (right - 154) << "\" y=\"" << detail::svg_num(legend_y + 4)
           << "\" font-family=\"sans-serif\" font-size=\"12\">" << s.label << "</text>\n";
        legend_y += 18;
    }
    os << "</svg>\n";
}

}  // namespace streamsparse
