#pragma once

// Minimal static SVG line charts. Output is a pure function of the input.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "curves/core/time.hpp"

namespace curves::svg {

struct Series {
    std::string name;
    std::string color;
    std::vector<std::pair<double, double>> points; // (x, y), drawn in order
};

enum class XAxis { Numeric, Date }; // Date: x is days since epoch

struct Chart {
    std::string title;
    std::string x_label;
    std::string y_label;
    XAxis x_axis = XAxis::Numeric;
    std::vector<Series> series;
    int width = 800;
    int height = 480;
};

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

inline std::string tick_label(double v, XAxis axis) {
    if (axis == XAxis::Date) return Date(static_cast<std::int64_t>(std::llround(v))).iso();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

} // namespace detail

inline std::string render(const Chart& chart) {
    const double left = 70, right = 150, top = 40, bottom = 60;
    const double pw = chart.width - left - right;
    const double ph = chart.height - top - bottom;

    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& s : chart.series) {
        for (const auto& [x, y] : s.points) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    const bool empty = !(x0 <= x1);
    if (empty) {
        x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    }
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };
    using detail::fmt;

    std::string out;
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(chart.width) + "\" height=\"" +
           std::to_string(chart.height) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
           detail::escape(chart.title) + "</text>\n";
    // axes
    out += "<g stroke=\"black\" fill=\"none\">\n";
    out += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top + ph) + "\" x2=\"" + fmt(left + pw) + "\" y2=\"" +
           fmt(top + ph) + "\"/>\n";
    out += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top) + "\" x2=\"" + fmt(left) + "\" y2=\"" + fmt(top + ph) +
           "\"/>\n";
    out += "</g>\n";
    // ticks
    constexpr int kTicks = 5;
    for (int i = 0; i <= kTicks; ++i) {
        const double fx = x0 + (x1 - x0) * i / kTicks;
        const double fy = y0 + (y1 - y0) * i / kTicks;
        out += "<line x1=\"" + fmt(px(fx)) + "\" y1=\"" + fmt(top + ph) + "\" x2=\"" + fmt(px(fx)) + "\" y2=\"" +
               fmt(top + ph + 5) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fmt(px(fx)) + "\" y=\"" + fmt(top + ph + 20) + "\" text-anchor=\"middle\">" +
               (empty ? std::string() : detail::tick_label(fx, chart.x_axis)) + "</text>\n";
        out += "<line x1=\"" + fmt(left - 5) + "\" y1=\"" + fmt(py(fy)) + "\" x2=\"" + fmt(left) + "\" y2=\"" +
               fmt(py(fy)) + "\" stroke=\"black\"/>\n";
        out += "<text x=\"" + fmt(left - 8) + "\" y=\"" + fmt(py(fy) + 4) + "\" text-anchor=\"end\">" +
               (empty ? std::string() : detail::tick_label(fy, XAxis::Numeric)) + "</text>\n";
    }
    out += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"" + fmt(chart.height - 15.0) + "\" text-anchor=\"middle\">" +
           detail::escape(chart.x_label) + "</text>\n";
    out += "<text x=\"18\" y=\"" + fmt(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
           fmt(top + ph / 2) + ")\">" + detail::escape(chart.y_label) + "</text>\n";

    if (empty) {
        out += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"" + fmt(top + ph / 2) +
               "\" text-anchor=\"middle\" fill=\"gray\" font-size=\"18\">no data</text>\n";
    }

    double legend_y = top + 10;
    for (const auto& s : chart.series) {
        if (s.points.empty()) continue;
        std::string pts;
        for (const auto& [x, y] : s.points) {
            if (!pts.empty()) pts += ' ';
            pts += fmt(px(x)) + "," + fmt(py(y));
        }
        out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        if (s.points.size() <= 40) {
            for (const auto& [x, y] : s.points) {
                out += "<circle cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) + "\" r=\"2.5\" fill=\"" + s.color +
                       "\"/>\n";
            }
        }
        out += "<line x1=\"" + fmt(left + pw + 15) + "\" y1=\"" + fmt(legend_y) + "\" x2=\"" + fmt(left + pw + 35) +
               "\" y2=\"" + fmt(legend_y) + "\" stroke=\"" + s.color + "\" stroke-width=\"2\"/>\n";
        out += "<text x=\"" + fmt(left + pw + 40) + "\" y=\"" + fmt(legend_y + 4) + "\">" + detail::escape(s.name) +
               "</text>\n";
        legend_y += 18;
    }
    out += "</svg>\n";
    return out;
}

} // namespace curves::svg
