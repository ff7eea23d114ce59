#include "svg_chart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace stshared {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::string render_svg(const LineChart& chart) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : chart.series) {
        if (s.x.size() != s.lo.size() || s.x.size() != s.mid.size() || s.x.size() != s.hi.size()) {
            throw std::invalid_argument("chart series has inconsistent lengths");
        }
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            x0 = std::min(x0, s.x[k]);
            x1 = std::max(x1, s.x[k]);
            y0 = std::min({y0, s.lo[k], s.mid[k]});
            y1 = std::max({y1, s.hi[k], s.mid[k]});
        }
    }
    if (!std::isfinite(x0)) x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
    if (x1 == x0) x1 = x0 + 1.0;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    const double left = 70, right = 20, top = 40, bottom = 50;
    const double pw = chart.width - left - right;
    const double ph = chart.height - top - bottom;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << chart.width << "\" height=\"" << chart.height
      << "\" viewBox=\"0 0 " << chart.width << ' ' << chart.height << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << num(chart.width / 2.0) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(chart.title) << "</text>\n";
    o << "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
    o << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(left + pw) << "\" y2=\""
      << num(top + ph) << "\"/>\n";
    o << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\"" << num(top + ph)
      << "\"/>\n</g>\n";
    o << "<g class=\"ticks\" font-size=\"11\">\n";
    for (int k = 0; k <= 4; ++k) {
        const double yv = y0 + (y1 - y0) * k / 4.0;
        o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << num(yv)
          << "</text>\n";
        const double xv = x0 + (x1 - x0) * k / 4.0;
        o << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">" << num(xv)
          << "</text>\n";
    }
    o << "</g>\n";
    o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(chart.height - 10.0)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(chart.x_label) << "</text>\n";
    o << "<text x=\"16\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << num(top + ph / 2) << ")\">" << escape(chart.y_label) << "</text>\n";

    for (std::size_t si = 0; si < chart.series.size(); ++si) {
        const auto& s = chart.series[si];
        const char* color = kColors[si % 4];
        o << "<g class=\"series\" data-name=\"" << escape(s.name) << "\">\n";
        bool has_band = false;
        for (std::size_t k = 0; k < s.x.size(); ++k) has_band = has_band || s.hi[k] > s.lo[k];
        if (has_band) {
            o << "<polygon class=\"band\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
            for (std::size_t k = 0; k < s.x.size(); ++k) o << num(px(s.x[k])) << ',' << num(py(s.hi[k])) << ' ';
            for (std::size_t k = s.x.size(); k-- > 0;) {
                o << num(px(s.x[k])) << ',' << num(py(s.lo[k])) << (k == 0 ? "" : " ");
            }
            o << "\"/>\n";
        }
        o << "<polyline class=\"median\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            o << num(px(s.x[k])) << ',' << num(py(s.mid[k])) << (k + 1 == s.x.size() ? "" : " ");
        }
        o << "\"/>\n";
        o << "<text x=\"" << num(left + pw - 4) << "\" y=\"" << num(top + 14 + 14.0 * si) << "\" text-anchor=\"end\" "
          << "font-size=\"12\" fill=\"" << color << "\">" << escape(s.name) << "</text>\n";
        o << "</g>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace stshared
