#include "specarray/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace specarray {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// Shortest decimal tick label that round-trips typical grid values.
std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
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
    double lo = 0.0;
    double hi = 1.0;
};

Range data_range(const SvgChart& chart, bool horizontal) {
    bool any = false;
    Range r{0.0, 1.0};
    for (const SvgSeries& s : chart.series) {
        for (double v : horizontal ? s.x : s.y) {
            if (!std::isfinite(v)) continue;
            if (!any) {
                r.lo = r.hi = v;
                any = true;
            } else {
                r.lo = std::min(r.lo, v);
                r.hi = std::max(r.hi, v);
            }
        }
    }
    if (!any) return {0.0, 1.0};
    if (r.hi - r.lo < 1e-12) {
        r.lo -= 0.5;
        r.hi += 0.5;
    }
    const double pad = 0.05 * (r.hi - r.lo);
    return {r.lo - pad, r.hi + pad};
}

// Round tick spacing to 1/2/5 times a power of ten, aiming for ~6 ticks.
std::vector<double> tick_positions(const Range& r) {
    const double span = r.hi - r.lo;
    const double raw = span / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * m >= raw) {
            step = mag * m;
            break;
        }
    }
    std::vector<double> ticks;
    double t = std::ceil(r.lo / step) * step;
    for (; t <= r.hi + 1e-9 * span; t += step) {
        // snap values like -1.4999999999 back to the grid
        double snapped = std::round(t / step) * step;
        if (std::abs(snapped) < 1e-12 * span) snapped = 0.0;
        ticks.push_back(snapped);
    }
    return ticks;
}

} // namespace

std::string render_line_chart(const SvgChart& chart) {
    if (chart.width < 200 || chart.height < 150)
        throw std::invalid_argument("render_line_chart: chart too small");
    const double w = chart.width;
    const double h = chart.height;
    const double ml = 64, mr = 24, mt = 40, mb = 52; // margins
    const double pw = w - ml - mr;                   // plot area
    const double ph = h - mt - mb;

    const Range xr = data_range(chart, true);
    const Range yr = data_range(chart, false);
    const auto sx = [&](double v) { return ml + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
    const auto sy = [&](double v) { return mt + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << chart.width
        << "\" height=\"" << chart.height << "\" viewBox=\"0 0 " << chart.width
        << " " << chart.height << "\">\n";
    out << "<rect width=\"" << chart.width << "\" height=\"" << chart.height
        << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << fmt(w / 2) << "\" y=\"22\" font-family=\"sans-serif\" "
        << "font-size=\"15\" text-anchor=\"middle\">" << escape(chart.title)
        << "</text>\n";

    // gridlines + ticks
    out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\n";
    for (double t : tick_positions(xr)) {
        const std::string x = fmt(sx(t));
        out << "<line x1=\"" << x << "\" y1=\"" << fmt(mt) << "\" x2=\"" << x
            << "\" y2=\"" << fmt(mt + ph) << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << x << "\" y=\"" << fmt(mt + ph + 16)
            << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
    }
    for (double t : tick_positions(yr)) {
        const std::string y = fmt(sy(t));
        out << "<line x1=\"" << fmt(ml) << "\" y1=\"" << y << "\" x2=\""
            << fmt(ml + pw) << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
        out << "<text x=\"" << fmt(ml - 6) << "\" y=\"" << fmt(sy(t) + 4)
            << "\" text-anchor=\"end\">" << tick_label(t) << "</text>\n";
    }
    out << "</g>\n";

    // axes
    out << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\""
        << fmt(ml + pw) << "\" y2=\"" << fmt(mt + ph)
        << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    out << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(ml)
        << "\" y2=\"" << fmt(mt + ph)
        << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(h - 12)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">"
        << escape(chart.x_label) << "</text>\n";
    out << "<text x=\"16\" y=\"" << fmt(mt + ph / 2)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
        << "transform=\"rotate(-90 16 " << fmt(mt + ph / 2) << ")\">"
        << escape(chart.y_label) << "</text>\n";

    // series polylines
    for (std::size_t s = 0; s < chart.series.size(); ++s) {
        const SvgSeries& ser = chart.series[s];
        if (ser.x.size() != ser.y.size())
            throw std::invalid_argument("render_line_chart: series " + ser.label +
                                        " has mismatched x/y lengths");
        const char* color = kPalette[s % kPaletteSize];
        out << "<polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.8\" points=\"";
        for (std::size_t i = 0; i < ser.x.size(); ++i) {
            if (i) out << ' ';
            out << fmt(sx(ser.x[i])) << ',' << fmt(sy(ser.y[i]));
        }
        out << "\"/>\n";
        for (std::size_t i = 0; i < ser.x.size(); ++i)
            out << "<circle cx=\"" << fmt(sx(ser.x[i])) << "\" cy=\""
                << fmt(sy(ser.y[i])) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }

    // legend
    const double lx = ml + pw - 150, ly = mt + 10;
    out << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    out << "<rect x=\"" << fmt(lx - 8) << "\" y=\"" << fmt(ly - 12) << "\" width=\"150\" height=\""
        << fmt(chart.series.size() * 16.0 + 8.0)
        << "\" fill=\"white\" fill-opacity=\"0.85\" stroke=\"#cccccc\"/>\n";
    for (std::size_t s = 0; s < chart.series.size(); ++s) {
        const double y = ly + 16.0 * static_cast<double>(s);
        out << "<line x1=\"" << fmt(lx) << "\" y1=\"" << fmt(y - 4) << "\" x2=\""
            << fmt(lx + 20) << "\" y2=\"" << fmt(y - 4) << "\" stroke=\""
            << kPalette[s % kPaletteSize] << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << fmt(lx + 26) << "\" y=\"" << fmt(y) << "\">"
            << escape(chart.series[s].label) << "</text>\n";
    }
    out << "</g>\n";
    out << "</svg>\n";
    return out.str();
}

void write_line_chart(const std::string& path, const SvgChart& chart) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_line_chart: cannot open " + path);
    out << render_line_chart(chart);
}

} // namespace specarray
