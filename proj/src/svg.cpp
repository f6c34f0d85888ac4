#include "ghostgrad/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace ghostgrad {

namespace {

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void take(double v) {
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    void pad() {
        if (!(lo < hi)) {
            lo -= 1.0;
            hi += 1.0;
        }
        const double m = 0.05 * (hi - lo);
        lo -= m;
        hi += m;
    }
};

std::string esc(const std::string& s) {
    std::string out;
    for (const char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

// Round "nice" tick positions: 1/2/5 ladder.
std::vector<double> ticks(double lo, double hi, int target = 5) {
    const double span = hi - lo;
    if (!(span > 0.0)) return {lo};
    double step = std::pow(10.0, std::floor(std::log10(span / target)));
    for (const double mult : {1.0, 2.0, 5.0, 10.0}) {
        if (span / (step * mult) <= target) {
            step *= mult;
            break;
        }
    }
    std::vector<double> out;
    for (double t = std::ceil(lo / step) * step; t <= hi + 1e-12 * span; t += step)
        out.push_back(t);
    return out;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void polyline(std::string& svg, std::span<const double> xs, std::span<const double> ys,
              const std::string& color, double opacity, double stroke_width) {
    svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-opacity=\"" +
           format_svg_num(opacity) + "\" stroke-width=\"" + format_svg_num(stroke_width) +
           "\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) svg += " ";
        svg += format_svg_num(xs[i]) + "," + format_svg_num(ys[i]);
    }
    svg += "\"/>\n";
}

}  // namespace

std::string format_svg_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

SvgChart::SvgChart(std::string title, std::string x_label, std::string y_label, int width,
                   int height)
    : title_(std::move(title)),
      x_label_(std::move(x_label)),
      y_label_(std::move(y_label)),
      width_(width),
      height_(height) {}

void SvgChart::add_series(Series s) { series_.push_back(std::move(s)); }

void SvgChart::add_marker(double x, std::string label, std::string color) {
    markers_.push_back({x, std::move(label), std::move(color)});
}

std::string SvgChart::render() const {
    const double ml = 60, mr = 15, mt = 30, mb = 45;
    const double pw = width_ - ml - mr, ph = height_ - mt - mb;

    Range xr, yr;
    for (const Series& s : series_) {
        xr.take(0.0);
        if (!s.y.empty()) xr.take(static_cast<double>(s.y.size() - 1));
        for (const double v : s.y) yr.take(v);
        for (const double v : s.band_low) yr.take(v);
        for (const double v : s.band_high) yr.take(v);
    }
    for (const Marker& m : markers_) xr.take(m.x);
    xr.pad();
    yr.pad();

    auto px = [&](double x) { return ml + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double y) { return mt + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(width_) + "\" height=\"" + std::to_string(height_) +
                      "\" font-family=\"monospace\" font-size=\"11\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + format_svg_num(width_ / 2.0) +
           "\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">" + esc(title_) + "</text>\n";

    for (const double t : ticks(yr.lo, yr.hi)) {
        const double y = py(t);
        svg += "<line x1=\"" + format_svg_num(ml) + "\" y1=\"" + format_svg_num(y) + "\" x2=\"" +
               format_svg_num(ml + pw) + "\" y2=\"" + format_svg_num(y) +
               "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
        svg += "<text x=\"" + format_svg_num(ml - 6) + "\" y=\"" + format_svg_num(y + 3) +
               "\" text-anchor=\"end\">" + tick_label(t) + "</text>\n";
    }
    for (const double t : ticks(xr.lo, xr.hi, 8)) {
        const double x = px(t);
        svg += "<line x1=\"" + format_svg_num(x) + "\" y1=\"" + format_svg_num(mt + ph) +
               "\" x2=\"" + format_svg_num(x) + "\" y2=\"" + format_svg_num(mt + ph + 4) +
               "\" stroke=\"black\" stroke-width=\"0.8\"/>\n";
        svg += "<text x=\"" + format_svg_num(x) + "\" y=\"" + format_svg_num(mt + ph + 16) +
               "\" text-anchor=\"middle\">" + tick_label(t) + "</text>\n";
    }
    svg += "<rect x=\"" + format_svg_num(ml) + "\" y=\"" + format_svg_num(mt) + "\" width=\"" +
           format_svg_num(pw) + "\" height=\"" + format_svg_num(ph) +
           "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + format_svg_num(ml + pw / 2) + "\" y=\"" +
           format_svg_num(height_ - 8.0) + "\" text-anchor=\"middle\">" + esc(x_label_) +
           "</text>\n";
    svg += "<text x=\"14\" y=\"" + format_svg_num(mt + ph / 2) +
           "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " + format_svg_num(mt + ph / 2) +
           ")\">" + esc(y_label_) + "</text>\n";

    for (const Series& s : series_) {
        if (!s.band_low.empty() && s.band_low.size() == s.y.size() &&
            s.band_high.size() == s.y.size()) {
            std::string pts;
            for (std::size_t i = 0; i < s.y.size(); ++i)
                pts += format_svg_num(px(static_cast<double>(i))) + "," +
                       format_svg_num(py(s.band_high[i])) + " ";
            for (std::size_t i = s.y.size(); i-- > 0;)
                pts += format_svg_num(px(static_cast<double>(i))) + "," +
                       format_svg_num(py(s.band_low[i])) + " ";
            svg += "<polygon fill=\"" + s.color + "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"" +
                   pts + "\"/>\n";
        }
    }
    double legend_y = mt + 12;
    for (const Series& s : series_) {
        std::vector<double> xs(s.y.size());
        std::vector<double> ys(s.y.size());
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            xs[i] = px(static_cast<double>(i));
            ys[i] = py(s.y[i]);
        }
        polyline(svg, xs, ys, s.color, 1.0, 1.5);
        svg += "<text x=\"" + format_svg_num(ml + pw - 6) + "\" y=\"" + format_svg_num(legend_y) +
               "\" text-anchor=\"end\" fill=\"" + s.color + "\">" + esc(s.label) + "</text>\n";
        legend_y += 14;
    }
    for (const Marker& m : markers_) {
        const double x = px(m.x);
        svg += "<line x1=\"" + format_svg_num(x) + "\" y1=\"" + format_svg_num(mt) + "\" x2=\"" +
               format_svg_num(x) + "\" y2=\"" + format_svg_num(mt + ph) + "\" stroke=\"" + m.color +
               "\" stroke-dasharray=\"4 3\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + format_svg_num(x + 3) + "\" y=\"" + format_svg_num(mt + 10) +
               "\" fill=\"" + m.color + "\">" + esc(m.label) + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

std::string render_panel_grid(const std::string& title, std::span<const SvgPanel> panels,
                              int columns, int panel_width, int panel_height) {
    const int rows = static_cast<int>((panels.size() + static_cast<std::size_t>(columns) - 1) /
                                      static_cast<std::size_t>(columns));
    const int width = columns * panel_width + 20;
    const int height = rows * panel_height + 40;
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(width) + "\" height=\"" + std::to_string(height) +
                      "\" font-family=\"monospace\" font-size=\"10\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + format_svg_num(width / 2.0) +
           "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" + esc(title) + "</text>\n";

    for (std::size_t p = 0; p < panels.size(); ++p) {
        const double ox = 10 + static_cast<double>(p % static_cast<std::size_t>(columns)) * panel_width;
        const double oy = 30 + static_cast<double>(p / static_cast<std::size_t>(columns)) * panel_height;
        const double ml = 8, mt = 16, pw = panel_width - 16, ph = panel_height - 28;

        Range yr;
        std::size_t nmax = 1;
        for (const auto& [color, y] : panels[p].curves) {
            for (const double v : y) yr.take(v);
            nmax = std::max(nmax, y.size());
        }
        yr.pad();
        auto px = [&](double x) {
            return ox + ml + x / static_cast<double>(std::max<std::size_t>(nmax - 1, 1)) * pw;
        };
        auto py = [&](double y) { return oy + mt + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

        svg += "<rect x=\"" + format_svg_num(ox + ml) + "\" y=\"" + format_svg_num(oy + mt) +
               "\" width=\"" + format_svg_num(pw) + "\" height=\"" + format_svg_num(ph) +
               "\" fill=\"none\" stroke=\"#999999\" stroke-width=\"0.7\"/>\n";
        svg += "<text x=\"" + format_svg_num(ox + ml + pw / 2) + "\" y=\"" +
               format_svg_num(oy + 11) + "\" text-anchor=\"middle\">" + esc(panels[p].title) +
               "</text>\n";
        for (const auto& [color, y] : panels[p].curves) {
            std::vector<double> xs(y.size()), ys(y.size());
            for (std::size_t i = 0; i < y.size(); ++i) {
                xs[i] = px(static_cast<double>(i));
                ys[i] = py(y[i]);
            }
            polyline(svg, xs, ys, color, 1.0, 1.0);
        }
        if (panels[p].marker_x) {
            const double x = px(*panels[p].marker_x);
            svg += "<line x1=\"" + format_svg_num(x) + "\" y1=\"" + format_svg_num(oy + mt) +
                   "\" x2=\"" + format_svg_num(x) + "\" y2=\"" + format_svg_num(oy + mt + ph) +
                   "\" stroke=\"#777777\" stroke-dasharray=\"3 2\" stroke-width=\"0.7\"/>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

std::string render_paired_bars(const std::string& title, std::span<const std::string> categories,
                               std::span<const double> a, std::span<const double> b,
                               const std::string& label_a, const std::string& label_b) {
    const int width = 640, height = 400;
    const double ml = 55, mr = 15, mt = 40, mb = 45;
    const double pw = width - ml - mr, ph = height - mt - mb;

    Range yr;
    yr.take(0.0);
    for (const double v : a) yr.take(v);
    for (const double v : b) yr.take(v);
    yr.pad();
    auto py = [&](double y) { return mt + ph - (y - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(width) + "\" height=\"" + std::to_string(height) +
                      "\" font-family=\"monospace\" font-size=\"10\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + format_svg_num(width / 2.0) +
           "\" y=\"16\" text-anchor=\"middle\" font-size=\"13\">" + esc(title) + "</text>\n";
    svg += "<text x=\"" + format_svg_num(ml + 10) + "\" y=\"30\" fill=\"#1f77b4\">" + esc(label_a) +
           "</text>\n";
    svg += "<text x=\"" + format_svg_num(ml + 110) + "\" y=\"30\" fill=\"#d62728\">" +
           esc(label_b) + "</text>\n";

    for (const double t : ticks(yr.lo, yr.hi)) {
        const double y = py(t);
        svg += "<line x1=\"" + format_svg_num(ml) + "\" y1=\"" + format_svg_num(y) + "\" x2=\"" +
               format_svg_num(ml + pw) + "\" y2=\"" + format_svg_num(y) +
               "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
        svg += "<text x=\"" + format_svg_num(ml - 6) + "\" y=\"" + format_svg_num(y + 3) +
               "\" text-anchor=\"end\">" + tick_label(t) + "</text>\n";
    }

    const std::size_t n = categories.size();
    const double slot = pw / static_cast<double>(std::max<std::size_t>(n, 1));
    const double bar = std::max(2.0, std::min(14.0, slot * 0.32));
    for (std::size_t i = 0; i < n; ++i) {
        const double cx = ml + (static_cast<double>(i) + 0.5) * slot;
        if (i < a.size() && std::isfinite(a[i])) {
            svg += "<rect x=\"" + format_svg_num(cx - bar - 1) + "\" y=\"" +
                   format_svg_num(py(a[i])) + "\" width=\"" + format_svg_num(bar) +
                   "\" height=\"" + format_svg_num(py(0.0) - py(a[i])) +
                   "\" fill=\"#1f77b4\"/>\n";
        }
        if (i < b.size() && std::isfinite(b[i])) {
            svg += "<rect x=\"" + format_svg_num(cx + 1) + "\" y=\"" + format_svg_num(py(b[i])) +
                   "\" width=\"" + format_svg_num(bar) + "\" height=\"" +
                   format_svg_num(py(0.0) - py(b[i])) + "\" fill=\"#d62728\"/>\n";
        }
        svg += "<text x=\"" + format_svg_num(cx) + "\" y=\"" + format_svg_num(mt + ph + 14) +
               "\" text-anchor=\"middle\">" + esc(categories[i]) + "</text>\n";
    }
    svg += "<rect x=\"" + format_svg_num(ml) + "\" y=\"" + format_svg_num(mt) + "\" width=\"" +
           format_svg_num(pw) + "\" height=\"" + format_svg_num(ph) +
           "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "</svg>\n";
    return svg;
}

}  // namespace ghostgrad
