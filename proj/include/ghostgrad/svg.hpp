#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ghostgrad {

// Minimal deterministic SVG line-chart writer. All numbers are printed with
// fixed precision so identical inputs yield identical bytes.
class SvgChart {
  public:
    struct Series {
        std::string label;
        std::string color;
        std::vector<double> y;          // x is the index
        std::vector<double> band_low;   // optional +-band, same length as y
        std::vector<double> band_high;
    };

    SvgChart(std::string title, std::string x_label, std::string y_label, int width = 640,
             int height = 400);

    void add_series(Series s);
    // Vertical marker line at x with a small label.
    void add_marker(double x, std::string label, std::string color);
    std::string render() const;

  private:
    std::string title_, x_label_, y_label_;
    int width_, height_;
    std::vector<Series> series_;
    struct Marker {
        double x;
        std::string label, color;
    };
    std::vector<Marker> markers_;
};

// Grid of small-multiple line charts (one panel per run).
struct SvgPanel {
    std::string title;
    std::vector<std::pair<std::string, std::vector<double>>> curves;  // color, values
    std::optional<double> marker_x;
};

std::string render_panel_grid(const std::string& title, std::span<const SvgPanel> panels,
                              int columns = 3, int panel_width = 220, int panel_height = 150);

// Paired bar chart: one pair of bars per category.
std::string render_paired_bars(const std::string& title, std::span<const std::string> categories,
                               std::span<const double> a, std::span<const double> b,
                               const std::string& label_a, const std::string& label_b);

std::string format_svg_num(double v);

}  // namespace ghostgrad
