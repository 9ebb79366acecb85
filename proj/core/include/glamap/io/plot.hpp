#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace glamap::io {

struct Rgb {
    uint8_t r, g, b;
};

/// Tiny raster plot canvas with a 5x7 bitmap font for numeric labels.
/// Enough for reliability diagrams and scatter plots; not a charting library.
class PlotCanvas {
public:
    PlotCanvas(int width, int height, Rgb background = {255, 255, 255});

    int width() const { return w_; }
    int height() const { return h_; }

    void set_pixel(int x, int y, Rgb c);
    void draw_line(int x0, int y0, int x1, int y1, Rgb c);
    void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
    void draw_marker(int x, int y, int radius, Rgb c);
    /// Digits, '.', '-', 'e' and space only.
    void draw_label(int x, int y, const std::string& text, Rgb c);

    /// Sets up a data-space [0,1]x[0,1]-style mapping with margins and ticks.
    void begin_axes(double xmin, double xmax, double ymin, double ymax, int ticks = 5);
    int px(double x) const;
    int py(double y) const;
    void data_line(double x0, double y0, double x1, double y1, Rgb c);
    void data_marker(double x, double y, int radius, Rgb c);

    void save(const std::string& path) const;

private:
    int w_, h_;
    std::vector<uint8_t> rgb_;
    double xmin_ = 0, xmax_ = 1, ymin_ = 0, ymax_ = 1;
    int margin_ = 46;
};

/// Reliability diagram: diagonal + per-bin accuracy markers sized by bin mass.
void plot_reliability_png(const std::string& path,
                          const std::vector<double>& mean_conf,
                          const std::vector<double>& accuracy,
                          const std::vector<double>& fraction);

/// Scatter with the y=x diagonal (estimated-vs-observed style).
void plot_scatter_png(const std::string& path, const std::vector<double>& x,
                      const std::vector<double>& y, bool diagonal = true);

}  // namespace glamap::io
