#include "glamap/io/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "glamap/io/png.hpp"

namespace glamap::io {

namespace {

// 5x7 glyphs for "0123456789.-e ", one bit per pixel, row-major top-down.
struct Glyph {
    char ch;
    uint8_t rows[7];
};
constexpr Glyph kFont[] = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
    {'e', {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const Glyph* find_glyph(char c) {
    for (const auto& g : kFont)
        if (g.ch == c) return &g;
    return nullptr;
}

std::string short_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2g", v);
    return buf;
}

}  // namespace

PlotCanvas::PlotCanvas(int width, int height, Rgb background) : w_(width), h_(height) {
    rgb_.assign(static_cast<size_t>(w_) * h_ * 3, 0);
    fill_rect(0, 0, w_ - 1, h_ - 1, background);
}

void PlotCanvas::set_pixel(int x, int y, Rgb c) {
    if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
    const size_t i = (static_cast<size_t>(y) * w_ + x) * 3;
    rgb_[i] = c.r;
    rgb_[i + 1] = c.g;
    rgb_[i + 2] = c.b;
}

void PlotCanvas::draw_line(int x0, int y0, int x1, int y1, Rgb c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        set_pixel(x0, y0, c);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void PlotCanvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::max(0, y0); y <= std::min(h_ - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(w_ - 1, x1); ++x) set_pixel(x, y, c);
}

void PlotCanvas::draw_marker(int x, int y, int radius, Rgb c) {
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) set_pixel(x + dx, y + dy, c);
}

void PlotCanvas::draw_label(int x, int y, const std::string& text, Rgb c) {
    int cx = x;
    for (char ch : text) {
        const Glyph* g = find_glyph(ch);
        if (g) {
            for (int r = 0; r < 7; ++r)
                for (int b = 0; b < 5; ++b)
                    if (g->rows[r] & (1 << (4 - b))) set_pixel(cx + b, y + r, c);
        }
        cx += 6;
    }
}

void PlotCanvas::begin_axes(double xmin, double xmax, double ymin, double ymax, int ticks) {
    xmin_ = xmin;
    xmax_ = xmax;
    ymin_ = ymin;
    ymax_ = ymax;
    const Rgb axis{40, 40, 40};
    const Rgb grid{225, 225, 225};
    for (int t = 0; t <= ticks; ++t) {
        const double fx = xmin + (xmax - xmin) * t / ticks;
        const double fy = ymin + (ymax - ymin) * t / ticks;
        draw_line(px(fx), py(ymin), px(fx), py(ymax), grid);
        draw_line(px(xmin), py(fy), px(xmax), py(fy), grid);
        draw_label(px(fx) - 10, py(ymin) + 8, short_num(fx), axis);
        draw_label(px(xmin) - 42, py(fy) - 3, short_num(fy), axis);
    }
    draw_line(px(xmin), py(ymin), px(xmax), py(ymin), axis);
    draw_line(px(xmin), py(ymin), px(xmin), py(ymax), axis);
}

int PlotCanvas::px(double x) const {
    const double f = (x - xmin_) / (xmax_ - xmin_);
    return margin_ + static_cast<int>(std::lround(f * (w_ - 2 * margin_)));
}

int PlotCanvas::py(double y) const {
    const double f = (y - ymin_) / (ymax_ - ymin_);
    return h_ - margin_ - static_cast<int>(std::lround(f * (h_ - 2 * margin_)));
}

void PlotCanvas::data_line(double x0, double y0, double x1, double y1, Rgb c) {
    draw_line(px(x0), py(y0), px(x1), py(y1), c);
}

void PlotCanvas::data_marker(double x, double y, int radius, Rgb c) {
    draw_marker(px(x), py(y), radius, c);
}

void PlotCanvas::save(const std::string& path) const {
    write_png_rgb(path, rgb_.data(), w_, h_);
}

void plot_reliability_png(const std::string& path, const std::vector<double>& mean_conf,
                          const std::vector<double>& accuracy,
                          const std::vector<double>& fraction) {
    if (mean_conf.size() != accuracy.size() || mean_conf.size() != fraction.size())
        throw std::invalid_argument("plot_reliability_png: column length mismatch");
    PlotCanvas cv(640, 640);
    cv.begin_axes(0.0, 1.0, 0.0, 1.0);
    cv.data_line(0.0, 0.0, 1.0, 1.0, {120, 120, 120});
    double fmax = 1e-12;
    for (double f : fraction) fmax = std::max(fmax, f);
    for (size_t i = 0; i < mean_conf.size(); ++i) {
        const int r = 2 + static_cast<int>(std::lround(4.0 * fraction[i] / fmax));
        cv.data_marker(mean_conf[i], accuracy[i], r, {31, 119, 180});
    }
    cv.save(path);
}

void plot_scatter_png(const std::string& path, const std::vector<double>& x,
                      const std::vector<double>& y, bool diagonal) {
    if (x.size() != y.size()) throw std::invalid_argument("plot_scatter_png: length mismatch");
    double lo = 0.0, hi = 1.0;
    for (size_t i = 0; i < x.size(); ++i) {
        lo = std::min({lo, x[i], y[i]});
        hi = std::max({hi, x[i], y[i]});
    }
    PlotCanvas cv(640, 640);
    cv.begin_axes(lo, hi, lo, hi);
    if (diagonal) cv.data_line(lo, lo, hi, hi, {120, 120, 120});
    for (size_t i = 0; i < x.size(); ++i) cv.data_marker(x[i], y[i], 3, {214, 96, 40});
    cv.save(path);
}

}  // namespace glamap::io
