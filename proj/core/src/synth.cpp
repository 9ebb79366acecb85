#include "glamap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace glamap::data {

namespace {

struct Ellipse {
    double cy, cx, ry, rx, theta;
    bool contains(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double u = (dx * std::cos(theta) + dy * std::sin(theta)) / rx;
        const double v = (-dx * std::sin(theta) + dy * std::cos(theta)) / ry;
        return u * u + v * v <= 1.0;
    }
};

// Smooth low-frequency field in [-1,1] from three seeded sinusoids.
struct WaveField {
    double fy[3], fx[3], ph[3];
    WaveField(Rng& rng, double size) {
        for (int k = 0; k < 3; ++k) {
            fy[k] = rng.uniform(0.5, 2.0) / size;
            fx[k] = rng.uniform(0.5, 2.0) / size;
            ph[k] = rng.uniform(0.0, 2.0 * M_PI);
        }
    }
    double operator()(int r, int c) const {
        double s = 0;
        for (int k = 0; k < 3; ++k)
            s += std::sin(2.0 * M_PI * (fy[k] * r + fx[k] * c) + ph[k]);
        return s / 3.0;
    }
};

MaskGrid dilate(const MaskGrid& m, int radius) {
    MaskGrid out(m.rows(), m.cols(), 0);
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) {
            if (!m(r, c)) continue;
            for (int dr = -radius; dr <= radius; ++dr)
                for (int dc = -radius; dc <= radius; ++dc)
                    if (m.in_bounds(r + dr, c + dc)) out(r + dr, c + dc) = 1;
        }
    return out;
}

// Chebyshev distance to the nearest background pixel (two-pass sweep).
Grid<int> distance_to_background(const MaskGrid& m) {
    const int big = m.rows() + m.cols() + 2;
    Grid<int> d(m.rows(), m.cols(), big);
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            if (!m(r, c)) d(r, c) = 0;
    auto relax = [&](int r, int c, int rr, int cc) {
        if (!d.in_bounds(rr, cc)) {
            d(r, c) = std::min(d(r, c), 1);  // image edge counts as background
            return;
        }
        d(r, c) = std::min(d(r, c), d(rr, cc) + 1);
    };
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) {
            relax(r, c, r - 1, c - 1);
            relax(r, c, r - 1, c);
            relax(r, c, r - 1, c + 1);
            relax(r, c, r, c - 1);
        }
    for (int r = m.rows() - 1; r >= 0; --r)
        for (int c = m.cols() - 1; c >= 0; --c) {
            relax(r, c, r + 1, c + 1);
            relax(r, c, r + 1, c);
            relax(r, c, r + 1, c - 1);
            relax(r, c, r, c + 1);
        }
    return d;
}

}  // namespace

void SynthSpec::validate() const {
    if (size_px <= 0) throw std::invalid_argument("synth_scene: size must be positive");
    if (blob_count < 0) throw std::invalid_argument("synth_scene: blob_count must be >= 0");
    if (debris_fraction < 0 || debris_fraction > 1)
        throw std::invalid_argument("synth_scene: debris_fraction outside [0,1]");
    if (noise_level < 0) throw std::invalid_argument("synth_scene: noise_level must be >= 0");
    for (const auto& g : groups) feature_group(g);
}

Tile synth_scene(const SynthSpec& spec, uint64_t seed) {
    spec.validate();
    const int n = spec.size_px;
    Rng rng(seed);

    // 1. glacier mask: union of random ellipses
    MaskGrid label(n, n, 0);
    for (int k = 0; k < spec.blob_count; ++k) {
        Ellipse e;
        e.cy = rng.uniform(0.2, 0.8) * n;
        e.cx = rng.uniform(0.2, 0.8) * n;
        e.ry = rng.uniform(n / 10.0, n / 4.0);
        e.rx = rng.uniform(n / 10.0, n / 4.0);
        e.theta = rng.uniform(0.0, M_PI);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                if (e.contains(r, c)) label(r, c) = 1;
    }

    // 2. elevation: rough terrain outside, a gentle plane on and just around
    //    the glacier so central differences stay flat on every glacier pixel
    const MaskGrid flat_zone = dilate(label, 2);
    const int n_bumps = 8;
    std::vector<Ellipse> bump_pos(n_bumps);
    std::vector<double> bump_amp(n_bumps), bump_w(n_bumps);
    for (int j = 0; j < n_bumps; ++j) {
        bump_pos[j].cy = rng.uniform(0.0, 1.0) * n;
        bump_pos[j].cx = rng.uniform(0.0, 1.0) * n;
        bump_amp[j] = rng.uniform(120.0, 400.0);
        bump_w[j] = rng.uniform(n / 6.0, n / 3.0);
    }
    const double tilt_y = rng.uniform(-0.3, 0.3), tilt_x = rng.uniform(-0.3, 0.3);
    const double plane_y = rng.uniform(-0.05, 0.05), plane_x = rng.uniform(-0.05, 0.05);
    const double plane_base = rng.uniform(400.0, 700.0);

    Grid<double> z(n, n, 0.0);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            if (flat_zone(r, c)) {
                z(r, c) = plane_base + plane_y * r * spec.pixel_size +
                          plane_x * c * spec.pixel_size;
            } else {
                double e = 600.0 + tilt_y * r * spec.pixel_size + tilt_x * c * spec.pixel_size;
                for (int j = 0; j < n_bumps; ++j) {
                    const double dy = r - bump_pos[j].cy, dx = c - bump_pos[j].cx;
                    e += bump_amp[j] * std::exp(-(dy * dy + dx * dx) / (bump_w[j] * bump_w[j]));
                }
                z(r, c) = e;
            }
        }

    // slope as rise/run (tan) from central differences, replicated edges
    Grid<double> slope(n, n, 0.0);
    auto zat = [&](int r, int c) {
        r = std::clamp(r, 0, n - 1);
        c = std::clamp(c, 0, n - 1);
        return z(r, c);
    };
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double gy = (zat(r + 1, c) - zat(r - 1, c)) / (2.0 * spec.pixel_size);
            const double gx = (zat(r, c + 1) - zat(r, c - 1)) / (2.0 * spec.pixel_size);
            slope(r, c) = std::sqrt(gx * gx + gy * gy);
        }

    // 3. snow patches: bright optical signature allowed only on background
    //    pixels that are already steep, preserving the threshold oracle
    MaskGrid snow(n, n, 0);
    const int n_snow = std::max(1, spec.blob_count);
    for (int k = 0; k < n_snow; ++k) {
        Ellipse e;
        e.cy = rng.uniform(0.1, 0.9) * n;
        e.cx = rng.uniform(0.1, 0.9) * n;
        e.ry = rng.uniform(n / 16.0, n / 8.0);
        e.rx = rng.uniform(n / 16.0, n / 8.0);
        e.theta = rng.uniform(0.0, M_PI);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                if (e.contains(r, c) && !label(r, c) && slope(r, c) > 0.9) snow(r, c) = 1;
    }

    // 4. debris: rock-like band along the glacier margin, thinned to the
    //    requested fraction
    MaskGrid debris(n, n, 0);
    if (spec.debris_fraction > 0) {
        const Grid<int> dist = distance_to_background(label);
        int glacier_count = 0;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) glacier_count += label(r, c);
        const int want = static_cast<int>(std::lround(spec.debris_fraction * glacier_count));
        int got = 0;
        for (int band = 1; band <= n && got < want; ++band) {
            for (int r = 0; r < n && got < want; ++r)
                for (int c = 0; c < n && got < want; ++c)
                    if (label(r, c) && dist(r, c) == band && !debris(r, c)) {
                        debris(r, c) = 1;
                        ++got;
                    }
        }
    }

    // 5. feature bands
    WaveField v_opt(rng, n), v_th(rng, n), v_sar(rng, n);

    auto make_stack = [&](int bands) {
        RasterStack rs;
        rs.bands = nn::Tensor({bands, n, n});
        rs.nodata = MaskGrid(n, n, 0);
        rs.pixel_size = spec.pixel_size;
        rs.origin_x = 500000.0;
        rs.origin_y = 6600000.0;
        return rs;
    };

    Tile tile;
    tile.id = spec.id;
    tile.region = spec.region;
    tile.lat = spec.lat;
    tile.lon = spec.lon;
    tile.label = label;

    for (const auto& g : spec.groups) {
        if (g == "optical") {
            RasterStack rs = make_stack(6);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    const double v = v_opt(r, c);
                    double b6[6];
                    if (label(r, c) && !debris(r, c)) {
                        b6[0] = 0.62 + 0.04 * v;
                        b6[1] = 0.68 + 0.04 * v;
                        b6[2] = 0.70 + 0.04 * v;
                        b6[3] = 0.80 + 0.05 * v;  // nir
                        b6[4] = 0.12 + 0.03 * v;  // swir1
                        b6[5] = 0.10 + 0.03 * v;
                    } else if (debris(r, c)) {
                        b6[0] = 0.25 + 0.03 * v;
                        b6[1] = 0.28 + 0.03 * v;
                        b6[2] = 0.30 + 0.03 * v;
                        b6[3] = 0.34 + 0.04 * v;
                        b6[4] = 0.38 + 0.04 * v;
                        b6[5] = 0.36 + 0.04 * v;
                    } else if (snow(r, c)) {
                        b6[0] = 0.60 + 0.04 * v;
                        b6[1] = 0.66 + 0.04 * v;
                        b6[2] = 0.68 + 0.04 * v;
                        b6[3] = 0.80 + 0.05 * v;
                        b6[4] = 0.12 + 0.03 * v;
                        b6[5] = 0.10 + 0.03 * v;
                    } else {
                        b6[0] = 0.20 + 0.05 * v;
                        b6[1] = 0.24 + 0.05 * v;
                        b6[2] = 0.26 + 0.05 * v;
                        b6[3] = 0.30 + 0.05 * v;
                        b6[4] = 0.44 + 0.05 * v;
                        b6[5] = 0.40 + 0.05 * v;
                    }
                    for (int bi = 0; bi < 6; ++bi) rs.bands.at3(bi, r, c) = b6[bi];
                }
            tile.rasters["optical"] = std::move(rs);
        } else if (g == "dem") {
            RasterStack rs = make_stack(2);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    rs.bands.at3(0, r, c) = z(r, c);
                    rs.bands.at3(1, r, c) = slope(r, c);
                }
            tile.rasters["dem"] = std::move(rs);
        } else if (g == "thermal") {
            RasterStack rs = make_stack(1);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    const double v = v_th(r, c);
                    double t;
                    if (label(r, c) && !debris(r, c)) t = 0.15 + 0.05 * v;
                    else if (debris(r, c)) t = 0.50 + 0.05 * v;
                    else if (snow(r, c)) t = 0.20 + 0.05 * v;
                    else t = 0.70 + 0.08 * v;
                    rs.bands.at3(0, r, c) = t;
                }
            tile.rasters["thermal"] = std::move(rs);
        } else if (g == "sar") {
            RasterStack rs = make_stack(2);  // co-pol sigma0 (dB), coherence
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    const double v = v_sar(r, c);
                    const double rough = std::min(1.0, slope(r, c));
                    double s0, coh;
                    if (label(r, c) && !debris(r, c)) {
                        s0 = -18.0 + 2.0 * v;
                        coh = 0.40 + 0.05 * v;
                    } else if (debris(r, c)) {
                        s0 = -12.0 + 2.0 * v;
                        coh = 0.55 + 0.05 * v;
                    } else {
                        s0 = -8.0 + 3.0 * v + 3.0 * rough * std::sin(0.9 * r + 1.3 * c);
                        coh = 0.80 + 0.05 * v;
                    }
                    rs.bands.at3(0, r, c) = s0;
                    rs.bands.at3(1, r, c) = coh;
                }
            tile.rasters["sar"] = std::move(rs);
        } else {
            throw std::invalid_argument("synth_scene: unsupported group " + g);
        }
    }

    // 6. Gaussian noise over feature bands (elevation scaled; label untouched).
    if (spec.noise_level > 0) {
        for (const auto& g : spec.groups) {
            auto& rs = tile.rasters[g];
            for (int bi = 0; bi < rs.band_count(); ++bi) {
                double sigma = spec.noise_level;
                if (g == "dem" && bi == 0) sigma *= 20.0;  // meters
                if (g == "sar" && bi == 0) sigma *= 10.0;  // dB
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < n; ++c)
                        rs.bands.at3(bi, r, c) += rng.normal(0.0, sigma);
            }
        }
    }

    tile.validate();
    return tile;
}

}  // namespace glamap::data
