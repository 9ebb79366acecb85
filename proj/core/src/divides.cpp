#include "glamap/divides.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <map>
#include <queue>
#include <stdexcept>

#include "glamap/io/csv.hpp"
#include "glamap/random.hpp"

namespace glamap::divides {

using nlohmann::json;

namespace {

// D8 neighbor table: N, NE, E, SE, S, SW, W, NW.
constexpr int kDr[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kDc[8] = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr double kDist[8] = {1.0, M_SQRT2, 1.0, M_SQRT2, 1.0, M_SQRT2, 1.0, M_SQRT2};

}  // namespace

void DEMGrid::validate() const {
    if (elevation.empty()) throw std::invalid_argument("DEMGrid: empty elevation");
    if (pixel_size <= 0) throw std::invalid_argument("DEMGrid: pixel_size must be > 0");
    if (nodata.rows() != rows() || nodata.cols() != cols())
        throw std::invalid_argument("DEMGrid: nodata mask shape mismatch");
    for (int r = 0; r < rows(); ++r)
        for (int c = 0; c < cols(); ++c)
            if (!nodata(r, c) && !std::isfinite(elevation(r, c)))
                throw std::invalid_argument("DEMGrid: non-finite elevation at valid cell");
}

void DivideParams::validate() const {
    if (gutter_depth_m < 0 || buffer_radius_cells < 0 || min_watershed_area_cells < 0 ||
        smoothing_window_cells < 0)
        throw std::invalid_argument("DivideParams: all parameters must be >= 0");
}

double Polyline::length() const {
    double len = 0;
    for (size_t i = 1; i < points.size(); ++i) {
        const double dx = points[i].first - points[i - 1].first;
        const double dy = points[i].second - points[i - 1].second;
        len += std::hypot(dx, dy);
    }
    return len;
}

std::pair<int, int> flow_offset(uint8_t code) {
    if (code >= 8) throw std::invalid_argument("flow_offset: not a direction code");
    return {kDr[code], kDc[code]};
}

// ---------------------------------------------------------------------------
// depression filling (priority flood)
// ---------------------------------------------------------------------------

DEMGrid fill_depressions(const DEMGrid& dem) {
    dem.validate();
    const int rows = dem.rows(), cols = dem.cols();

    bool any_valid = false;
    for (int r = 0; r < rows && !any_valid; ++r)
        for (int c = 0; c < cols && !any_valid; ++c) any_valid = !dem.nodata(r, c);
    if (!any_valid) throw std::invalid_argument("fill_depressions: fully masked grid");

    DEMGrid out = dem;
    Grid<uint8_t> visited(rows, cols, 0);

    using Item = std::pair<double, int64_t>;  // (elevation, linear index)
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> open;

    auto is_seed = [&](int r, int c) {
        if (dem.nodata(r, c)) return false;
        if (r == 0 || c == 0 || r == rows - 1 || c == cols - 1) return true;
        for (int k = 0; k < 8; ++k)
            if (dem.nodata(r + kDr[k], c + kDc[k])) return true;
        return false;
    };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (is_seed(r, c)) {
                visited(r, c) = 1;
                open.push({out.elevation(r, c), static_cast<int64_t>(r) * cols + c});
            }

    while (!open.empty()) {
        const auto [z, idx] = open.top();
        open.pop();
        const int r = static_cast<int>(idx / cols), c = static_cast<int>(idx % cols);
        for (int k = 0; k < 8; ++k) {
            const int nr = r + kDr[k], nc = c + kDc[k];
            if (!out.elevation.in_bounds(nr, nc) || visited(nr, nc) || dem.nodata(nr, nc))
                continue;
            visited(nr, nc) = 1;
            out.elevation(nr, nc) = std::max(out.elevation(nr, nc), z);
            open.push({out.elevation(nr, nc), static_cast<int64_t>(nr) * cols + nc});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// flow direction
// ---------------------------------------------------------------------------

Grid<uint8_t> flow_direction(const DEMGrid& dem) {
    dem.validate();
    const int rows = dem.rows(), cols = dem.cols();
    Grid<uint8_t> dir(rows, cols, kFlowNone);

    std::vector<std::pair<int, int>> flats;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (dem.nodata(r, c)) continue;
            const double z = dem.elevation(r, c);
            int best = -1;
            double best_slope = 0.0;
            for (int k = 0; k < 8; ++k) {
                const int nr = r + kDr[k], nc = c + kDc[k];
                if (!dem.elevation.in_bounds(nr, nc) || dem.nodata(nr, nc)) continue;
                const double slope = (z - dem.elevation(nr, nc)) / kDist[k];
                if (slope > best_slope) {
                    best_slope = slope;
                    best = k;
                }
            }
            if (best >= 0)
                dir(r, c) = static_cast<uint8_t>(best);
            else
                flats.emplace_back(r, c);
        }

    // Flat resolution: breadth-first from flat cells that can step onto an
    // equal-elevation neighbor which already drains; remaining flat cells
    // stay terminal (sinks/outlets).
    std::queue<std::pair<int, int>> bfs;
    Grid<uint8_t> in_flat(rows, cols, 0);
    for (const auto& [r, c] : flats) in_flat(r, c) = 1;
    for (const auto& [r, c] : flats) {
        for (int k = 0; k < 8; ++k) {
            const int nr = r + kDr[k], nc = c + kDc[k];
            if (!dem.elevation.in_bounds(nr, nc) || dem.nodata(nr, nc)) continue;
            if (!in_flat(nr, nc) && dir(nr, nc) != kFlowNone &&
                dem.elevation(nr, nc) == dem.elevation(r, c)) {
                dir(r, c) = static_cast<uint8_t>(k);
                bfs.push({r, c});
                break;
            }
        }
    }
    while (!bfs.empty()) {
        const auto [r, c] = bfs.front();
        bfs.pop();
        for (int k = 0; k < 8; ++k) {
            const int nr = r + kDr[k], nc = c + kDc[k];
            if (!dem.elevation.in_bounds(nr, nc) || dem.nodata(nr, nc)) continue;
            if (in_flat(nr, nc) && dir(nr, nc) == kFlowNone &&
                dem.elevation(nr, nc) == dem.elevation(r, c)) {
                // point back toward the resolved cell
                for (int j = 0; j < 8; ++j)
                    if (nr + kDr[j] == r && nc + kDc[j] == c) {
                        dir(nr, nc) = static_cast<uint8_t>(j);
                        break;
                    }
                bfs.push({nr, nc});
            }
        }
    }
    return dir;
}

// ---------------------------------------------------------------------------
// divide delineation
// ---------------------------------------------------------------------------

namespace {

MaskGrid dilate_mask(const MaskGrid& m, int radius) {
    if (radius <= 0) return m;
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

// Catchment of every work cell by following flow to its terminal cluster.
Grid<int> catchment_labels(const Grid<uint8_t>& dir, const MaskGrid& work) {
    const int rows = work.rows(), cols = work.cols();

    // cluster terminal cells (8-connected)
    Grid<int> label(rows, cols, 0);
    int next_label = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (!work(r, c) || dir(r, c) != kFlowNone || label(r, c)) continue;
            ++next_label;
            std::queue<std::pair<int, int>> q;
            q.push({r, c});
            label(r, c) = next_label;
            while (!q.empty()) {
                const auto [cr, cc] = q.front();
                q.pop();
                for (int k = 0; k < 8; ++k) {
                    const int nr = cr + kDr[k], nc = cc + kDc[k];
                    if (!work.in_bounds(nr, nc) || !work(nr, nc)) continue;
                    if (dir(nr, nc) == kFlowNone && !label(nr, nc)) {
                        label(nr, nc) = next_label;
                        q.push({nr, nc});
                    }
                }
            }
        }

    // propagate along flow paths with memoization
    std::vector<std::pair<int, int>> path;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (!work(r, c) || label(r, c)) continue;
            path.clear();
            int cr = r, cc = c;
            while (work.in_bounds(cr, cc) && work(cr, cc) && !label(cr, cc) &&
                   dir(cr, cc) != kFlowNone) {
                path.emplace_back(cr, cc);
                const uint8_t d = dir(cr, cc);
                cr += kDr[d];
                cc += kDc[d];
            }
            int lab = 0;
            if (work.in_bounds(cr, cc) && work(cr, cc)) lab = label(cr, cc);
            if (!lab) lab = 1;  // flow escaped the work area; fold into a default basin
            for (const auto& [pr, pc] : path) label(pr, pc) = lab;
        }
    return label;
}

void merge_small_watersheds(Grid<int>& label, const MaskGrid& mask, double min_area_cells) {
    while (true) {
        std::map<int, int64_t> area;
        for (int r = 0; r < mask.rows(); ++r)
            for (int c = 0; c < mask.cols(); ++c)
                if (mask(r, c)) ++area[label(r, c)];
        if (area.size() <= 1) return;

        // smallest watershed under the threshold (tie: lowest label)
        int victim = 0;
        int64_t victim_area = -1;
        for (const auto& [lab, a] : area)
            if (static_cast<double>(a) < min_area_cells &&
                (victim_area < 0 || a < victim_area)) {
                victim = lab;
                victim_area = a;
            }
        if (!victim) return;

        // neighbor with the longest shared boundary inside the mask
        std::map<int, int64_t> shared;
        for (int r = 0; r < mask.rows(); ++r)
            for (int c = 0; c < mask.cols(); ++c) {
                if (!mask(r, c) || label(r, c) != victim) continue;
                const int dr4[4] = {-1, 1, 0, 0}, dc4[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int nr = r + dr4[k], nc = c + dc4[k];
                    if (mask.in_bounds(nr, nc) && mask(nr, nc) && label(nr, nc) != victim)
                        ++shared[label(nr, nc)];
                }
            }
        if (shared.empty()) {
            // isolated patch: fold into the largest watershed
            int target = 0;
            int64_t best = -1;
            for (const auto& [lab, a] : area)
                if (lab != victim && a > best) {
                    best = a;
                    target = lab;
                }
            if (!target) return;
            for (auto& v : label.raw())
                if (v == victim) v = target;
            continue;
        }
        int target = shared.begin()->first;
        int64_t best = shared.begin()->second;
        for (const auto& [lab, cnt] : shared)
            if (cnt > best) {
                best = cnt;
                target = lab;
            }
        for (auto& v : label.raw())
            if (v == victim) v = target;
    }
}

std::vector<double> chaikin_once(const std::vector<double>& xs) {
    // operates on interleaved x,y pairs with pinned endpoints
    const size_t n = xs.size() / 2;
    if (n < 3) return xs;
    std::vector<double> out;
    out.push_back(xs[0]);
    out.push_back(xs[1]);
    for (size_t i = 0; i + 1 < n; ++i) {
        const double x0 = xs[2 * i], y0 = xs[2 * i + 1];
        const double x1 = xs[2 * (i + 1)], y1 = xs[2 * (i + 1) + 1];
        out.push_back(0.75 * x0 + 0.25 * x1);
        out.push_back(0.75 * y0 + 0.25 * y1);
        out.push_back(0.25 * x0 + 0.75 * x1);
        out.push_back(0.25 * y0 + 0.75 * y1);
    }
    out.push_back(xs[2 * (n - 1)]);
    out.push_back(xs[2 * (n - 1) + 1]);
    return out;
}

double point_segment_distance(double px, double py, double ax, double ay, double bx,
                              double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

void douglas_peucker(const std::vector<std::pair<double, double>>& pts, size_t lo, size_t hi,
                     double tol, std::vector<bool>& keep) {
    if (hi <= lo + 1) return;
    double worst = -1;
    size_t worst_i = lo;
    for (size_t i = lo + 1; i < hi; ++i) {
        const double d = point_segment_distance(pts[i].first, pts[i].second, pts[lo].first,
                                                pts[lo].second, pts[hi].first, pts[hi].second);
        if (d > worst) {
            worst = d;
            worst_i = i;
        }
    }
    if (worst > tol) {
        keep[worst_i] = true;
        douglas_peucker(pts, lo, worst_i, tol, keep);
        douglas_peucker(pts, worst_i, hi, tol, keep);
    }
}

Polyline smooth_and_simplify(const std::vector<std::pair<double, double>>& raw,
                             int chaikin_iters, double tol) {
    std::vector<double> xs;
    xs.reserve(raw.size() * 2);
    for (const auto& [x, y] : raw) {
        xs.push_back(x);
        xs.push_back(y);
    }
    for (int i = 0; i < chaikin_iters; ++i) xs = chaikin_once(xs);
    std::vector<std::pair<double, double>> pts;
    pts.reserve(xs.size() / 2);
    for (size_t i = 0; i + 1 < xs.size(); i += 2) pts.emplace_back(xs[i], xs[i + 1]);

    if (pts.size() > 2 && tol > 0) {
        std::vector<bool> keep(pts.size(), false);
        keep.front() = keep.back() = true;
        douglas_peucker(pts, 0, pts.size() - 1, tol, keep);
        std::vector<std::pair<double, double>> kept;
        for (size_t i = 0; i < pts.size(); ++i)
            if (keep[i]) kept.push_back(pts[i]);
        pts = std::move(kept);
    }
    return Polyline{std::move(pts)};
}

}  // namespace

DivideNetwork delineate_divides(const DEMGrid& dem, const MaskGrid& glacier_mask,
                                const DivideParams& params) {
    dem.validate();
    params.validate();
    if (glacier_mask.rows() != dem.rows() || glacier_mask.cols() != dem.cols())
        throw std::invalid_argument("delineate_divides: mask not co-registered with DEM");
    bool any = false;
    for (const auto v : glacier_mask.raw()) any = any || v;
    if (!any) throw std::invalid_argument("delineate_divides: empty glacier mask");

    const int rows = dem.rows(), cols = dem.cols();

    // buffered work area, excluding dem nodata
    MaskGrid work = dilate_mask(glacier_mask, params.buffer_radius_cells);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (dem.nodata(r, c)) work(r, c) = 0;

    // gutter rim along the buffered margin
    DEMGrid carved = dem;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (!work(r, c)) {
                carved.nodata(r, c) = 1;
                continue;
            }
            bool margin = r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
            for (int k = 0; k < 8 && !margin; ++k) {
                const int nr = r + kDr[k], nc = c + kDc[k];
                if (!work.in_bounds(nr, nc) || !work(nr, nc)) margin = true;
            }
            if (margin) carved.elevation(r, c) -= params.gutter_depth_m;
        }

    DEMGrid filled = fill_depressions(carved);

    // catchments grow from summit seeds: route D8 on the inverted surface
    DEMGrid inverted = filled;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (!inverted.nodata(r, c)) inverted.elevation(r, c) = -filled.elevation(r, c);
    Grid<uint8_t> dir = flow_direction(inverted);

    Grid<int> label = catchment_labels(dir, work);
    merge_small_watersheds(label, glacier_mask, params.min_watershed_area_cells);

    // renumber labels over the glacier mask
    DivideNetwork net;
    net.watershed_labels = Grid<int>(rows, cols, 0);
    std::map<int, int> renumber;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (!glacier_mask(r, c)) continue;
            auto [it, inserted] =
                renumber.try_emplace(label(r, c), static_cast<int>(renumber.size()) + 1);
            net.watershed_labels(r, c) = it->second;
        }

    // crack edges between 4-adjacent mask cells with different labels
    const int ncorner_cols = cols + 1;
    auto corner_id = [ncorner_cols](int r, int c) {
        return static_cast<int64_t>(r) * ncorner_cols + c;
    };
    std::map<int64_t, std::vector<std::pair<int64_t, size_t>>> adj;
    std::vector<std::pair<int64_t, int64_t>> edges;
    auto add_edge = [&](int64_t a, int64_t b) {
        const size_t id = edges.size();
        edges.emplace_back(a, b);
        adj[a].emplace_back(b, id);
        adj[b].emplace_back(a, id);
    };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c + 1 < cols; ++c)
            if (glacier_mask(r, c) && glacier_mask(r, c + 1) &&
                net.watershed_labels(r, c) != net.watershed_labels(r, c + 1))
                add_edge(corner_id(r, c + 1), corner_id(r + 1, c + 1));
    for (int r = 0; r + 1 < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (glacier_mask(r, c) && glacier_mask(r + 1, c) &&
                net.watershed_labels(r, c) != net.watershed_labels(r + 1, c))
                add_edge(corner_id(r + 1, c), corner_id(r + 1, c + 1));

    // chain edges into polylines: start at non-degree-2 nodes, then cycles
    std::vector<bool> used(edges.size(), false);
    std::vector<std::vector<int64_t>> chains;
    auto walk = [&](int64_t start, size_t first_edge) {
        std::vector<int64_t> chain = {start};
        int64_t node = start;
        size_t edge = first_edge;
        while (true) {
            used[edge] = true;
            node = edges[edge].first == node ? edges[edge].second : edges[edge].first;
            chain.push_back(node);
            if (adj[node].size() != 2) break;
            size_t next_edge = SIZE_MAX;
            for (const auto& [nb, eid] : adj[node])
                if (!used[eid]) next_edge = eid;
            if (next_edge == SIZE_MAX) break;
            edge = next_edge;
        }
        chains.push_back(std::move(chain));
    };
    for (const auto& [node, nbrs] : adj) {
        if (nbrs.size() == 2) continue;
        for (const auto& [nb, eid] : nbrs)
            if (!used[eid]) walk(node, eid);
    }
    for (const auto& [node, nbrs] : adj)
        for (const auto& [nb, eid] : nbrs)
            if (!used[eid]) walk(node, eid);

    const double px = dem.pixel_size;
    const double tol = px / 2.0;
    for (const auto& chain : chains) {
        std::vector<std::pair<double, double>> raw;
        raw.reserve(chain.size());
        for (int64_t node : chain) {
            const int r = static_cast<int>(node / ncorner_cols);
            const int c = static_cast<int>(node % ncorner_cols);
            raw.emplace_back(dem.origin_x + c * px, dem.origin_y - r * px);
        }
        net.polylines.push_back(
            smooth_and_simplify(raw, params.smoothing_window_cells, tol));
    }
    return net;
}

// ---------------------------------------------------------------------------
// distance metrics
// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<double, double>> resample(const std::vector<Polyline>& lines,
                                                double spacing) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& line : lines) {
        if (line.points.empty()) continue;
        pts.push_back(line.points.front());
        double carried = 0.0;
        for (size_t i = 1; i < line.points.size(); ++i) {
            const auto [ax, ay] = line.points[i - 1];
            const auto [bx, by] = line.points[i];
            const double seg = std::hypot(bx - ax, by - ay);
            if (seg <= 0) continue;
            double along = spacing - carried;
            while (along < seg) {
                const double t = along / seg;
                pts.emplace_back(ax + t * (bx - ax), ay + t * (by - ay));
                along += spacing;
            }
            carried = seg - (along - spacing);
        }
        if (line.points.size() > 1) pts.push_back(line.points.back());
    }
    return pts;
}

double nearest_distance(const std::pair<double, double>& p,
                        const std::vector<Polyline>& lines) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& line : lines) {
        if (line.points.size() == 1) {
            best = std::min(best, std::hypot(p.first - line.points[0].first,
                                             p.second - line.points[0].second));
            continue;
        }
        for (size_t i = 1; i < line.points.size(); ++i)
            best = std::min(best, point_segment_distance(
                                      p.first, p.second, line.points[i - 1].first,
                                      line.points[i - 1].second, line.points[i].first,
                                      line.points[i].second));
    }
    return best;
}

double mean_nearest(const std::vector<std::pair<double, double>>& pts,
                    const std::vector<Polyline>& target) {
    double sum = 0;
    for (const auto& p : pts) sum += nearest_distance(p, target);
    return sum / static_cast<double>(pts.size());
}

}  // namespace

DivideDistance divide_distance(const std::vector<Polyline>& reconstructed,
                               const std::vector<Polyline>& reference, double spacing_m) {
    if (spacing_m <= 0) throw std::invalid_argument("divide_distance: spacing must be > 0");
    auto rc_pts = resample(reconstructed, spacing_m);
    auto rf_pts = resample(reference, spacing_m);
    if (rc_pts.empty() || rf_pts.empty())
        throw std::invalid_argument("divide_distance: empty line set");
    DivideDistance d;
    d.rc_to_rf_m = mean_nearest(rc_pts, reference);
    d.rf_to_rc_m = mean_nearest(rf_pts, reconstructed);
    d.average_m = 0.5 * (d.rc_to_rf_m + d.rf_to_rc_m);
    return d;
}

// ---------------------------------------------------------------------------
// parameter calibration
// ---------------------------------------------------------------------------

void CalibrationBounds::validate() const {
    if (gutter_lo > gutter_hi || buffer_lo > buffer_hi || area_lo_cells > area_hi_cells ||
        smooth_lo > smooth_hi)
        throw std::invalid_argument("CalibrationBounds: degenerate bounds (lo > hi)");
    if (gutter_lo < 0 || buffer_lo < 0 || area_lo_cells < 0 || smooth_lo < 0)
        throw std::invalid_argument("CalibrationBounds: negative bounds");
}

namespace {

DivideParams params_from_unit(const std::array<double, 4>& x, const CalibrationBounds& b) {
    DivideParams p;
    p.gutter_depth_m = b.gutter_lo + x[0] * (b.gutter_hi - b.gutter_lo);
    p.buffer_radius_cells =
        b.buffer_lo + static_cast<int>(std::lround(x[1] * (b.buffer_hi - b.buffer_lo)));
    p.min_watershed_area_cells = b.area_lo_cells + x[2] * (b.area_hi_cells - b.area_lo_cells);
    p.smoothing_window_cells =
        b.smooth_lo + static_cast<int>(std::lround(x[3] * (b.smooth_hi - b.smooth_lo)));
    return p;
}

std::array<double, 4> unit_from_params(const DivideParams& p, const CalibrationBounds& b) {
    auto norm = [](double v, double lo, double hi) {
        return hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.0;
    };
    return {norm(p.gutter_depth_m, b.gutter_lo, b.gutter_hi),
            norm(p.buffer_radius_cells, b.buffer_lo, b.buffer_hi),
            norm(p.min_watershed_area_cells, b.area_lo_cells, b.area_hi_cells),
            norm(p.smoothing_window_cells, b.smooth_lo, b.smooth_hi)};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

bool params_less(const DivideParams& a, const DivideParams& b) {
    return std::tie(a.gutter_depth_m, a.buffer_radius_cells, a.min_watershed_area_cells,
                    a.smoothing_window_cells) <
           std::tie(b.gutter_depth_m, b.buffer_radius_cells, b.min_watershed_area_cells,
                    b.smoothing_window_cells);
}

}  // namespace

CalibrationResult calibrate_params(const DEMGrid& dem, const MaskGrid& mask,
                                   const std::vector<Polyline>& reference, int budget,
                                   uint64_t seed, const CalibrationBounds& bounds,
                                   bool random_search) {
    if (budget < 10) throw std::invalid_argument("calibrate_params: budget must be >= 10");
    bounds.validate();
    if (reference.empty())
        throw std::invalid_argument("calibrate_params: empty reference divides");

    const double penalty = 1e7;
    auto objective = [&](const DivideParams& p) {
        try {
            DivideNetwork net = delineate_divides(dem, mask, p);
            if (net.polylines.empty()) return penalty;
            return divide_distance(net.polylines, reference).average_m;
        } catch (const std::exception&) {
            return penalty;
        }
    };

    Rng rng(seed);
    CalibrationResult result;
    std::vector<std::array<double, 4>> xs;
    std::vector<double> ys;

    auto evaluate = [&](const std::array<double, 4>& x) {
        const DivideParams p = params_from_unit(x, bounds);
        const double y = objective(p);
        xs.push_back(x);
        ys.push_back(y);
        result.log.push_back({static_cast<int>(result.log.size()), p, y});
        const bool better =
            result.log.size() == 1 || y < result.best_objective_m ||
            (y == result.best_objective_m && params_less(p, result.best));
        if (better) {
            result.best = p;
            result.best_objective_m = y;
        }
    };

    // default parameters first, then a random initial design
    evaluate(unit_from_params(DivideParams{}, bounds));
    const int n_init = std::min(budget, 10);
    while (static_cast<int>(xs.size()) < n_init)
        evaluate({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});

    while (static_cast<int>(xs.size()) < budget) {
        if (random_search) {
            evaluate({rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()});
            continue;
        }
        // RBF surrogate with expected improvement over a candidate pool
        const int n = static_cast<int>(xs.size());
        double mean_y = 0, std_y = 0;
        for (double y : ys) mean_y += y;
        mean_y /= n;
        for (double y : ys) std_y += (y - mean_y) * (y - mean_y);
        std_y = std::sqrt(std_y / n);
        if (std_y < 1e-12) std_y = 1.0;

        const double bw = 0.25, ridge = 1e-6;
        Eigen::MatrixXd k(n, n);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) {
            y[i] = (ys[i] - mean_y) / std_y;
            for (int j = 0; j < n; ++j) {
                double d2 = 0;
                for (int t = 0; t < 4; ++t) {
                    const double d = xs[i][t] - xs[j][t];
                    d2 += d * d;
                }
                k(i, j) = std::exp(-d2 / (2 * bw * bw));
            }
            k(i, i) += ridge;
        }
        Eigen::LDLT<Eigen::MatrixXd> solver(k);
        Eigen::VectorXd alpha = solver.solve(y);
        const double best_std = (result.best_objective_m - mean_y) / std_y;

        std::array<double, 4> best_cand{};
        double best_ei = -1;
        for (int cand = 0; cand < 256; ++cand) {
            std::array<double, 4> x{rng.uniform(), rng.uniform(), rng.uniform(),
                                    rng.uniform()};
            Eigen::VectorXd kx(n);
            for (int i = 0; i < n; ++i) {
                double d2 = 0;
                for (int t = 0; t < 4; ++t) {
                    const double d = x[t] - xs[i][t];
                    d2 += d * d;
                }
                kx[i] = std::exp(-d2 / (2 * bw * bw));
            }
            const double mu = kx.dot(alpha);
            const double var =
                std::max(1e-12, 1.0 - kx.dot(solver.solve(kx)));
            const double s = std::sqrt(var);
            const double u = (best_std - mu) / s;
            const double ei = (best_std - mu) * normal_cdf(u) + s * normal_pdf(u);
            if (ei > best_ei) {
                best_ei = ei;
                best_cand = x;
            }
        }
        evaluate(best_cand);
    }
    return result;
}

void write_calibration_log_csv(const std::string& path,
                               const std::vector<CalibrationRecord>& log) {
    io::CsvWriter csv(path, {"eval", "gutter_depth_m", "buffer_radius_cells",
                             "min_watershed_area_cells", "smoothing_window_cells",
                             "objective_m"});
    for (const auto& rec : log)
        csv.row({std::to_string(rec.eval_index), io::CsvWriter::num(rec.params.gutter_depth_m),
                 std::to_string(rec.params.buffer_radius_cells),
                 io::CsvWriter::num(rec.params.min_watershed_area_cells),
                 std::to_string(rec.params.smoothing_window_cells),
                 io::CsvWriter::num(rec.objective_m, 8)});
}

// ---------------------------------------------------------------------------
// file formats
// ---------------------------------------------------------------------------

void write_divides_geojson(const std::string& path, const std::vector<Polyline>& lines) {
    json doc;
    doc["type"] = "FeatureCollection";
    doc["features"] = json::array();
    for (size_t i = 0; i < lines.size(); ++i) {
        json coords = json::array();
        for (const auto& [x, y] : lines[i].points) coords.push_back({x, y});
        json feat;
        feat["type"] = "Feature";
        feat["properties"] = {{"id", i}, {"length_m", lines[i].length()}};
        feat["geometry"] = {{"type", "LineString"}, {"coordinates", coords}};
        doc["features"].push_back(feat);
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_divides_geojson: cannot write " + path);
    f << doc.dump(2) << "\n";
}

std::vector<Polyline> read_polylines_geojson(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_polylines_geojson: cannot open " + path);
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("read_polylines_geojson: parse error: " +
                                 std::string(e.what()));
    }
    std::vector<Polyline> out;
    for (const auto& feat : doc.at("features")) {
        const auto& geom = feat.at("geometry");
        const std::string type = geom.at("type").get<std::string>();
        auto line_from = [](const json& coords) {
            Polyline line;
            for (const auto& p : coords)
                line.points.emplace_back(p[0].get<double>(), p[1].get<double>());
            return line;
        };
        if (type == "LineString") {
            out.push_back(line_from(geom.at("coordinates")));
        } else if (type == "MultiLineString") {
            for (const auto& part : geom.at("coordinates")) out.push_back(line_from(part));
        }
    }
    return out;
}

void write_distance_json(const std::string& path, const DivideDistance& d) {
    json j;
    j["rc_to_rf_m"] = d.rc_to_rf_m;
    j["rf_to_rc_m"] = d.rf_to_rc_m;
    j["average_m"] = d.average_m;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_distance_json: cannot write " + path);
    f << j.dump(2) << "\n";
}

}  // namespace glamap::divides
