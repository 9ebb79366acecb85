#include "glamap/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "glamap/io/csv.hpp"
#include "glamap/location.hpp"

namespace glamap::infer {

using nn::Tensor;
using nn::Var;
namespace op = nn::op;

namespace {

int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

Tensor crop_window(const Tensor& src, int r0, int c0, int window) {
    const int b = src.dim(0), h = src.dim(1), w = src.dim(2);
    Tensor out({b, window, window});
    for (int bi = 0; bi < b; ++bi)
        for (int r = 0; r < window; ++r) {
            const int sr = reflect(r0 + r, h);
            for (int c = 0; c < window; ++c)
                out.at3(bi, r, c) = src.at3(bi, sr, reflect(c0 + c, w));
        }
    return out;
}

}  // namespace

SceneResult predict_scene(model::ModelState& state, const data::Tile& scene,
                          const PredictOptions& opts) {
    const model::ModelConfig& cfg = state.config;
    if (opts.window != cfg.patch_size_px)
        throw std::invalid_argument(
            "predict_scene: window must equal the model patch size (position embeddings are "
            "tied to it)");
    if (opts.overlap < 0 || opts.overlap >= opts.window)
        throw std::invalid_argument("predict_scene: overlap must be in [0, window)");

    // Normalize each group once over the whole scene.
    std::map<std::string, Tensor> normalized;
    for (const auto& g : cfg.groups) {
        auto it = scene.rasters.find(g);
        if (it == scene.rasters.end())
            throw std::invalid_argument("predict_scene: scene lacks group " + g +
                                        " required by the model");
        normalized[g] = data::normalized_group(it->second, g);
    }

    std::vector<double> location =
        opts.location_override
            ? *opts.location_override
            : loc::location_vector(cfg, scene.region, scene.lat, scene.lon);

    const int rows = scene.rows(), cols = scene.cols();
    const int window = opts.window;
    const int stride = window - opts.overlap;
    const int c = cfg.num_classes;
    const int64_t hw = static_cast<int64_t>(rows) * cols;

    Tensor acc({c, rows, cols});
    Tensor wsum({1, rows, cols});

    // Uniform weights by default; cosine (Hann) taper behind the flag.
    Tensor wwin({window, window}, 1.0);
    if (opts.cosine_weights) {
        for (int r = 0; r < window; ++r)
            for (int cc = 0; cc < window; ++cc) {
                const double wr = 0.5 - 0.5 * std::cos(2.0 * M_PI * (r + 0.5) / window);
                const double wc = 0.5 - 0.5 * std::cos(2.0 * M_PI * (cc + 0.5) / window);
                wwin.at2(r, cc) = std::max(1e-6, wr * wc);
            }
    }

    auto offsets = data::patch_grid_offsets(std::max(rows, window), std::max(cols, window),
                                            window, stride);
    Rng seed_rng(opts.seed);

    for (size_t widx = 0; widx < offsets.size(); ++widx) {
        const auto [r0, c0] = offsets[widx];
        data::Sample sample;
        for (const auto& g : cfg.groups)
            sample.features[g] = crop_window(normalized[g], r0, c0, window);
        sample.location = location;
        sample.label_onehot = Tensor({c, window, window});  // unused by the forward pass

        Tensor probs;
        if (opts.mc_passes > 1) {
            probs = model::mc_forward(state, sample, opts.mc_passes,
                                      seed_rng.fork(widx).next())
                        .probs;
        } else {
            probs = model::forward(state, sample).probs;
        }
        for (int ci = 0; ci < c; ++ci)
            for (int r = 0; r < window; ++r) {
                const int gr = r0 + r;
                if (gr >= rows) continue;
                for (int cc = 0; cc < window; ++cc) {
                    const int gc = c0 + cc;
                    if (gc >= cols) continue;
                    const double w = wwin.at2(r, cc);
                    acc.at3(ci, gr, gc) += w * probs.at3(ci, r, cc);
                    if (ci == 0) wsum.at3(0, gr, gc) += w;
                }
            }
    }

    ProbabilityRaster prob;
    prob.probs = Tensor({c, rows, cols});
    for (int ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < hw; ++i)
            prob.probs[ci * hw + i] = acc[ci * hw + i] / wsum[i];
    prob.validate_normalized(1e-6);

    SceneResult out;
    out.confidence_raw = uq::confidence(prob);
    if (opts.calibrator) out.confidence_cal = opts.calibrator->apply(out.confidence_raw);
    out.mask = prob.argmax_mask();
    out.probability = std::move(prob);
    out.provenance.region_vector = location;
    return out;
}

IouReport evaluate_iou(const MaskGrid& pred, const MaskGrid& reference) {
    if (pred.rows() != reference.rows() || pred.cols() != reference.cols())
        throw std::invalid_argument("evaluate_iou: mask shape mismatch");
    IouReport rep;
    for (int r = 0; r < pred.rows(); ++r)
        for (int c = 0; c < pred.cols(); ++c) {
            const bool p = pred(r, c) == 1;
            const bool g = reference(r, c) == 1;
            if (p && g) ++rep.counts.tp;
            else if (p && !g) ++rep.counts.fp;
            else if (!p && g) ++rep.counts.fn;
            else ++rep.counts.tn;
        }
    // background IoU from the complemented confusion; a class absent from
    // both masks counts as perfect agreement
    auto safe_iou = [](const iou::ConfusionCounts& c) {
        return c.tp + c.fp + c.fn == 0 ? 1.0 : iou::iou_from_counts(c);
    };
    iou::ConfusionCounts bg{rep.counts.tn, rep.counts.fn, rep.counts.fp, rep.counts.tp};
    rep.per_class = {safe_iou(bg), safe_iou(rep.counts)};
    rep.glacier_iou = rep.per_class[1];
    return rep;
}

// ---------------------------------------------------------------------------
// strategy/track comparison harness
// ---------------------------------------------------------------------------

namespace {

bool tile_has_groups(const data::Tile& t, const std::vector<std::string>& groups) {
    for (const auto& g : groups)
        if (!t.has_group(g)) return false;
    return true;
}

std::optional<double> evaluate_region_iou(model::ModelState& state,
                                          const std::vector<data::Tile>& tiles,
                                          const std::string& region) {
    iou::ConfusionCounts counts;
    bool any = false;
    PredictOptions opts;
    opts.window = state.config.patch_size_px;
    opts.overlap = 0;
    for (const auto& t : tiles) {
        if (t.split != data::Split::test || t.region.name != region) continue;
        if (!tile_has_groups(t, state.config.groups)) continue;
        SceneResult res = predict_scene(state, t, opts);
        IouReport rep = evaluate_iou(res.mask, t.label);
        counts.tp += rep.counts.tp;
        counts.fp += rep.counts.fp;
        counts.fn += rep.counts.fn;
        counts.tn += rep.counts.tn;
        any = true;
    }
    if (!any || counts.tp + counts.fp + counts.fn == 0) return std::nullopt;
    return iou::iou_from_counts(counts);
}

}  // namespace

void ComparisonTable::write_csv(const std::string& path) const {
    std::vector<std::string> header = {"strategy", "track"};
    header.insert(header.end(), regions.begin(), regions.end());
    io::CsvWriter csv(path, header);
    for (size_t i = 0; i < configs.size(); ++i) {
        std::vector<std::string> row = {train::strategy_name(configs[i].strategy),
                                        configs[i].track};
        for (const auto& cell : iou[i])
            row.push_back(cell ? io::CsvWriter::num(*cell, 4) : "—");
        csv.row(row);
    }
}

bool ComparisonTable::fully_populated() const {
    for (const auto& row : iou)
        for (const auto& cell : row)
            if (!cell) return false;
    return true;
}

ComparisonTable comparison_harness(const std::vector<ComparisonConfig>& configs,
                                   const std::vector<data::TileDesc>& dataset,
                                   const model::ModelConfig& base_model,
                                   const train::TrainConfig& base_train, uint64_t seed) {
    if (dataset.empty()) throw std::invalid_argument("comparison_harness: empty dataset");

    std::vector<data::Tile> tiles;
    tiles.reserve(dataset.size());
    for (const auto& d : dataset) tiles.push_back(data::load_tile(d));

    // region columns in index order
    std::vector<std::string> regions;
    for (int i = 0; i < data::kNumRegions; ++i) {
        const std::string name = data::region_by_index(i).name;
        for (const auto& t : tiles)
            if (t.region.name == name) {
                regions.push_back(name);
                break;
            }
    }

    ComparisonTable table;
    table.regions = regions;
    table.configs = configs;

    // the global model per track is shared between the global and finetune rows
    std::map<std::string, train::TrainResult> global_cache;

    for (const auto& config : configs) {
        model::ModelConfig mcfg = base_model;
        mcfg.groups = data::data_track(config.track).groups;
        mcfg.init_seed = seed;

        train::TrainConfig tcfg = base_train;
        tcfg.seed = seed;

        auto global_result = [&]() -> train::TrainResult& {
            auto it = global_cache.find(config.track);
            if (it == global_cache.end()) {
                model::ModelState init = model::ModelState::init(mcfg);
                it = global_cache
                         .emplace(config.track,
                                  train::train_on_tiles(init, tiles,
                                                        {train::Strategy::global, {}}, tcfg))
                         .first;
            }
            return it->second;
        };

        std::vector<std::optional<double>> row(regions.size());
        try {
            if (config.strategy == train::Strategy::global) {
                train::TrainResult& res = global_result();
                for (size_t ri = 0; ri < regions.size(); ++ri)
                    row[ri] = evaluate_region_iou(res.best_state, tiles, regions[ri]);
            } else if (config.strategy == train::Strategy::regional) {
                for (size_t ri = 0; ri < regions.size(); ++ri) {
                    try {
                        model::ModelState init = model::ModelState::init(mcfg);
                        train::TrainResult res = train::train_on_tiles(
                            init, tiles, {train::Strategy::regional, {regions[ri]}}, tcfg);
                        row[ri] = evaluate_region_iou(res.best_state, tiles, regions[ri]);
                    } catch (const std::exception&) {
                        row[ri] = std::nullopt;  // missing features or empty split: "—"
                    }
                }
            } else {
                train::TrainResult& global_res = global_result();
                for (size_t ri = 0; ri < regions.size(); ++ri) {
                    try {
                        train::TrainResult res = train::train_on_tiles(
                            global_res.best_state, tiles,
                            {train::Strategy::finetune, {regions[ri]}}, tcfg);
                        row[ri] = evaluate_region_iou(res.best_state, tiles, regions[ri]);
                    } catch (const std::exception&) {
                        row[ri] = std::nullopt;
                    }
                }
            }
        } catch (const std::exception&) {
            // whole config unusable on this dataset (e.g. track features absent
            // everywhere): leave the row as "—" cells and continue
        }
        table.iou.push_back(std::move(row));
    }
    return table;
}

MaskGrid confidence_band(const MaskGrid& mask, const uq::ConfidenceRaster& calibrated,
                         double level, int boundary_radius) {
    if (mask.rows() != calibrated.values.rows() || mask.cols() != calibrated.values.cols())
        throw std::invalid_argument("confidence_band: mask/confidence shape mismatch");
    const int rows = mask.rows(), cols = mask.cols();
    MaskGrid band(rows, cols, 0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (calibrated.values(r, c) >= level) continue;
            bool near_boundary = false;
            for (int dr = -boundary_radius; dr <= boundary_radius && !near_boundary; ++dr)
                for (int dc = -boundary_radius; dc <= boundary_radius && !near_boundary;
                     ++dc) {
                    const int nr = r + dr, nc = c + dc;
                    if (!mask.in_bounds(nr, nc)) continue;
                    if (mask(nr, nc) != mask(r, c)) near_boundary = true;
                }
            if (near_boundary) band(r, c) = 1;
        }
    return band;
}

// ---------------------------------------------------------------------------
// outline vectorization
// ---------------------------------------------------------------------------

std::vector<divides::Polyline> mask_outlines(const MaskGrid& mask, double origin_x,
                                             double origin_y, double pixel_size) {
    const int rows = mask.rows(), cols = mask.cols();
    const int ncc = cols + 1;
    auto corner_id = [ncc](int r, int c) { return static_cast<int64_t>(r) * ncc + c; };

    // crack edges between mask cells and background/outside
    std::vector<std::pair<int64_t, int64_t>> edges;
    std::map<int64_t, std::vector<size_t>> incident;
    auto add_edge = [&](int64_t a, int64_t b) {
        incident[a].push_back(edges.size());
        incident[b].push_back(edges.size());
        edges.emplace_back(a, b);
    };
    auto at = [&](int r, int c) -> uint8_t {
        return mask.in_bounds(r, c) ? mask(r, c) : 0;
    };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (!mask(r, c)) continue;
            if (!at(r - 1, c)) add_edge(corner_id(r, c), corner_id(r, c + 1));
            if (!at(r + 1, c)) add_edge(corner_id(r + 1, c), corner_id(r + 1, c + 1));
            if (!at(r, c - 1)) add_edge(corner_id(r, c), corner_id(r + 1, c));
            if (!at(r, c + 1)) add_edge(corner_id(r, c + 1), corner_id(r + 1, c + 1));
        }

    std::vector<bool> used(edges.size(), false);
    std::vector<divides::Polyline> rings;
    for (size_t e0 = 0; e0 < edges.size(); ++e0) {
        if (used[e0]) continue;
        std::vector<int64_t> chain = {edges[e0].first, edges[e0].second};
        used[e0] = true;
        int64_t node = edges[e0].second;
        while (node != chain.front()) {
            size_t next = SIZE_MAX;
            for (size_t eid : incident[node])
                if (!used[eid]) {
                    next = eid;
                    break;
                }
            if (next == SIZE_MAX) break;
            used[next] = true;
            node = edges[next].first == node ? edges[next].second : edges[next].first;
            chain.push_back(node);
        }
        divides::Polyline ring;
        for (int64_t n : chain) {
            const int r = static_cast<int>(n / ncc), c = static_cast<int>(n % ncc);
            ring.points.emplace_back(origin_x + c * pixel_size, origin_y - r * pixel_size);
        }
        rings.push_back(std::move(ring));
    }
    return rings;
}

void write_outlines_geojson(const std::string& path,
                            const std::vector<divides::Polyline>& rings) {
    nlohmann::json doc;
    doc["type"] = "FeatureCollection";
    doc["features"] = nlohmann::json::array();
    for (size_t i = 0; i < rings.size(); ++i) {
        nlohmann::json coords = nlohmann::json::array();
        for (const auto& [x, y] : rings[i].points) coords.push_back({x, y});
        nlohmann::json feat;
        feat["type"] = "Feature";
        feat["properties"] = {{"id", i}};
        feat["geometry"] = {{"type", "Polygon"},
                            {"coordinates", nlohmann::json::array({coords})}};
        doc["features"].push_back(feat);
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_outlines_geojson: cannot write " + path);
    f << doc.dump(2) << "\n";
}

}  // namespace glamap::infer
