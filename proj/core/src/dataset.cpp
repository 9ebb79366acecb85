#include "glamap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "glamap/io/geotiff.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace glamap::data {

std::string split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + name + "'");
}

void RasterStack::validate() const {
    if (!bands.defined() || bands.ndim() != 3)
        throw std::invalid_argument("RasterStack: bands must be (band,row,col)");
    if (pixel_size <= 0) throw std::invalid_argument("RasterStack: pixel_size must be > 0");
    if (nodata.rows() != rows() || nodata.cols() != cols())
        throw std::invalid_argument("RasterStack: nodata mask shape mismatch");
}

const FeatureGroupInfo& feature_group(const std::string& name) {
    static const std::map<std::string, FeatureGroupInfo> groups = {
        {"optical",
         {"optical", 6, 6, {"blue", "green", "red", "nir", "swir1", "swir2"}}},
        {"dem", {"dem", 2, 2, {"elevation", "slope"}}},
        {"thermal", {"thermal", 1, 1, {"thermal"}}},
        {"sar", {"sar", 1, 3, {"copol_sigma0", "crosspol_sigma0", "coherence"}}},
    };
    auto it = groups.find(name);
    if (it == groups.end()) throw std::invalid_argument("unknown feature group '" + name + "'");
    return it->second;
}

DataTrack data_track(const std::string& id) {
    if (id == "OPT_DEM") return {id, {"optical", "dem"}};
    if (id == "OPT_DEM_THERMAL") return {id, {"optical", "dem", "thermal"}};
    if (id == "OPT_DEM_INSAR") return {id, {"optical", "dem", "sar"}};
    throw std::invalid_argument("unknown data track '" + id + "'");
}

std::vector<std::string> data_track_ids() {
    return {"OPT_DEM", "OPT_DEM_THERMAL", "OPT_DEM_INSAR"};
}

const std::vector<std::string>& region_names() {
    static const std::vector<std::string> names = {"ALP", "ANT", "AWA", "CAU",
                                                   "GRL", "HMA", "TRP", "NZL",
                                                   "SAN", "SCA", "SVAL", "UNKNOWN"};
    return names;
}

RegionCode region_by_name(const std::string& name) {
    const auto& names = region_names();
    for (int i = 0; i < kNumRegions; ++i)
        if (names[i] == name) return {i, name};
    throw std::invalid_argument("unknown region '" + name + "'");
}

RegionCode region_by_index(int index) {
    if (index < 0 || index >= kNumRegions)
        throw std::invalid_argument("region index out of range: " + std::to_string(index));
    return {index, region_names()[index]};
}

void Tile::validate() const {
    if (label.empty()) throw std::invalid_argument(id + ": empty label");
    for (const auto& [g, rs] : rasters) {
        rs.validate();
        if (rs.rows() != label.rows() || rs.cols() != label.cols())
            throw std::invalid_argument(id + ": shape mismatch");
        const auto& info = feature_group(g);
        if (rs.band_count() < info.min_bands || rs.band_count() > info.max_bands)
            throw std::invalid_argument(id + ": group " + g + " has " +
                                        std::to_string(rs.band_count()) + " bands");
    }
    for (int r = 0; r < label.rows(); ++r)
        for (int c = 0; c < label.cols(); ++c)
            if (label(r, c) > 1) throw std::invalid_argument(id + ": label values must be 0/1");
}

// -- manifest -------------------------------------------------------------------

std::vector<TileDesc> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot open " + path);
    json doc;
    try {
        f >> doc;
    } catch (const json::exception& e) {
        throw std::runtime_error("manifest: parse error in " + path + ": " + e.what());
    }
    const fs::path base = fs::path(path).parent_path();

    std::vector<TileDesc> out;
    if (!doc.contains("tiles")) return out;
    for (const auto& jt : doc["tiles"]) {
        TileDesc d;
        d.id = jt.at("id").get<std::string>();
        d.split = split_from_name(jt.at("split").get<std::string>());
        d.region = region_by_name(jt.at("region").get<std::string>());
        d.lat = jt.at("centroid")[0].get<double>();
        d.lon = jt.at("centroid")[1].get<double>();
        d.label_path = (base / jt.at("label").get<std::string>()).string();
        for (const auto& [g, p] : jt.at("groups").items())
            d.group_paths[g] = (base / p.get<std::string>()).string();
        out.push_back(std::move(d));
    }

    // Validate co-registration from raster headers, naming the tile.
    for (const auto& d : out) {
        const auto label_info = io::read_geotiff_info(d.label_path);
        for (const auto& [g, p] : d.group_paths) {
            const auto info = io::read_geotiff_info(p);
            if (info.width != label_info.width || info.height != label_info.height)
                throw std::runtime_error(d.id + ": shape mismatch");
        }
    }
    return out;
}

void save_manifest(const std::string& path, const std::vector<TileDesc>& tiles,
                   double pixel_size, const std::string& crs) {
    const fs::path base = fs::path(path).parent_path();
    json doc;
    doc["pixel_size"] = pixel_size;
    doc["crs"] = crs;
    json band_order;
    for (const auto& g : {"optical", "dem", "thermal", "sar"})
        band_order[g] = feature_group(g).band_names;
    doc["band_order"] = band_order;
    doc["tiles"] = json::array();
    for (const auto& d : tiles) {
        json jt;
        jt["id"] = d.id;
        jt["split"] = split_name(d.split);
        jt["region"] = d.region.name;
        jt["centroid"] = {d.lat, d.lon};
        jt["label"] = fs::relative(d.label_path, base).generic_string();
        json groups;
        for (const auto& [g, p] : d.group_paths)
            groups[g] = fs::relative(p, base).generic_string();
        jt["groups"] = groups;
        doc["tiles"].push_back(jt);
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot write " + path);
    f << doc.dump(2) << "\n";
}

namespace {

RasterStack raster_from_tiff(const io::GeoTiffImage& img) {
    RasterStack rs;
    const int b = img.info.bands, h = img.info.height, w = img.info.width;
    rs.bands = nn::Tensor({b, h, w});
    rs.nodata = MaskGrid(h, w, 0);
    for (int bi = 0; bi < b; ++bi)
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                const float v = img.at(bi, r, c);
                rs.bands.at3(bi, r, c) = v;
                if (img.info.nodata && v == static_cast<float>(*img.info.nodata))
                    rs.nodata(r, c) = 1;
            }
    rs.origin_x = img.info.ref.origin_x;
    rs.origin_y = img.info.ref.origin_y;
    rs.pixel_size = img.info.ref.pixel_size;
    rs.crs_id = "EPSG:" + std::to_string(img.info.ref.epsg);
    return rs;
}

}  // namespace

Tile load_tile(const TileDesc& desc) {
    Tile t;
    t.id = desc.id;
    t.split = desc.split;
    t.region = desc.region;
    t.lat = desc.lat;
    t.lon = desc.lon;
    const auto label_img = io::read_geotiff(desc.label_path);
    t.label = MaskGrid(label_img.info.height, label_img.info.width, 0);
    for (int r = 0; r < label_img.info.height; ++r)
        for (int c = 0; c < label_img.info.width; ++c)
            t.label(r, c) = label_img.at(0, r, c) > 0.5f ? 1 : 0;
    for (const auto& [g, p] : desc.group_paths) t.rasters[g] = raster_from_tiff(io::read_geotiff(p));
    t.validate();
    return t;
}

// -- splits ---------------------------------------------------------------------

SplitResult split_tiles(std::vector<TileDesc> tiles, uint64_t seed) {
    const int n = static_cast<int>(tiles.size());
    if (n < 3) throw std::invalid_argument("split_tiles: need at least 3 tiles");

    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(0, i)]);

    int n_train = static_cast<int>(std::lround(0.6 * n));
    int n_val = static_cast<int>(std::lround(0.2 * n));
    int n_test = n - n_train - n_val;
    // Keep every split nonempty; shrink the largest as needed.
    auto largest = [&]() -> int& {
        if (n_train >= n_val && n_train >= n_test) return n_train;
        if (n_val >= n_test) return n_val;
        return n_test;
    };
    while (n_train < 1 || n_val < 1 || n_test < 1) {
        int& big = largest();
        --big;
        if (n_train < 1) ++n_train;
        else if (n_val < 1) ++n_val;
        else ++n_test;
    }

    SplitResult out;
    for (int i = 0; i < n; ++i) {
        TileDesc d = tiles[idx[i]];
        if (i < n_train) {
            d.split = Split::train;
            out.train.push_back(std::move(d));
        } else if (i < n_train + n_val) {
            d.split = Split::val;
            out.val.push_back(std::move(d));
        } else {
            d.split = Split::test;
            out.test.push_back(std::move(d));
        }
    }
    return out;
}

// -- samples --------------------------------------------------------------------

nn::Tensor normalized_group(const RasterStack& rs, const std::string& group) {
    const auto& info = feature_group(group);
    const int b = rs.band_count(), h = rs.rows(), w = rs.cols();
    nn::Tensor out({b, h, w});
    auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };

    for (int bi = 0; bi < b; ++bi) {
        const std::string& band = info.band_names[bi];
        if (group == "dem" && band == "elevation") {
            // per-tile standardization over valid pixels
            double sum = 0, sum2 = 0;
            int64_t cnt = 0;
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    if (rs.nodata(r, c)) continue;
                    const double v = rs.bands.at3(bi, r, c);
                    sum += v;
                    sum2 += v * v;
                    ++cnt;
                }
            const double mean = cnt ? sum / cnt : 0.0;
            const double var = cnt ? std::max(0.0, sum2 / cnt - mean * mean) : 1.0;
            const double inv_std = 1.0 / std::max(1e-6, std::sqrt(var));
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c)
                    out.at3(bi, r, c) = (rs.bands.at3(bi, r, c) - mean) * inv_std;
        } else if (group == "dem" && band == "slope") {
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    const double s = std::max(0.0, rs.bands.at3(bi, r, c));
                    out.at3(bi, r, c) = s / (1.0 + s);
                }
        } else if (group == "sar" && (band == "copol_sigma0" || band == "crosspol_sigma0")) {
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c)
                    out.at3(bi, r, c) = clamp01((rs.bands.at3(bi, r, c) + 30.0) / 35.0);
        } else {
            // optical reflectance, thermal index, coherence: already [0,1]-scaled
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) out.at3(bi, r, c) = clamp01(rs.bands.at3(bi, r, c));
        }
    }
    // zero-fill nodata, mask stays on the RasterStack
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (rs.nodata(r, c))
                for (int bi = 0; bi < b; ++bi) out.at3(bi, r, c) = 0.0;
    return out;
}

namespace {

// Reflect index into [0, n) (abcb|abcd|cba pattern).
int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

nn::Tensor crop_reflect(const nn::Tensor& src, int row0, int col0, int patch) {
    const int b = src.dim(0), h = src.dim(1), w = src.dim(2);
    nn::Tensor out({b, patch, patch});
    for (int bi = 0; bi < b; ++bi)
        for (int r = 0; r < patch; ++r) {
            const int sr = reflect(row0 + r, h);
            for (int c = 0; c < patch; ++c)
                out.at3(bi, r, c) = src.at3(bi, sr, reflect(col0 + c, w));
        }
    return out;
}

MaskGrid crop_reflect_mask(const MaskGrid& src, int row0, int col0, int patch) {
    MaskGrid out(patch, patch, 0);
    for (int r = 0; r < patch; ++r) {
        const int sr = reflect(row0 + r, src.rows());
        for (int c = 0; c < patch; ++c) out(r, c) = src(sr, reflect(col0 + c, src.cols()));
    }
    return out;
}

}  // namespace

nn::Tensor label_to_onehot(const MaskGrid& label, int num_classes) {
    nn::Tensor oh({num_classes, label.rows(), label.cols()});
    for (int r = 0; r < label.rows(); ++r)
        for (int c = 0; c < label.cols(); ++c) oh.at3(label(r, c), r, c) = 1.0;
    return oh;
}

Sample extract_patch_at(const Tile& tile, int row0, int col0,
                        const std::vector<std::string>& groups, int patch_px) {
    Sample s;
    for (const auto& g : groups) {
        auto it = tile.rasters.find(g);
        if (it == tile.rasters.end())
            throw std::invalid_argument("group " + g + " unavailable");
        s.features[g] = crop_reflect(normalized_group(it->second, g), row0, col0, patch_px);
    }
    s.label_onehot = label_to_onehot(crop_reflect_mask(tile.label, row0, col0, patch_px));
    return s;
}

Sample extract_patch(const Tile& tile, Rng& rng, const std::vector<std::string>& groups,
                     int patch_px) {
    const int max_r = std::max(0, tile.rows() - patch_px);
    const int max_c = std::max(0, tile.cols() - patch_px);
    const int r0 = max_r > 0 ? rng.uniform_int(0, max_r) : 0;
    const int c0 = max_c > 0 ? rng.uniform_int(0, max_c) : 0;
    return extract_patch_at(tile, r0, c0, groups, patch_px);
}

std::vector<std::pair<int, int>> patch_grid_offsets(int rows, int cols, int patch,
                                                    int stride) {
    if (stride < 1) throw std::invalid_argument("patch_grid_offsets: stride must be >= 1");
    std::vector<int> rs, cs;
    for (int r = 0;; r += stride) {
        if (r + patch >= rows) {
            rs.push_back(std::max(0, rows - patch));
            break;
        }
        rs.push_back(r);
    }
    for (int c = 0;; c += stride) {
        if (c + patch >= cols) {
            cs.push_back(std::max(0, cols - patch));
            break;
        }
        cs.push_back(c);
    }
    std::vector<std::pair<int, int>> out;
    for (int r : rs)
        for (int c : cs) out.emplace_back(r, c);
    return out;
}

}  // namespace glamap::data
