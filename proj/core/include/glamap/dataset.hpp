#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "glamap/grid.hpp"
#include "glamap/nn/tensor.hpp"
#include "glamap/random.hpp"

namespace glamap::data {

enum class Split { train, val, test };
std::string split_name(Split s);
Split split_from_name(const std::string& name);

/// Georeferenced multiband grid holding one feature group at a fixed pixel
/// spacing. Bands are (band, row, col); nodata is 1 where a pixel is missing.
struct RasterStack {
    nn::Tensor bands;
    MaskGrid nodata;
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_size = 10.0;
    std::string crs_id = "EPSG:32633";

    int band_count() const { return bands.defined() ? bands.dim(0) : 0; }
    int rows() const { return bands.defined() ? bands.dim(1) : 0; }
    int cols() const { return bands.defined() ? bands.dim(2) : 0; }
    void validate() const;
};

struct FeatureGroupInfo {
    std::string name;
    int min_bands;
    int max_bands;
    std::vector<std::string> band_names;  // full ordering; actual stacks may use a prefix
};
/// optical(6), dem(2: elevation, slope), thermal(1), sar(1..3: co-pol
/// sigma0, cross-pol sigma0, coherence).
const FeatureGroupInfo& feature_group(const std::string& name);

struct DataTrack {
    std::string id;
    std::vector<std::string> groups;
};
/// OPT_DEM, OPT_DEM_THERMAL or OPT_DEM_INSAR.
DataTrack data_track(const std::string& id);
std::vector<std::string> data_track_ids();

inline constexpr int kNumRegions = 12;
inline constexpr int kUnknownRegion = 11;

struct RegionCode {
    int index = kUnknownRegion;
    std::string name = "UNKNOWN";
};
const std::vector<std::string>& region_names();  // 11 abbreviations + UNKNOWN
RegionCode region_by_name(const std::string& name);
RegionCode region_by_index(int index);

/// Manifest entry; raster payloads stay on disk until load_tile.
struct TileDesc {
    std::string id;
    Split split = Split::train;
    RegionCode region;
    double lat = 0.0;
    double lon = 0.0;
    std::map<std::string, std::string> group_paths;  // group -> resolved path
    std::string label_path;
};

struct Tile {
    std::string id;
    Split split = Split::train;
    RegionCode region;
    double lat = 0.0;
    double lon = 0.0;
    std::map<std::string, RasterStack> rasters;
    MaskGrid label;  // 0 = background, 1 = glacier

    int rows() const { return label.rows(); }
    int cols() const { return label.cols(); }
    bool has_group(const std::string& g) const { return rasters.count(g) != 0; }
    void validate() const;  // co-registration + label range
};

/// 384x384 (or config-scaled) training patch with normalized features and a
/// one-hot label grid.
struct Sample {
    std::map<std::string, nn::Tensor> features;  // group -> (bands, P, P)
    nn::Tensor label_onehot;                     // (C, P, P)
    std::vector<double> location;                // empty, 12 (region) or 4 (coords)

    int patch() const { return label_onehot.defined() ? label_onehot.dim(1) : 0; }
};

// -- manifest -----------------------------------------------------------------

std::vector<TileDesc> load_manifest(const std::string& path);
/// Writes tiles with paths relative to the manifest directory.
void save_manifest(const std::string& path, const std::vector<TileDesc>& tiles,
                   double pixel_size, const std::string& crs);

Tile load_tile(const TileDesc& desc);

// -- splits ---------------------------------------------------------------------

struct SplitResult {
    std::vector<TileDesc> train, val, test;
};
/// Deterministic 60/20/20 assignment (each split nonempty for >= 3 tiles).
SplitResult split_tiles(std::vector<TileDesc> tiles, uint64_t seed);

// -- samples --------------------------------------------------------------------

/// Per-group normalization: optical/thermal/coherence clipped to [0,1], DEM
/// elevation standardized per tile, slope mapped tan -> tan/(1+tan), sigma0
/// mapped linearly from [-30,5] dB. Nodata pixels are zero-filled.
nn::Tensor normalized_group(const RasterStack& rs, const std::string& group);

/// Random co-registered crop over the requested groups; tiles smaller than
/// `patch_px` are reflect-padded first. Throws if a group is absent
/// ("group <name> unavailable").
Sample extract_patch(const Tile& tile, Rng& rng, const std::vector<std::string>& groups,
                     int patch_px);
/// Same crop logic with a fixed offset (deterministic grids, tests).
Sample extract_patch_at(const Tile& tile, int row0, int col0,
                        const std::vector<std::string>& groups, int patch_px);

/// Full-coverage window offsets with the given stride (last window snapped to
/// the edge).
std::vector<std::pair<int, int>> patch_grid_offsets(int rows, int cols, int patch,
                                                    int stride);

nn::Tensor label_to_onehot(const MaskGrid& label, int num_classes = 2);

}  // namespace glamap::data
