#pragma once

#include <string>
#include <vector>

#include "glamap/dataset.hpp"

namespace glamap::data {

/// Parameters of one synthetic glacier scene. Scenes are fully deterministic
/// for a fixed seed: the same spec+seed yields bit-identical tiles.
struct SynthSpec {
    int size_px = 64;
    int blob_count = 3;
    double debris_fraction = 0.0;  // fraction of glacier pixels given a rock-like signature
    double noise_level = 0.0;      // Gaussian sigma added to every feature band
    std::vector<std::string> groups = {"optical", "dem", "thermal", "sar"};
    RegionCode region = region_by_index(0);
    double lat = 46.5;
    double lon = 8.0;
    double pixel_size = 10.0;
    std::string id = "SYN-0-0";

    void validate() const;
};

/// Generates a co-registered Tile with a ground-truth glacier mask. Glacier
/// pixels carry a high-NIR/low-SWIR optical signature, low slope, low thermal
/// brightness and smooth low backscatter; with debris_fraction 0 and
/// noise_level 0 the mask is exactly recoverable from a band-ratio + slope
/// threshold.
Tile synth_scene(const SynthSpec& spec, uint64_t seed);

/// Thresholds that make the noiseless scene exactly separable; shared with
/// tests and documentation.
inline constexpr double kOracleRatioThreshold = 2.0;
inline constexpr double kOracleSlopeNormThreshold = 0.35;

}  // namespace glamap::data
