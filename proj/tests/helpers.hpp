#pragma once

// Shared test utilities. The threshold oracle below re-derives the glacier
// mask from raw bands only, independently of synth_scene's internals: a pixel
// is glacier iff NIR/SWIR1 exceeds the ratio threshold AND the tan-scaled
// slope is below the slope threshold.

#include <cmath>

#include "glamap/dataset.hpp"
#include "glamap/synth.hpp"

namespace test_helpers {

inline glamap::MaskGrid threshold_oracle(const glamap::data::Tile& tile) {
    const auto& opt = tile.rasters.at("optical");
    const auto& dem = tile.rasters.at("dem");
    glamap::MaskGrid out(tile.rows(), tile.cols(), 0);
    for (int r = 0; r < tile.rows(); ++r)
        for (int c = 0; c < tile.cols(); ++c) {
            const double nir = opt.bands.at3(3, r, c);
            const double swir1 = opt.bands.at3(4, r, c);
            const double ratio = nir / (swir1 + 1e-6);
            const double s = dem.bands.at3(1, r, c);
            const double slope_norm = s / (1.0 + s);
            out(r, c) = (ratio > glamap::data::kOracleRatioThreshold &&
                         slope_norm < glamap::data::kOracleSlopeNormThreshold)
                            ? 1
                            : 0;
        }
    return out;
}

}  // namespace test_helpers
