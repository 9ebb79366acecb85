#pragma once

#include <array>
#include <vector>

#include "glamap/dataset.hpp"
#include "glamap/model.hpp"
#include "glamap/probability.hpp"

namespace glamap::loc {

/// 12 weights on the probability simplex: one-hot at train time, soft after
/// inference-time bias optimisation.
struct RegionVector {
    std::vector<double> weights;  // size 12

    void validate() const;  // nonnegative, sums to 1 +- 1e-9
    int argmax() const;
};

/// (sin lat, cos lat, sin lon, cos lon) of the tile centroid.
struct CoordEncoding {
    std::array<double, 4> values;
};

struct BiasOptConfig {
    double lr = 1e-4;
    int max_epochs = 100;
    /// Convergence: relative objective change below this for `patience`
    /// consecutive epochs.
    double convergence_tol = 1e-5;
    int patience = 5;
    /// Stop when the epoch objective rises above the best by this relative
    /// margin (non-increase monitor).
    double violation_tol = 1e-3;

    void validate() const;
};

RegionVector encode_region(const data::RegionCode& code);
/// Training-time wrapper: substitutes UNKNOWN with probability
/// `unknown_prob`.
RegionVector encode_region_training(const data::RegionCode& code, double unknown_prob,
                                    Rng& rng);

/// Degrees in, unit-circle pairs out; errors outside [-90,90] x [-180,180].
CoordEncoding encode_coords(double lat_deg, double lon_deg);

/// Location vector for a tile under the model's location mode (empty for
/// none). `rng` non-null enables the UNKNOWN substitution.
std::vector<double> location_vector(const model::ModelConfig& cfg, const data::RegionCode& region,
                                    double lat, double lon, double unknown_prob = 0.0,
                                    Rng* rng = nullptr);

/// Total predictive entropy of a probability field: -sum_i p_i log_C p_i
/// summed over pixels. Equals N_pixels - sum of per-pixel confidence.
double entropy_objective(const ProbabilityRaster& probs);

struct BiasOptResult {
    RegionVector region_vector;
    std::vector<double> objective_history;  // per-epoch aggregates
    bool converged = false;
    int epochs_run = 0;
};

/// Minimizes total predictive entropy over the soft region vector (raw
/// logits optimized with Adam, model weights frozen). Deterministic; the
/// model state is bit-identical before and after.
BiasOptResult bias_optimize(model::ModelState& state,
                            const std::vector<data::Sample>& scene_samples,
                            const BiasOptConfig& config);

}  // namespace glamap::loc
