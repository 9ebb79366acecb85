#pragma once

#include <optional>
#include <string>
#include <vector>

#include "glamap/dataset.hpp"
#include "glamap/divides.hpp"
#include "glamap/iou_estimate.hpp"
#include "glamap/model.hpp"
#include "glamap/training.hpp"
#include "glamap/uncertainty.hpp"

namespace glamap::infer {

struct SceneResult {
    ProbabilityRaster probability;
    uq::ConfidenceRaster confidence_raw;
    std::optional<uq::ConfidenceRaster> confidence_cal;
    MaskGrid mask;

    struct Provenance {
        std::string model_id;
        std::string strategy;
        std::string track;
        std::vector<double> region_vector;
    } provenance;
};

struct PredictOptions {
    int window = 384;
    int overlap = 64;
    int mc_passes = 0;  // <= 1 means one deterministic forward per window
    uint64_t seed = 0;
    const uq::Calibrator* calibrator = nullptr;
    /// Replaces the scene's own location vector (bias-optimized region
    /// vectors enter here).
    std::optional<std::vector<double>> location_override;
    /// Cosine-tapered window weights instead of uniform overlap averaging.
    bool cosine_weights = false;
};

/// Sliding-window prediction with stitching; per-pixel probabilities are
/// weight-averaged in overlaps, confidence is computed on the averaged field
/// and the mask is the per-pixel argmax.
SceneResult predict_scene(model::ModelState& state, const data::Tile& scene,
                          const PredictOptions& opts);

struct IouReport {
    iou::ConfusionCounts counts;
    std::vector<double> per_class;  // background, glacier
    double glacier_iou;
};
/// Confusion counts + IoU per class for co-registered masks.
IouReport evaluate_iou(const MaskGrid& pred, const MaskGrid& reference);

struct ComparisonConfig {
    train::Strategy strategy = train::Strategy::global;
    std::string track = "OPT_DEM";
};

struct ComparisonTable {
    std::vector<std::string> regions;                 // column order
    std::vector<ComparisonConfig> configs;            // row order
    std::vector<std::vector<std::optional<double>>> iou;  // [row][col]; nullopt = absent

    void write_csv(const std::string& path) const;
    bool fully_populated() const;
};

/// Trains every (strategy, track) config on the dataset and evaluates
/// test-split glacier IoU per region. Missing track features for a region
/// are recorded as absent cells and the run continues.
ComparisonTable comparison_harness(const std::vector<ComparisonConfig>& configs,
                                   const std::vector<data::TileDesc>& dataset,
                                   const model::ModelConfig& base_model,
                                   const train::TrainConfig& base_train, uint64_t seed);

/// Pixels along the predicted boundary whose calibrated confidence falls
/// below `level` (the overlay drawn as the 95% confidence band).
MaskGrid confidence_band(const MaskGrid& mask, const uq::ConfidenceRaster& calibrated,
                         double level = 0.95, int boundary_radius = 3);

/// Closed boundary rings of the predicted mask in projected coordinates.
std::vector<divides::Polyline> mask_outlines(const MaskGrid& mask, double origin_x,
                                             double origin_y, double pixel_size);
void write_outlines_geojson(const std::string& path,
                            const std::vector<divides::Polyline>& rings);

}  // namespace glamap::infer
