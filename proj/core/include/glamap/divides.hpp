#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "glamap/grid.hpp"

namespace glamap::divides {

struct DEMGrid {
    Grid<double> elevation;  // meters
    MaskGrid nodata;         // 1 = missing
    double pixel_size = 10.0;
    double origin_x = 0.0;
    double origin_y = 0.0;

    int rows() const { return elevation.rows(); }
    int cols() const { return elevation.cols(); }
    void validate() const;
};

struct DivideParams {
    double gutter_depth_m = 100.0;
    int buffer_radius_cells = 2;
    double min_watershed_area_cells = 100.0;  // 0.01 km^2 at 10 m spacing
    int smoothing_window_cells = 3;

    void validate() const;
};

/// Polyline in projected meters.
struct Polyline {
    std::vector<std::pair<double, double>> points;  // (x, y)
    double length() const;
};

struct DivideNetwork {
    std::vector<Polyline> polylines;
    Grid<int> watershed_labels;  // 0 outside the glacier mask, 1..k inside
};

/// Priority-flood depression filling: every unmasked cell afterwards drains
/// to the grid/nodata boundary; output >= input everywhere; idempotent.
DEMGrid fill_depressions(const DEMGrid& dem);

inline constexpr uint8_t kFlowNone = 255;  // terminal (sink/outlet) or masked
/// D8 steepest-descent directions with deterministic flat resolution. Codes
/// index the neighbor table {N, NE, E, SE, S, SW, W, NW}.
Grid<uint8_t> flow_direction(const DEMGrid& dem);
std::pair<int, int> flow_offset(uint8_t code);

/// Splits a glacier complex into individual glaciers. Pipeline: buffer the
/// mask, carve a gutter rim along the buffered margin, fill depressions,
/// route D8 flow on the inverted surface so catchments grow from summit
/// seeds, merge catchments below the area threshold, then trace, smooth and
/// simplify the catchment boundaries inside the mask into divide polylines.
DivideNetwork delineate_divides(const DEMGrid& dem, const MaskGrid& glacier_mask,
                                const DivideParams& params);

struct DivideDistance {
    double rc_to_rf_m;  // mean over reconstructed samples of distance to reference
    double rf_to_rc_m;  // mean over reference samples of distance to reconstructed
    double average_m;
};
/// Both line sets are resampled every `spacing_m` meters; each sample point
/// contributes its Euclidean distance to the nearest segment of the other set.
DivideDistance divide_distance(const std::vector<Polyline>& reconstructed,
                               const std::vector<Polyline>& reference,
                               double spacing_m = 10.0);

struct CalibrationBounds {
    double gutter_lo = 10.0, gutter_hi = 300.0;
    int buffer_lo = 1, buffer_hi = 4;
    double area_lo_cells = 0.0, area_hi_cells = 400.0;
    int smooth_lo = 0, smooth_hi = 6;

    void validate() const;
};

struct CalibrationRecord {
    int eval_index;
    DivideParams params;
    double objective_m;
};

struct CalibrationResult {
    DivideParams best;
    double best_objective_m = 0.0;
    std::vector<CalibrationRecord> log;
};

/// Derivative-free search over DivideParams minimizing the two-way divide
/// distance. Sequential model-based by default (RBF surrogate + expected
/// improvement); plain random search behind the flag. The default parameter
/// point is always evaluated first, and evaluations never exceed `budget`.
CalibrationResult calibrate_params(const DEMGrid& dem, const MaskGrid& mask,
                                   const std::vector<Polyline>& reference, int budget,
                                   uint64_t seed, const CalibrationBounds& bounds = {},
                                   bool random_search = false);

void write_calibration_log_csv(const std::string& path,
                               const std::vector<CalibrationRecord>& log);

// -- file formats ------------------------------------------------------------------

void write_divides_geojson(const std::string& path, const std::vector<Polyline>& lines);
std::vector<Polyline> read_polylines_geojson(const std::string& path);
void write_distance_json(const std::string& path, const DivideDistance& d);

}  // namespace glamap::divides
