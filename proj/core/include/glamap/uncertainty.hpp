#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glamap/grid.hpp"
#include "glamap/probability.hpp"

namespace glamap::uq {

/// Per-pixel confidence in [0,1], co-registered with its ProbabilityRaster.
struct ConfidenceRaster {
    Grid<double> values;
    bool calibrated = false;

    double mean() const;
};

/// Shannon-entropy confidence of one probability vector:
/// 1 + sum_c p_c log_C p_c (0 log 0 := 0).
double confidence_value(const double* p, int num_classes);

/// Per-pixel confidence; errors if any pixel is unnormalized beyond 1e-6.
ConfidenceRaster confidence(const ProbabilityRaster& probs);

/// Kernel-ridge regression R: [0,1] -> [0,1] fitted on binned
/// (mean confidence, accuracy) pairs from a validation set.
class Calibrator {
public:
    double apply(double conf) const;
    ConfidenceRaster apply(const ConfidenceRaster& raw) const;

    void save(const std::string& path) const;
    static Calibrator load(const std::string& path);

    int bin_count() const { return static_cast<int>(bin_conf_.size()); }
    double bandwidth() const { return bandwidth_; }
    double ridge() const { return ridge_; }

    friend Calibrator fit_calibrator(const std::vector<double>&, const std::vector<uint8_t>&,
                                     int, double, double, bool);

private:
    std::vector<double> bin_conf_, bin_acc_, alphas_;
    double bandwidth_ = 0.1;
    double ridge_ = 1e-3;
    double intercept_ = 0.0;
    bool isotonic_ = false;
    std::vector<double> iso_x_, iso_y_;  // monotone projection lookup
};

/// Bins = equally spaced confidence bins over [0,1]; needs >= 2 occupied
/// bins. `isotonic` applies a post-hoc monotone projection of the fit.
Calibrator fit_calibrator(const std::vector<double>& conf,
                          const std::vector<uint8_t>& correct, int bins = 100,
                          double bandwidth = 0.1, double ridge = 1e-3,
                          bool isotonic = false);

/// Expected calibration error over occupied equally spaced bins.
double ece(const std::vector<double>& conf, const std::vector<uint8_t>& correct,
           int bins = 100);

struct ReliabilityRow {
    double bin_center;
    double mean_conf;
    double accuracy;
    double fraction;
};
std::vector<ReliabilityRow> reliability_data(const std::vector<double>& conf,
                                             const std::vector<uint8_t>& correct, int bins);
void write_reliability_csv(const std::string& path, const std::vector<ReliabilityRow>& rows);
void write_reliability_png(const std::string& path, const std::vector<ReliabilityRow>& rows);

double pearson(const std::vector<double>& a, const std::vector<double>& b);

struct CorrelationResult {
    double r;
    double lo;  // 2.5th bootstrap percentile
    double hi;  // 97.5th bootstrap percentile
};
/// Pearson r with a seeded bootstrap percentile interval.
CorrelationResult compare_confidences(const std::vector<double>& a,
                                      const std::vector<double>& b, int n_boot,
                                      uint64_t seed);

}  // namespace glamap::uq
