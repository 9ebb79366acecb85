#pragma once

#include <cstdint>
#include <vector>

namespace glamap::iou {

struct ConfusionCounts {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;

    int64_t predicted_positives() const { return tp + fp; }
    int64_t predicted_negatives() const { return tn + fn; }
    int64_t total() const { return tp + fp + fn + tn; }
    double accuracy() const;
};

/// Standard intersection-over-union tp/(tp+fp+fn); errors on an empty union.
double iou_from_counts(const ConfusionCounts& c);

/// Reference-free IoU from mean calibrated confidence:
///   IoU ~= 1 - (1-A) * (n_p+n_n) / (n_p + (1-A)^beta * n_n),  A = max(conf, 1/C).
/// beta=1 is the parameter-free relation; the exponent hook makes the FN
/// approximation flexible. Estimates can go negative at very low confidence and are
/// returned as-is (with a warning on stderr), not clamped.
double estimate_iou(double mean_conf, int64_t n_p, int64_t n_n, int num_classes,
                    double beta = 1.0);

struct EstimatorEval {
    double rmse;
    double r2;
    double pearson_r;
    double pearson_lo;
    double pearson_hi;
    double mean_bias;  // mean(estimated - actual)
};

/// Summary statistics of (estimated, actual) IoU pairs with a seeded
/// bootstrap interval on the Pearson correlation.
EstimatorEval evaluate_estimator(const std::vector<std::pair<double, double>>& pairs,
                                 int n_boot, uint64_t seed);

}  // namespace glamap::iou
