#include "glamap/iou_estimate.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "glamap/uncertainty.hpp"

namespace glamap::iou {

double ConfusionCounts::accuracy() const {
    const int64_t n = total();
    return n ? static_cast<double>(tp + tn) / static_cast<double>(n) : 0.0;
}

double iou_from_counts(const ConfusionCounts& c) {
    if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0)
        throw std::invalid_argument("iou_from_counts: negative counts");
    const int64_t uni = c.tp + c.fp + c.fn;
    if (uni == 0) throw std::invalid_argument("iou_from_counts: empty union");
    return static_cast<double>(c.tp) / static_cast<double>(uni);
}

double estimate_iou(double mean_conf, int64_t n_p, int64_t n_n, int num_classes,
                    double beta) {
    if (mean_conf < 0.0 || mean_conf > 1.0)
        throw std::invalid_argument("estimate_iou: mean confidence outside [0,1]");
    if (n_p < 0 || n_n < 0) throw std::invalid_argument("estimate_iou: negative counts");
    if (n_p + n_n == 0) throw std::invalid_argument("estimate_iou: n_p = n_n = 0");
    if (num_classes < 2) throw std::invalid_argument("estimate_iou: need >= 2 classes");
    if (beta < 0) throw std::invalid_argument("estimate_iou: beta must be >= 0");

    const double a = std::max(mean_conf, 1.0 / num_classes);
    if (a >= 1.0) return 1.0;
    const double fn_approx = std::pow(1.0 - a, beta) * static_cast<double>(n_n);
    const double est =
        1.0 - (1.0 - a) * static_cast<double>(n_p + n_n) / (static_cast<double>(n_p) + fn_approx);
    if (est < 0.0)
        std::cerr << "estimate_iou: negative estimate " << est
                  << " (very low confidence); reporting as-is\n";
    return est;
}

EstimatorEval evaluate_estimator(const std::vector<std::pair<double, double>>& pairs,
                                 int n_boot, uint64_t seed) {
    if (pairs.size() < 3)
        throw std::invalid_argument("evaluate_estimator: need at least 3 pairs");
    std::vector<double> est, act;
    est.reserve(pairs.size());
    act.reserve(pairs.size());
    double se = 0, bias = 0, mean_act = 0;
    for (const auto& [e, a] : pairs) {
        est.push_back(e);
        act.push_back(a);
        se += (e - a) * (e - a);
        bias += e - a;
        mean_act += a;
    }
    const double n = static_cast<double>(pairs.size());
    mean_act /= n;
    double ss_tot = 0;
    for (double a : act) ss_tot += (a - mean_act) * (a - mean_act);
    if (ss_tot == 0.0)
        throw std::invalid_argument("evaluate_estimator: constant actual values, r2 undefined");

    EstimatorEval out;
    out.rmse = std::sqrt(se / n);
    out.r2 = 1.0 - se / ss_tot;
    out.mean_bias = bias / n;
    const uq::CorrelationResult corr = uq::compare_confidences(est, act, n_boot, seed);
    out.pearson_r = corr.r;
    out.pearson_lo = corr.lo;
    out.pearson_hi = corr.hi;
    return out;
}

}  // namespace glamap::iou
