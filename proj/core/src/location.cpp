#include "glamap/location.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "glamap/training.hpp"

namespace glamap::loc {

using nn::Tensor;
using nn::Var;
namespace op = nn::op;

void RegionVector::validate() const {
    if (weights.size() != data::kNumRegions)
        throw std::invalid_argument("RegionVector: expected 12 weights");
    double sum = 0;
    for (double w : weights) {
        if (w < 0) throw std::invalid_argument("RegionVector: negative weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("RegionVector: weights must sum to 1");
}

int RegionVector::argmax() const {
    int best = 0;
    for (int i = 1; i < static_cast<int>(weights.size()); ++i)
        if (weights[i] > weights[best]) best = i;
    return best;
}

void BiasOptConfig::validate() const {
    if (lr <= 0) throw std::invalid_argument("BiasOptConfig: lr must be > 0");
    if (max_epochs < 1) throw std::invalid_argument("BiasOptConfig: max_epochs must be >= 1");
    if (patience < 1) throw std::invalid_argument("BiasOptConfig: patience must be >= 1");
}

RegionVector encode_region(const data::RegionCode& code) {
    data::region_by_index(code.index);  // validates
    RegionVector v;
    v.weights.assign(data::kNumRegions, 0.0);
    v.weights[code.index] = 1.0;
    return v;
}

RegionVector encode_region_training(const data::RegionCode& code, double unknown_prob,
                                    Rng& rng) {
    if (rng.bernoulli(unknown_prob))
        return encode_region(data::region_by_index(data::kUnknownRegion));
    return encode_region(code);
}

CoordEncoding encode_coords(double lat_deg, double lon_deg) {
    if (lat_deg < -90.0 || lat_deg > 90.0)
        throw std::invalid_argument("encode_coords: latitude outside [-90, 90]");
    if (lon_deg < -180.0 || lon_deg > 180.0)
        throw std::invalid_argument("encode_coords: longitude outside [-180, 180]");
    const double lat = lat_deg * M_PI / 180.0;
    const double lon = lon_deg * M_PI / 180.0;
    return CoordEncoding{{std::sin(lat), std::cos(lat), std::sin(lon), std::cos(lon)}};
}

std::vector<double> location_vector(const model::ModelConfig& cfg,
                                    const data::RegionCode& region, double lat, double lon,
                                    double unknown_prob, Rng* rng) {
    switch (cfg.location_mode) {
        case model::LocationMode::none: return {};
        case model::LocationMode::region: {
            RegionVector v = (rng && unknown_prob > 0)
                                 ? encode_region_training(region, unknown_prob, *rng)
                                 : encode_region(region);
            return v.weights;
        }
        case model::LocationMode::coord: {
            CoordEncoding e = encode_coords(lat, lon);
            return {e.values.begin(), e.values.end()};
        }
    }
    return {};
}

double entropy_objective(const ProbabilityRaster& probs) {
    const int c = probs.num_classes();
    const double inv_log_c = 1.0 / std::log(static_cast<double>(c));
    const int64_t hw = static_cast<int64_t>(probs.rows()) * probs.cols();
    double total = 0.0;
    for (int64_t px = 0; px < hw; ++px)
        for (int ci = 0; ci < c; ++ci) {
            const double p = probs.probs[ci * hw + px];
            if (p > 0) total -= p * std::log(p) * inv_log_c;
        }
    return total;
}

BiasOptResult bias_optimize(model::ModelState& state,
                            const std::vector<data::Sample>& scene_samples,
                            const BiasOptConfig& config) {
    config.validate();
    if (state.config.location_mode != model::LocationMode::region)
        throw std::invalid_argument("bias_optimize: model lacks region input");
    if (scene_samples.empty())
        throw std::invalid_argument("bias_optimize: no scene samples");

    const int c = state.config.num_classes;
    const double inv_log_c = 1.0 / std::log(static_cast<double>(c));

    // Raw logits start uniform: a soft mixture of every region's bias.
    Var r = Var::leaf(Tensor({data::kNumRegions}), true);
    train::AdamOptimizer adam;

    state.set_requires_grad(false);  // model weights are frozen here

    BiasOptResult result;
    double best_obj = std::numeric_limits<double>::infinity();
    Tensor best_r = r.val().clone();
    double prev_obj = std::numeric_limits<double>::quiet_NaN();
    int calm_streak = 0;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        double epoch_obj = 0.0;
        for (const auto& sample : scene_samples) {
            r.zero_grad();
            Var region = op::softmax_lastdim(r);
            Var probs = model::forward_probs_var(state, sample, region, nullptr);
            Var log_p = op::log(op::clamp_min(probs, 1e-12));
            Var objective =
                op::mul_scalar(op::sum_all(op::mul(probs, log_p)), -inv_log_c);
            nn::backward(objective);
            epoch_obj += objective.val()[0];
            adam.step_values("region_logits", r.mutable_val(), r.grad(), config.lr);
        }
        result.objective_history.push_back(epoch_obj);
        result.epochs_run = epoch + 1;

        if (epoch_obj < best_obj) {
            best_obj = epoch_obj;
            best_r = r.val().clone();
        } else if (epoch_obj > best_obj * (1.0 + config.violation_tol) + 1e-12) {
            break;  // objective rose beyond tolerance; keep the best point
        }
        if (!std::isnan(prev_obj)) {
            const double rel =
                std::abs(epoch_obj - prev_obj) / std::max(std::abs(prev_obj), 1e-12);
            calm_streak = rel < config.convergence_tol ? calm_streak + 1 : 0;
            if (calm_streak >= config.patience) {
                result.converged = true;
                break;
            }
        }
        prev_obj = epoch_obj;
    }

    state.set_requires_grad(true);

    // softmax of the best logits
    double m = best_r.max();
    double z = 0;
    RegionVector v;
    v.weights.assign(data::kNumRegions, 0.0);
    for (int i = 0; i < data::kNumRegions; ++i) {
        v.weights[i] = std::exp(best_r[i] - m);
        z += v.weights[i];
    }
    for (auto& w : v.weights) w /= z;
    v.validate();
    result.region_vector = v;
    return result;
}

}  // namespace glamap::loc
