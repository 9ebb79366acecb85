#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "glamap/dataset.hpp"
#include "glamap/model.hpp"
#include "glamap/nn/autodiff.hpp"

namespace glamap::train {

struct AugmentConfig {
    bool flips = true;
    bool rotations = true;
    bool crop_rescale = true;
    bool contrast = true;
    bool noise = true;
    bool occlusion = true;
    double crop_min_frac = 0.75;
    double contrast_range = 0.2;
    double noise_sigma = 0.02;
    double occlusion_max_frac = 0.3;

    static AugmentConfig all_off() {
        AugmentConfig c;
        c.flips = c.rotations = c.crop_rescale = c.contrast = c.noise = c.occlusion = false;
        return c;
    }
};

struct TrainConfig {
    double lr_init = 5e-4;
    std::vector<int> cycles = {10, 20, 40, 80};
    double focal_gamma = 2.0;
    double label_smoothing = 0.1;
    double finetune_lr = 5e-5;
    int batch_size = 8;
    uint64_t seed = 0;
    AugmentConfig augment;
    /// Probability of substituting UNKNOWN for the true region during
    /// region-encoded training.
    double unknown_region_prob = 0.1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
    int total_epochs() const;
};

// -- losses and schedule ----------------------------------------------------------

/// Mean over pixels of -sum_c y~_c (1-p_c)^gamma log p_c with smoothed
/// targets y~ = y(1-eps) + eps/C; probabilities floored at 1e-12.
double focal_loss(const nn::Tensor& probs, const nn::Tensor& label_onehot, double gamma,
                  double smoothing);
nn::Var focal_loss_var(const nn::Var& probs, const nn::Tensor& label_onehot, double gamma,
                       double smoothing);

/// peak * 0.5 * (1 + cos(pi * t / T)) — the within-cycle decay curve.
double cosine_lr(double peak, double local_t, double cycle_len);
/// Cosine decay with warm restarts over config.cycles; errors past the budget.
double lr_schedule(int epoch, const TrainConfig& config);

// -- augmentations ----------------------------------------------------------------

data::Sample flip_horizontal(const data::Sample& s);
data::Sample flip_vertical(const data::Sample& s);
data::Sample rotate90(const data::Sample& s, int quarter_turns);
/// Crop [r0,r0+crop)x[c0,c0+crop) and rescale back to the original patch size
/// (bilinear features, nearest labels).
data::Sample crop_and_rescale(const data::Sample& s, int r0, int c0, int crop);

data::Sample augment(const data::Sample& s, const AugmentConfig& cfg, Rng& rng);

// -- optimizer --------------------------------------------------------------------

class AdamOptimizer {
public:
    AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    /// One update from the gradient accumulated on every model parameter.
    void step(model::ModelState& state, double lr);
    /// Generic slot-keyed update (used by the inference-time bias optimizer).
    void step_values(const std::string& key, nn::Tensor& value, const nn::Tensor& grad,
                     double lr);

private:
    struct Slot {
        nn::Tensor m, v;
        int64_t t = 0;
    };
    double beta1_, beta2_, eps_;
    std::map<std::string, Slot> slots_;
};

// -- training loop ----------------------------------------------------------------

enum class Strategy { global, regional, finetune };
std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& s);

struct StrategySpec {
    Strategy kind = Strategy::global;
    std::vector<std::string> regions;  // region(-cluster) filter
};

struct EpochStats {
    int epoch;
    double lr;
    double train_loss;
    double val_iou;
};

struct TrainResult {
    model::ModelState best_state;
    std::vector<EpochStats> history;
    double best_val_iou = 0.0;
    int best_epoch = -1;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Adam + cosine warm restarts + per-epoch validation checkpointing. Returns
/// the state with the best validation glacier IoU. Finetuning runs only the
/// last cycle with finetune_lr as its peak.
TrainResult train(const model::ModelState& initial, const std::vector<data::TileDesc>& tiles,
                  const StrategySpec& strategy, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Same loop over already-loaded tiles (tests, synthetic pipelines).
TrainResult train_on_tiles(const model::ModelState& initial,
                           const std::vector<data::Tile>& tiles, const StrategySpec& strategy,
                           const TrainConfig& config, const EpochCallback& on_epoch = {});

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace glamap::train
