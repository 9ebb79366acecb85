#include "glamap/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "glamap/inference.hpp"
#include "glamap/io/csv.hpp"
#include "glamap/iou_estimate.hpp"
#include "glamap/location.hpp"

namespace glamap::train {

using data::Sample;
using nn::Tensor;
using nn::Var;
namespace op = nn::op;

void TrainConfig::validate() const {
    if (lr_init <= 0) throw std::invalid_argument("TrainConfig: lr_init must be > 0");
    if (cycles.empty()) throw std::invalid_argument("TrainConfig: cycles must be nonempty");
    for (int c : cycles)
        if (c <= 0) throw std::invalid_argument("TrainConfig: cycle lengths must be positive");
    if (label_smoothing < 0 || label_smoothing >= 1)
        throw std::invalid_argument("TrainConfig: label_smoothing must be in [0,1)");
    if (focal_gamma < 0) throw std::invalid_argument("TrainConfig: focal_gamma must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
}

int TrainConfig::total_epochs() const {
    int total = 0;
    for (int c : cycles) total += c;
    return total;
}

// ---------------------------------------------------------------------------
// losses and schedule
// ---------------------------------------------------------------------------

Var focal_loss_var(const Var& probs, const Tensor& label_onehot, double gamma,
                   double smoothing) {
    if (!probs.val().same_shape(label_onehot))
        throw std::invalid_argument("focal_loss: probs/label shape mismatch");
    if (gamma < 0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
    const int c = label_onehot.dim(0);
    const int64_t hw = label_onehot.numel() / c;

    Tensor smoothed(label_onehot.shape());
    for (int64_t i = 0; i < smoothed.numel(); ++i)
        smoothed[i] = label_onehot[i] * (1.0 - smoothing) + smoothing / c;

    Var log_p = op::log(op::clamp_min(probs, 1e-12));
    Var focal_weight = op::pow_const(op::add_scalar(op::neg(probs), 1.0), gamma);
    Var weighted = op::mul(Var::leaf(smoothed), op::mul(focal_weight, log_p));
    return op::mul_scalar(op::sum_all(weighted), -1.0 / static_cast<double>(hw));
}

double focal_loss(const Tensor& probs, const Tensor& label_onehot, double gamma,
                  double smoothing) {
    return focal_loss_var(Var::leaf(probs), label_onehot, gamma, smoothing).val()[0];
}

double cosine_lr(double peak, double local_t, double cycle_len) {
    return peak * 0.5 * (1.0 + std::cos(M_PI * local_t / cycle_len));
}

double lr_schedule(int epoch, const TrainConfig& config) {
    if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
    int start = 0;
    for (int len : config.cycles) {
        if (epoch < start + len)
            return cosine_lr(config.lr_init, epoch - start, len);
        start += len;
    }
    throw std::invalid_argument("lr_schedule: epoch " + std::to_string(epoch) +
                                " beyond the cycle budget of " + std::to_string(start));
}

// ---------------------------------------------------------------------------
// augmentations
// ---------------------------------------------------------------------------

namespace {

template <typename MapFn>
Tensor remap(const Tensor& in, MapFn&& src_of, int out_p) {
    const int b = in.dim(0);
    Tensor out({b, out_p, out_p});
    for (int bi = 0; bi < b; ++bi)
        for (int r = 0; r < out_p; ++r)
            for (int c = 0; c < out_p; ++c) {
                auto [sr, sc] = src_of(r, c);
                out.at3(bi, r, c) = in.at3(bi, sr, sc);
            }
    return out;
}

template <typename MapFn>
Sample remap_sample(const Sample& s, MapFn&& src_of, int out_p) {
    Sample out;
    out.location = s.location;
    for (const auto& [g, t] : s.features) out.features[g] = remap(t, src_of, out_p);
    out.label_onehot = remap(s.label_onehot, src_of, out_p);
    return out;
}

}  // namespace

Sample flip_horizontal(const Sample& s) {
    const int p = s.patch();
    return remap_sample(s, [p](int r, int c) { return std::pair{r, p - 1 - c}; }, p);
}

Sample flip_vertical(const Sample& s) {
    const int p = s.patch();
    return remap_sample(s, [p](int r, int c) { return std::pair{p - 1 - r, c}; }, p);
}

Sample rotate90(const Sample& s, int quarter_turns) {
    Sample out = s;
    const int p = s.patch();
    int k = ((quarter_turns % 4) + 4) % 4;
    for (int i = 0; i < k; ++i)
        out = remap_sample(out, [p](int r, int c) { return std::pair{c, p - 1 - r}; }, p);
    return out;
}

Sample crop_and_rescale(const Sample& s, int r0, int c0, int crop) {
    const int p = s.patch();
    if (crop < 1 || r0 < 0 || c0 < 0 || r0 + crop > p || c0 + crop > p)
        throw std::invalid_argument("crop_and_rescale: crop window out of bounds");
    Sample out;
    out.location = s.location;
    const double scale = static_cast<double>(crop) / p;
    // features: bilinear
    for (const auto& [g, t] : s.features) {
        const int b = t.dim(0);
        Tensor o({b, p, p});
        for (int r = 0; r < p; ++r) {
            double sr = r0 + (r + 0.5) * scale - 0.5;
            sr = std::clamp(sr, static_cast<double>(r0), static_cast<double>(r0 + crop - 1));
            const int r1 = static_cast<int>(std::floor(sr));
            const int r2 = std::min(r1 + 1, r0 + crop - 1);
            const double fr = sr - r1;
            for (int c = 0; c < p; ++c) {
                double sc = c0 + (c + 0.5) * scale - 0.5;
                sc = std::clamp(sc, static_cast<double>(c0),
                                static_cast<double>(c0 + crop - 1));
                const int c1 = static_cast<int>(std::floor(sc));
                const int c2 = std::min(c1 + 1, c0 + crop - 1);
                const double fc = sc - c1;
                for (int bi = 0; bi < b; ++bi)
                    o.at3(bi, r, c) =
                        (1 - fr) * ((1 - fc) * t.at3(bi, r1, c1) + fc * t.at3(bi, r1, c2)) +
                        fr * ((1 - fc) * t.at3(bi, r2, c1) + fc * t.at3(bi, r2, c2));
            }
        }
        out.features[g] = std::move(o);
    }
    // label: nearest neighbour keeps one-hot validity
    const int cl = s.label_onehot.dim(0);
    Tensor lo({cl, p, p});
    for (int r = 0; r < p; ++r) {
        const int sr = r0 + std::min(crop - 1, static_cast<int>((r + 0.5) * scale));
        for (int c = 0; c < p; ++c) {
            const int sc = c0 + std::min(crop - 1, static_cast<int>((c + 0.5) * scale));
            for (int ci = 0; ci < cl; ++ci) lo.at3(ci, r, c) = s.label_onehot.at3(ci, sr, sc);
        }
    }
    out.label_onehot = std::move(lo);
    return out;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
    Sample out = s;
    const int p = s.patch();

    if (cfg.flips) {
        if (rng.bernoulli(0.5)) out = flip_horizontal(out);
        if (rng.bernoulli(0.5)) out = flip_vertical(out);
    }
    if (cfg.rotations) {
        const int k = rng.uniform_int(0, 3);
        if (k) out = rotate90(out, k);
    }
    if (cfg.crop_rescale && rng.bernoulli(0.5)) {
        const double frac = rng.uniform(cfg.crop_min_frac, 1.0);
        const int crop = std::clamp(static_cast<int>(std::lround(p * frac)), 8, p);
        if (crop < p) {
            const int r0 = rng.uniform_int(0, p - crop);
            const int c0 = rng.uniform_int(0, p - crop);
            out = crop_and_rescale(out, r0, c0, crop);
        }
    }
    if (cfg.contrast) {
        for (auto& [g, t] : out.features) {
            if (!rng.bernoulli(0.5)) continue;
            const double f = 1.0 + rng.uniform(-cfg.contrast_range, cfg.contrast_range);
            Tensor o = t.clone();
            const int b = o.dim(0);
            const int64_t hw = static_cast<int64_t>(p) * p;
            for (int bi = 0; bi < b; ++bi) {
                double mean = 0;
                for (int64_t i = 0; i < hw; ++i) mean += o[bi * hw + i];
                mean /= static_cast<double>(hw);
                for (int64_t i = 0; i < hw; ++i)
                    o[bi * hw + i] = mean + f * (o[bi * hw + i] - mean);
            }
            t = o;
        }
    }
    if (cfg.noise) {
        for (auto& [g, t] : out.features) {
            Tensor o = t.clone();
            const int b = o.dim(0);
            const int64_t hw = static_cast<int64_t>(p) * p;
            for (int bi = 0; bi < b; ++bi) {
                const double channel_off = rng.normal(0.0, cfg.noise_sigma);
                for (int64_t i = 0; i < hw; ++i)
                    o[bi * hw + i] += channel_off + rng.normal(0.0, cfg.noise_sigma);
            }
            t = o;
        }
    }
    if (cfg.occlusion && rng.bernoulli(0.5) && !out.features.empty()) {
        const int gi = rng.uniform_int(0, static_cast<int>(out.features.size()) - 1);
        auto it = out.features.begin();
        std::advance(it, gi);
        const int max_side = std::max(1, static_cast<int>(p * cfg.occlusion_max_frac));
        const int hh = rng.uniform_int(1, max_side);
        const int ww = rng.uniform_int(1, max_side);
        const int r0 = rng.uniform_int(0, p - hh);
        const int c0 = rng.uniform_int(0, p - ww);
        Tensor o = it->second.clone();
        for (int bi = 0; bi < o.dim(0); ++bi)
            for (int r = r0; r < r0 + hh; ++r)
                for (int c = c0; c < c0 + ww; ++c) o.at3(bi, r, c) = 0.0;
        it->second = o;
    }
    return out;
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step_values(const std::string& key, Tensor& value, const Tensor& grad,
                                double lr) {
    Slot& s = slots_[key];
    if (!s.m.defined()) {
        s.m = Tensor(value.shape());
        s.v = Tensor(value.shape());
    }
    ++s.t;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
    for (int64_t i = 0; i < value.numel(); ++i) {
        const double g = grad[i];
        s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
        s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
}

void AdamOptimizer::step(model::ModelState& state, double lr) {
    for (auto& [name, var] : state.params())
        step_values(name, var.mutable_val(), var.grad(), lr);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::global: return "global";
        case Strategy::regional: return "regional";
        case Strategy::finetune: return "finetune";
    }
    return "global";
}

Strategy strategy_from_name(const std::string& s) {
    if (s == "global") return Strategy::global;
    if (s == "regional") return Strategy::regional;
    if (s == "finetune") return Strategy::finetune;
    throw std::invalid_argument("unknown strategy '" + s + "'");
}

namespace {

bool tile_has_groups(const data::Tile& t, const std::vector<std::string>& groups) {
    for (const auto& g : groups)
        if (!t.has_group(g)) return false;
    return true;
}

double validation_iou(model::ModelState& state, const std::vector<data::Tile>& val_tiles) {
    iou::ConfusionCounts counts;
    infer::PredictOptions opts;
    opts.window = state.config.patch_size_px;
    opts.overlap = 0;
    opts.mc_passes = 0;
    for (const auto& tile : val_tiles) {
        infer::SceneResult res = infer::predict_scene(state, tile, opts);
        for (int r = 0; r < tile.rows(); ++r)
            for (int c = 0; c < tile.cols(); ++c) {
                const bool pred = res.mask(r, c) == 1;
                const bool ref = tile.label(r, c) == 1;
                if (pred && ref) ++counts.tp;
                else if (pred && !ref) ++counts.fp;
                else if (!pred && ref) ++counts.fn;
                else ++counts.tn;
            }
    }
    if (counts.tp + counts.fp + counts.fn == 0) return 1.0;  // no glacier anywhere
    return iou::iou_from_counts(counts);
}

}  // namespace

TrainResult train_on_tiles(const model::ModelState& initial,
                           const std::vector<data::Tile>& tiles, const StrategySpec& strategy,
                           const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    const model::ModelConfig& mcfg = initial.config;

    if (strategy.kind != Strategy::global && strategy.regions.empty())
        throw std::invalid_argument("train: regional/finetune strategies need a region filter");

    auto region_selected = [&](const data::RegionCode& rc) {
        if (strategy.kind == Strategy::global) return true;
        return std::find(strategy.regions.begin(), strategy.regions.end(), rc.name) !=
               strategy.regions.end();
    };

    std::vector<const data::Tile*> train_tiles, val_tiles;
    for (const auto& t : tiles) {
        if (!region_selected(t.region) || !tile_has_groups(t, mcfg.groups)) continue;
        if (t.split == data::Split::train) train_tiles.push_back(&t);
        if (t.split == data::Split::val) val_tiles.push_back(&t);
    }
    if (train_tiles.empty()) throw std::invalid_argument("train: empty training split");
    if (val_tiles.empty()) throw std::invalid_argument("train: empty validation split");

    model::ModelState state = initial.clone();
    state.training_flag = true;

    // finetune reuses only the last cycle, peaked at the decreased rate
    const bool finetune = strategy.kind == Strategy::finetune;
    const int total_epochs = finetune ? config.cycles.back() : config.total_epochs();

    AdamOptimizer adam(config.adam_beta1, config.adam_beta2, config.adam_eps);
    Rng rng(config.seed);

    TrainResult result;
    result.best_val_iou = -1.0;

    std::vector<int> order(train_tiles.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < total_epochs; ++epoch) {
        const double lr = finetune ? cosine_lr(config.finetune_lr, epoch, config.cycles.back())
                                   : lr_schedule(epoch, config);

        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_int(0, i)]);

        double epoch_loss = 0.0;
        int n_samples = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += config.batch_size) {
            const int bn = static_cast<int>(
                std::min<size_t>(config.batch_size, order.size() - b0));
            state.zero_grads();
            for (int k = 0; k < bn; ++k) {
                const data::Tile& tile = *train_tiles[order[b0 + k]];
                Sample sample =
                    data::extract_patch(tile, rng, mcfg.groups, mcfg.patch_size_px);
                sample = augment(sample, config.augment, rng);
                sample.location =
                    loc::location_vector(mcfg, tile.region, tile.lat, tile.lon,
                                         config.unknown_region_prob, &rng);
                Var probs = model::forward_probs_var(state, sample, std::nullopt, &rng);
                Var loss = focal_loss_var(probs, sample.label_onehot, config.focal_gamma,
                                          config.label_smoothing);
                nn::backward(loss, 1.0 / bn);
                epoch_loss += loss.val()[0];
                ++n_samples;
            }
            adam.step(state, lr);
        }

        state.training_flag = false;
        std::vector<data::Tile> vt;
        vt.reserve(val_tiles.size());
        for (const auto* t : val_tiles) vt.push_back(*t);
        const double val_iou = validation_iou(state, vt);
        state.training_flag = true;

        result.history.push_back({epoch, lr, epoch_loss / std::max(1, n_samples), val_iou});
        if (on_epoch) on_epoch(result.history.back());
        if (val_iou > result.best_val_iou) {
            result.best_val_iou = val_iou;
            result.best_epoch = epoch;
            result.best_state = state.clone();
            result.best_state.training_flag = false;
        }
    }
    if (result.best_epoch < 0) {
        result.best_state = state.clone();
        result.best_state.training_flag = false;
    }
    return result;
}

TrainResult train(const model::ModelState& initial, const std::vector<data::TileDesc>& tiles,
                  const StrategySpec& strategy, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    std::vector<data::Tile> loaded;
    loaded.reserve(tiles.size());
    for (const auto& d : tiles) loaded.push_back(data::load_tile(d));
    return train_on_tiles(initial, loaded, strategy, config, on_epoch);
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    io::CsvWriter csv(path, {"epoch", "lr", "train_loss", "val_iou"});
    for (const auto& h : history)
        csv.row({std::to_string(h.epoch), io::CsvWriter::num(h.lr, 10),
                 io::CsvWriter::num(h.train_loss, 10), io::CsvWriter::num(h.val_iou, 10)});
}

}  // namespace glamap::train
