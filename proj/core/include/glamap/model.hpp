#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "glamap/dataset.hpp"
#include "glamap/nn/autodiff.hpp"
#include "glamap/probability.hpp"

namespace glamap::model {

enum class LocationMode { none, region, coord };
std::string location_mode_name(LocationMode m);
LocationMode location_mode_from_name(const std::string& s);

/// GlaViTU hyperparameters. All widths are config-driven: the defaults are
/// a workable full-scale choice and tests shrink everything to toy size.
struct ModelConfig {
    int patch_size_px = 384;
    int token_patch = 16;
    int embed_dim = 192;
    int depth = 4;
    int heads = 4;
    int base_channels = 32;
    int unet_depth = 4;
    double dropout_rate = 0.1;
    int num_classes = 2;
    std::vector<std::string> groups = {"optical", "dem"};
    LocationMode location_mode = LocationMode::none;
    /// U-Net input: transformer context concatenated with the fused features
    /// (true) or the context alone.
    bool unet_concat_fused = true;
    int loc_hidden = 32;
    uint64_t init_seed = 1;

    void validate() const;
    int group_band_count(const std::string& group) const;
    int location_dim() const;  // 0, 12 or 4
    /// The two PUP upsampling factors (their product is token_patch).
    std::pair<int, int> pup_factors() const;
};

/// Full learnable parameter set plus its config. Parameters are persistent
/// autodiff leaves so the same storage is observed by every forward graph.
class ModelState {
public:
    ModelConfig config;
    bool training_flag = false;

    static ModelState init(const ModelConfig& cfg);

    nn::Var& param(const std::string& name);
    const nn::Var& param(const std::string& name) const;
    bool has_param(const std::string& name) const { return params_.count(name) != 0; }
    const std::map<std::string, nn::Var>& params() const { return params_; }
    std::map<std::string, nn::Var>& params() { return params_; }
    int64_t num_parameters() const;

    void zero_grads();
    void set_requires_grad(bool rg);
    /// Deep copy (own parameter storage).
    ModelState clone() const;
    /// Bitwise parameter equality (used by the optimization-freeze contracts).
    bool equal_parameters(const ModelState& other) const;

private:
    std::map<std::string, nn::Var> params_;
    friend ModelState load_state(const std::string&);
};

// -- forward paths --------------------------------------------------------------
// All builders take the state non-const only because parameter Vars are graph
// leaves; parameter values are never modified. `dropout_rng` null disables
// dropout (deterministic evaluation path).

/// Per-source conv+SE branches merged by 1x1 conv; optional location bias.
nn::Var fusion_block(ModelState& state, const std::map<std::string, nn::Var>& features,
                     const std::optional<nn::Var>& location, Rng* dropout_rng = nullptr);

/// Patch-embedded transformer encoder with progressive-upsampling decoder;
/// output is co-registered with the input.
nn::Var transformer_subnet(ModelState& state, const nn::Var& fused,
                           Rng* dropout_rng = nullptr);

/// The layer stack + final norm on already position-embedded tokens.
/// Exposed for the attention permutation-equivariance property.
nn::Var encoder_tokens(ModelState& state, const nn::Var& tokens, Rng* dropout_rng = nullptr);

/// Residual U-Net over [context, fused]; returns (num_classes, H, W) logits.
nn::Var unet_subnet(ModelState& state, const nn::Var& context, const nn::Var& fused,
                    Rng* dropout_rng = nullptr);

/// Full differentiable path to per-pixel probabilities. `region_override`
/// replaces the sample's location vector (bias optimisation feeds the soft
/// region vector through here).
nn::Var forward_probs_var(ModelState& state, const data::Sample& sample,
                          const std::optional<nn::Var>& region_override = std::nullopt,
                          Rng* dropout_rng = nullptr);

/// Deterministic evaluation forward (dropout off, finiteness checked per
/// subnet).
ProbabilityRaster forward(ModelState& state, const data::Sample& sample);

/// Mean softmax over `n_passes` dropout-active forward passes.
ProbabilityRaster mc_forward(ModelState& state, const data::Sample& sample, int n_passes,
                             uint64_t seed);

// -- checkpointing ----------------------------------------------------------------
// Single archive: version-tagged header, JSON config + tensor index, then raw
// row-major float64 payloads.

void save_state(const ModelState& state, const std::string& path);
ModelState load_state(const std::string& path);

}  // namespace glamap::model
