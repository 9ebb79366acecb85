#include "glamap/model.hpp"

#include <cmath>
#include <stdexcept>

namespace glamap::model {

using nn::Shape;
using nn::Tensor;
using nn::Var;
namespace op = nn::op;

std::string location_mode_name(LocationMode m) {
    switch (m) {
        case LocationMode::none: return "none";
        case LocationMode::region: return "region";
        case LocationMode::coord: return "coord";
    }
    return "none";
}

LocationMode location_mode_from_name(const std::string& s) {
    if (s == "none") return LocationMode::none;
    if (s == "region") return LocationMode::region;
    if (s == "coord") return LocationMode::coord;
    throw std::invalid_argument("unknown location mode '" + s + "'");
}

void ModelConfig::validate() const {
    if (patch_size_px <= 0) throw std::invalid_argument("ModelConfig: patch_size_px <= 0");
    if (token_patch <= 0 || patch_size_px % token_patch != 0)
        throw std::invalid_argument("ModelConfig: patch_size_px must be divisible by token_patch");
    if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0)
        throw std::invalid_argument("ModelConfig: embed_dim must be divisible by heads");
    if (depth < 0) throw std::invalid_argument("ModelConfig: depth < 0");
    if (base_channels <= 0) throw std::invalid_argument("ModelConfig: base_channels <= 0");
    if (unet_depth < 1) throw std::invalid_argument("ModelConfig: unet_depth < 1");
    if (patch_size_px % (1 << unet_depth) != 0)
        throw std::invalid_argument("ModelConfig: patch size not divisible by 2^unet_depth");
    if (dropout_rate < 0 || dropout_rate >= 1)
        throw std::invalid_argument("ModelConfig: dropout_rate must be in [0,1)");
    if (num_classes < 2) throw std::invalid_argument("ModelConfig: num_classes < 2");
    if (groups.empty()) throw std::invalid_argument("ModelConfig: no feature groups");
    for (const auto& g : groups) data::feature_group(g);
}

int ModelConfig::group_band_count(const std::string& group) const {
    const auto& info = data::feature_group(group);
    if (group == "sar") return 2;  // co-pol sigma0 + coherence (the InSAR track)
    return info.min_bands;
}

int ModelConfig::location_dim() const {
    switch (location_mode) {
        case LocationMode::none: return 0;
        case LocationMode::region: return data::kNumRegions;
        case LocationMode::coord: return 4;
    }
    return 0;
}

std::pair<int, int> ModelConfig::pup_factors() const {
    // split token_patch into two near-equal factors, smaller first
    int f1 = 1;
    for (int d = 2; d * d <= token_patch; ++d)
        if (token_patch % d == 0) f1 = d;
    for (int d = f1 + 1; d * d <= token_patch; ++d)
        if (token_patch % d == 0) f1 = d;
    return {f1, token_patch / f1};
}

// ---------------------------------------------------------------------------
// parameter construction
// ---------------------------------------------------------------------------

namespace {

Tensor scaled_normal(Shape shape, Rng& rng, double fan_in, double fan_out) {
    Tensor t(shape);
    const double std = std::sqrt(2.0 / (fan_in + fan_out));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * std;
    return t;
}

int se_hidden(int channels) { return std::max(2, channels / 4); }

}  // namespace

ModelState ModelState::init(const ModelConfig& cfg) {
    cfg.validate();
    ModelState st;
    st.config = cfg;
    Rng rng(cfg.init_seed);

    auto add = [&st](const std::string& name, Tensor t) {
        st.params_.emplace(name, Var::leaf(std::move(t), true));
    };
    auto add_conv = [&](const std::string& name, int out, int in, int k) {
        add(name + ".weight", scaled_normal({out, in, k, k}, rng,
                                            static_cast<double>(in) * k * k,
                                            static_cast<double>(out) * k * k));
        add(name + ".bias", Tensor({out}));
    };
    auto add_linear = [&](const std::string& name, int in, int out) {
        add(name + ".weight", scaled_normal({in, out}, rng, in, out));
        add(name + ".bias", Tensor({out}));
    };
    auto add_ln = [&](const std::string& name, int d) {
        add(name + ".gamma", Tensor({d}, 1.0));
        add(name + ".beta", Tensor({d}));
    };

    const int B = cfg.base_channels;

    // fusion branches (one per source) + SE + merge
    for (const auto& g : cfg.groups) {
        const int in = cfg.group_band_count(g);
        add_conv("fusion." + g + ".conv1", B, in, 3);
        add_conv("fusion." + g + ".conv2", B, B, 3);
        add_linear("fusion." + g + ".se.fc1", B, se_hidden(B));
        add_linear("fusion." + g + ".se.fc2", se_hidden(B), B);
    }
    add_conv("fusion.merge", B, B * static_cast<int>(cfg.groups.size()), 1);
    if (cfg.location_mode != LocationMode::none) {
        add_linear("fusion.loc.fc1", cfg.location_dim(), cfg.loc_hidden);
        add_linear("fusion.loc.fc2", cfg.loc_hidden, B);
    }

    // transformer encoder + PUP decoder
    const int tokens_per_side = cfg.patch_size_px / cfg.token_patch;
    const int n_tokens = tokens_per_side * tokens_per_side;
    add_linear("transformer.embed", B * cfg.token_patch * cfg.token_patch, cfg.embed_dim);
    {
        Tensor pos({n_tokens, cfg.embed_dim});
        for (int64_t i = 0; i < pos.numel(); ++i) pos[i] = rng.normal() * 0.02;
        add("transformer.pos_embed", std::move(pos));
    }
    for (int l = 0; l < cfg.depth; ++l) {
        const std::string p = "transformer.layer" + std::to_string(l);
        add_ln(p + ".ln1", cfg.embed_dim);
        add_linear(p + ".attn.q", cfg.embed_dim, cfg.embed_dim);
        add_linear(p + ".attn.k", cfg.embed_dim, cfg.embed_dim);
        add_linear(p + ".attn.v", cfg.embed_dim, cfg.embed_dim);
        add_linear(p + ".attn.proj", cfg.embed_dim, cfg.embed_dim);
        add_ln(p + ".ln2", cfg.embed_dim);
        add_linear(p + ".mlp.fc1", cfg.embed_dim, 4 * cfg.embed_dim);
        add_linear(p + ".mlp.fc2", 4 * cfg.embed_dim, cfg.embed_dim);
    }
    add_ln("transformer.ln_final", cfg.embed_dim);
    add_conv("transformer.pup1", 2 * B, cfg.embed_dim, 3);
    add_conv("transformer.pup2", B, 2 * B, 3);

    // residual U-Net
    const int unet_in = cfg.unet_concat_fused ? 2 * B : B;
    add_conv("unet.stem", B, unet_in, 3);
    int ch = B;
    for (int i = 0; i < cfg.unet_depth; ++i) {
        const std::string p = "unet.enc" + std::to_string(i);
        add_conv(p + ".conv1", ch, ch, 3);
        add_conv(p + ".conv2", ch, ch, 3);
        add_conv("unet.down" + std::to_string(i), ch * 2, ch, 3);
        ch *= 2;
    }
    add_conv("unet.bottleneck.conv1", ch, ch, 3);
    add_conv("unet.bottleneck.conv2", ch, ch, 3);
    for (int i = cfg.unet_depth - 1; i >= 0; --i) {
        const std::string p = "unet.dec" + std::to_string(i);
        add_conv(p + ".up", ch / 2, ch, 3);
        add_conv(p + ".fuse", ch / 2, ch, 3);  // after skip concat: ch/2 + ch/2 inputs
        ch /= 2;
    }
    add_conv("unet.head", cfg.num_classes, ch, 1);
    return st;
}

Var& ModelState::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("model: no parameter '" + name + "'");
    return it->second;
}

const Var& ModelState::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("model: no parameter '" + name + "'");
    return it->second;
}

int64_t ModelState::num_parameters() const {
    int64_t n = 0;
    for (const auto& [_, v] : params_) n += v.val().numel();
    return n;
}

void ModelState::zero_grads() {
    for (auto& [_, v] : params_) v.zero_grad();
}

void ModelState::set_requires_grad(bool rg) {
    for (auto& [_, v] : params_) v.set_requires_grad(rg);
}

ModelState ModelState::clone() const {
    ModelState st;
    st.config = config;
    st.training_flag = training_flag;
    for (const auto& [name, v] : params_)
        st.params_.emplace(name, Var::leaf(v.val().clone(), v.requires_grad()));
    return st;
}

bool ModelState::equal_parameters(const ModelState& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (const auto& [name, v] : params_) {
        auto it = other.params_.find(name);
        if (it == other.params_.end()) return false;
        const Tensor& a = v.val();
        const Tensor& b = it->second.val();
        if (!a.same_shape(b)) return false;
        for (int64_t i = 0; i < a.numel(); ++i)
            if (a[i] != b[i]) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// forward paths
// ---------------------------------------------------------------------------

namespace {

Var conv(ModelState& st, const std::string& name, const Var& x, int stride, int pad) {
    return op::conv2d(x, st.param(name + ".weight"), st.param(name + ".bias"), stride, pad);
}

Var dense(ModelState& st, const std::string& name, const Var& x) {
    return op::linear(x, st.param(name + ".weight"), st.param(name + ".bias"));
}

Var maybe_dropout(ModelState& st, const Var& x, Rng* rng) {
    if (!rng || st.config.dropout_rate <= 0.0) return x;
    return op::dropout(x, st.config.dropout_rate, *rng);
}

Var res_block(ModelState& st, const std::string& name, const Var& x) {
    Var h = op::gelu(conv(st, name + ".conv1", x, 1, 1));
    h = conv(st, name + ".conv2", h, 1, 1);
    return op::gelu(op::add(x, h));
}

void check_finite(const Var& v, const char* stage) {
    if (!v.val().all_finite())
        throw std::runtime_error(std::string(stage) + ": non-finite activations");
}

}  // namespace

Var fusion_block(ModelState& state, const std::map<std::string, nn::Var>& features,
                 const std::optional<nn::Var>& location, Rng* dropout_rng) {
    (void)dropout_rng;
    const ModelConfig& cfg = state.config;
    if (features.size() != cfg.groups.size())
        throw std::invalid_argument("fusion_block: feature groups do not match config");

    std::vector<Var> branches;
    int h = -1, w = -1;
    for (const auto& g : cfg.groups) {
        auto it = features.find(g);
        if (it == features.end())
            throw std::invalid_argument("fusion_block: group " + g + " missing");
        const Var& x = it->second;
        if (x.val().ndim() != 3 || x.val().dim(0) != cfg.group_band_count(g))
            throw std::invalid_argument("fusion_block: bad band count for group " + g);
        if (h < 0) {
            h = x.val().dim(1);
            w = x.val().dim(2);
        } else if (x.val().dim(1) != h || x.val().dim(2) != w) {
            throw std::invalid_argument("fusion_block: spatial size mismatch for group " + g);
        }
        Var b = op::gelu(conv(state, "fusion." + g + ".conv1", x, 1, 1));
        b = op::gelu(conv(state, "fusion." + g + ".conv2", b, 1, 1));
        // squeeze-and-excitation channel reweighting
        Var squeezed = op::reshape(op::global_avg_pool(b), {1, cfg.base_channels});
        Var gates = op::sigmoid(dense(state, "fusion." + g + ".se.fc2",
                                      op::gelu(dense(state, "fusion." + g + ".se.fc1", squeezed))));
        b = op::scale_channels(b, op::reshape(gates, {cfg.base_channels}));
        branches.push_back(b);
    }
    Var fused = conv(state, "fusion.merge", op::concat_channels(branches), 1, 0);

    if (cfg.location_mode != LocationMode::none) {
        if (!location)
            throw std::invalid_argument("fusion_block: location vector required by config");
        if (location->val().numel() != cfg.location_dim())
            throw std::invalid_argument("fusion_block: location vector has wrong length");
        Var loc = op::reshape(*location, {1, cfg.location_dim()});
        loc = dense(state, "fusion.loc.fc2", op::gelu(dense(state, "fusion.loc.fc1", loc)));
        fused = op::add_channel_bias(fused, op::reshape(loc, {cfg.base_channels}));
    }
    return fused;
}

Var encoder_tokens(ModelState& state, const Var& tokens, Rng* dropout_rng) {
    const ModelConfig& cfg = state.config;
    const int t = tokens.val().dim(0);
    const int dh = cfg.embed_dim / cfg.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Var x = tokens;
    for (int l = 0; l < cfg.depth; ++l) {
        const std::string p = "transformer.layer" + std::to_string(l);
        Var hn = op::layer_norm(x, state.param(p + ".ln1.gamma"), state.param(p + ".ln1.beta"));
        auto split_heads = [&](Var y) {
            return op::permute(op::reshape(y, {t, cfg.heads, dh}), {1, 0, 2});
        };
        Var q = split_heads(dense(state, p + ".attn.q", hn));
        Var k = split_heads(dense(state, p + ".attn.k", hn));
        Var v = split_heads(dense(state, p + ".attn.v", hn));
        Var scores = op::mul_scalar(op::bmm(q, op::permute(k, {0, 2, 1})), scale);
        Var attn = op::softmax_lastdim(scores);
        Var ctx = op::bmm(attn, v);  // (heads, T, dh)
        ctx = op::reshape(op::permute(ctx, {1, 0, 2}), {t, cfg.embed_dim});
        Var projected = maybe_dropout(state, dense(state, p + ".attn.proj", ctx), dropout_rng);
        x = op::add(x, projected);

        Var mn = op::layer_norm(x, state.param(p + ".ln2.gamma"), state.param(p + ".ln2.beta"));
        Var mlp = dense(state, p + ".mlp.fc2", op::gelu(dense(state, p + ".mlp.fc1", mn)));
        x = op::add(x, maybe_dropout(state, mlp, dropout_rng));
    }
    return op::layer_norm(x, state.param("transformer.ln_final.gamma"),
                          state.param("transformer.ln_final.beta"));
}

Var transformer_subnet(ModelState& state, const Var& fused, Rng* dropout_rng) {
    const ModelConfig& cfg = state.config;
    const int h = fused.val().dim(1), w = fused.val().dim(2);
    if (h % cfg.token_patch != 0 || w % cfg.token_patch != 0)
        throw std::invalid_argument("transformer_subnet: spatial size not divisible by token_patch");
    const int th = h / cfg.token_patch, tw = w / cfg.token_patch;
    const int t = th * tw;

    Var tokens = dense(state, "transformer.embed", op::patchify(fused, cfg.token_patch));
    const Var& pos = state.param("transformer.pos_embed");
    if (pos.val().dim(0) != t)
        throw std::invalid_argument(
            "transformer_subnet: input token count does not match the configured patch size");
    tokens = op::add(tokens, pos);

    Var encoded = encoder_tokens(state, tokens, dropout_rng);

    // token grid back to (embed, th, tw), then progressive upsampling
    Var grid = op::permute(op::reshape(encoded, {th, tw, cfg.embed_dim}), {2, 0, 1});
    const auto [f1, f2] = cfg.pup_factors();
    Var up = op::gelu(conv(state, "transformer.pup1", op::upsample_bilinear(grid, f1), 1, 1));
    up = op::gelu(conv(state, "transformer.pup2", op::upsample_bilinear(up, f2), 1, 1));
    return up;
}

Var unet_subnet(ModelState& state, const Var& context, const Var& fused, Rng* dropout_rng) {
    const ModelConfig& cfg = state.config;
    if (context.val().dim(1) != fused.val().dim(1) ||
        context.val().dim(2) != fused.val().dim(2))
        throw std::invalid_argument("unet_subnet: context/fused spatial mismatch");

    Var x = cfg.unet_concat_fused ? op::concat_channels({context, fused}) : context;
    x = op::gelu(conv(state, "unet.stem", x, 1, 1));

    std::vector<Var> skips;
    for (int i = 0; i < cfg.unet_depth; ++i) {
        x = res_block(state, "unet.enc" + std::to_string(i), x);
        skips.push_back(x);
        x = op::gelu(conv(state, "unet.down" + std::to_string(i), x, 2, 1));
    }
    x = res_block(state, "unet.bottleneck", x);
    for (int i = cfg.unet_depth - 1; i >= 0; --i) {
        const std::string p = "unet.dec" + std::to_string(i);
        x = op::gelu(conv(state, p + ".up", op::upsample_bilinear(x, 2), 1, 1));
        x = op::gelu(conv(state, p + ".fuse", op::concat_channels({x, skips[i]}), 1, 1));
        x = maybe_dropout(state, x, dropout_rng);
    }
    return conv(state, "unet.head", x, 1, 0);
}

namespace {

std::map<std::string, Var> sample_features_as_vars(const ModelConfig& cfg,
                                                   const data::Sample& sample) {
    std::map<std::string, Var> out;
    for (const auto& g : cfg.groups) {
        auto it = sample.features.find(g);
        if (it == sample.features.end())
            throw std::invalid_argument("forward: sample lacks group " + g);
        out.emplace(g, Var::leaf(it->second));
    }
    return out;
}

std::optional<Var> sample_location(const ModelConfig& cfg, const data::Sample& sample,
                                   const std::optional<Var>& region_override) {
    if (cfg.location_mode == LocationMode::none) return std::nullopt;
    if (region_override) return region_override;
    if (static_cast<int>(sample.location.size()) != cfg.location_dim())
        throw std::invalid_argument("forward: sample location vector has wrong length");
    return Var::leaf(Tensor::from(sample.location,
                                  {static_cast<int>(sample.location.size())}));
}

}  // namespace

Var forward_probs_var(ModelState& state, const data::Sample& sample,
                      const std::optional<Var>& region_override, Rng* dropout_rng) {
    auto features = sample_features_as_vars(state.config, sample);
    auto loc = sample_location(state.config, sample, region_override);
    Var fused = fusion_block(state, features, loc, dropout_rng);
    Var context = transformer_subnet(state, fused, dropout_rng);
    Var logits = unet_subnet(state, context, fused, dropout_rng);
    return op::softmax_dim0(logits);
}

ProbabilityRaster forward(ModelState& state, const data::Sample& sample) {
    auto features = sample_features_as_vars(state.config, sample);
    auto loc = sample_location(state.config, sample, std::nullopt);
    Var fused = fusion_block(state, features, loc, nullptr);
    check_finite(fused, "fusion");
    Var context = transformer_subnet(state, fused, nullptr);
    check_finite(context, "transformer");
    Var logits = unet_subnet(state, context, fused, nullptr);
    check_finite(logits, "unet");
    ProbabilityRaster pr{op::softmax_dim0(logits).val().clone()};
    pr.validate_normalized();
    return pr;
}

ProbabilityRaster mc_forward(ModelState& state, const data::Sample& sample, int n_passes,
                             uint64_t seed) {
    if (n_passes < 1) throw std::invalid_argument("mc_forward: n_passes must be >= 1");
    Rng base(seed);
    Tensor acc;
    for (int i = 0; i < n_passes; ++i) {
        Rng pass_rng = base.fork(static_cast<uint64_t>(i));
        Var probs = forward_probs_var(state, sample, std::nullopt,
                                      state.config.dropout_rate > 0 ? &pass_rng : nullptr);
        if (!acc.defined())
            acc = probs.val().clone();
        else
            acc.add_inplace(probs.val());
    }
    acc.scale_inplace(1.0 / n_passes);
    ProbabilityRaster pr{acc};
    pr.validate_normalized();
    return pr;
}

}  // namespace glamap::model

namespace glamap {

void ProbabilityRaster::validate_normalized(double tol) const {
    const int c = num_classes();
    const int64_t hw = static_cast<int64_t>(rows()) * cols();
    for (int64_t px = 0; px < hw; ++px) {
        double s = 0;
        for (int ci = 0; ci < c; ++ci) s += probs[ci * hw + px];
        if (std::abs(s - 1.0) > tol)
            throw std::invalid_argument("ProbabilityRaster: pixel probabilities must sum to 1");
    }
}

MaskGrid ProbabilityRaster::argmax_mask() const {
    const int c = num_classes();
    MaskGrid m(rows(), cols(), 0);
    const int64_t hw = static_cast<int64_t>(rows()) * cols();
    for (int64_t px = 0; px < hw; ++px) {
        int best = 0;
        double bv = probs[px];
        for (int ci = 1; ci < c; ++ci)
            if (probs[ci * hw + px] > bv) {
                bv = probs[ci * hw + px];
                best = ci;
            }
        m(static_cast<int>(px / cols()), static_cast<int>(px % cols())) =
            static_cast<uint8_t>(best);
    }
    return m;
}

}  // namespace glamap
