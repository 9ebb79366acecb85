#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "glamap/model.hpp"
#include "glamap/synth.hpp"
#include "glamap/training.hpp"

using namespace glamap;
using namespace glamap::model;
using nn::Shape;
using nn::Tensor;
using nn::Var;
namespace op = nn::op;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.patch_size_px = 32;
    cfg.token_patch = 4;
    cfg.embed_dim = 12;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.base_channels = 4;
    cfg.unet_depth = 1;
    cfg.dropout_rate = 0.0;
    cfg.groups = {"optical", "dem"};
    cfg.init_seed = 11;
    return cfg;
}

data::Sample toy_sample(const ModelConfig& cfg, uint64_t seed) {
    data::SynthSpec spec;
    spec.size_px = cfg.patch_size_px;
    spec.groups = cfg.groups;
    data::Tile tile = data::synth_scene(spec, seed);
    Rng rng(seed + 1);
    data::Sample s = data::extract_patch(tile, rng, cfg.groups, cfg.patch_size_px);
    if (cfg.location_mode == LocationMode::region) {
        s.location.assign(data::kNumRegions, 0.0);
        s.location[2] = 1.0;
    } else if (cfg.location_mode == LocationMode::coord) {
        s.location = {0.0, 1.0, 0.5, std::sqrt(3.0) / 2.0};
    }
    return s;
}

}  // namespace

TEST_CASE("shape contracts through the three subnets") {
    ModelConfig cfg = toy_config();
    cfg.patch_size_px = 64;
    cfg.token_patch = 16;
    ModelState st = ModelState::init(cfg);

    data::Sample s = toy_sample(cfg, 3);
    std::map<std::string, Var> fv;
    for (const auto& [g, t] : s.features) fv.emplace(g, Var::leaf(t));

    Var fused = fusion_block(st, fv, std::nullopt);
    CHECK(fused.shape() == Shape{cfg.base_channels, 64, 64});

    // token arithmetic: 64/16 -> 4x4 = 16 tokens
    Var tokens = op::patchify(fused, cfg.token_patch);
    CHECK(tokens.shape() == Shape{16, cfg.base_channels * 16 * 16});

    Var ctx = transformer_subnet(st, fused);
    CHECK(ctx.shape() == Shape{cfg.base_channels, 64, 64});  // resolution restored

    Var logits = unet_subnet(st, ctx, fused);
    CHECK(logits.shape() == Shape{2, 64, 64});
}

TEST_CASE("SE identity gating and fusion input checks") {
    // excitation weights all 1 -> scale_channels must return the activation
    Rng rng(5);
    Tensor x({3, 8, 8});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal();
    Var gated = op::scale_channels(Var::leaf(x), Var::leaf(Tensor({3}, 1.0)));
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(gated.val()[i] == x[i]);

    ModelConfig cfg = toy_config();
    ModelState st = ModelState::init(cfg);
    data::Sample s = toy_sample(cfg, 4);
    std::map<std::string, Var> fv;
    fv.emplace("optical", Var::leaf(s.features["optical"]));
    // missing dem group
    CHECK_THROWS(fusion_block(st, fv, std::nullopt));
    // spatial mismatch
    fv.emplace("dem", Var::leaf(Tensor({2, 16, 16})));
    CHECK_THROWS(fusion_block(st, fv, std::nullopt));
}

TEST_CASE("forward produces normalized, deterministic probabilities") {
    ModelConfig cfg = toy_config();
    ModelState st = ModelState::init(cfg);
    data::Sample s = toy_sample(cfg, 7);

    ProbabilityRaster p1 = forward(st, s);
    const int64_t hw = static_cast<int64_t>(p1.rows()) * p1.cols();
    for (int64_t i = 0; i < hw; ++i)
        CHECK(p1.probs[i] + p1.probs[hw + i] == doctest::Approx(1.0).epsilon(1e-9));

    ProbabilityRaster p2 = forward(st, s);
    for (int64_t i = 0; i < p1.probs.numel(); ++i) CHECK(p1.probs[i] == p2.probs[i]);
}

TEST_CASE("all-zero head weights give uniform softmax") {
    ModelConfig cfg = toy_config();
    ModelState st = ModelState::init(cfg);
    st.param("unet.head.weight").mutable_val().fill(0.0);
    st.param("unet.head.bias").mutable_val().fill(0.0);
    data::Sample s = toy_sample(cfg, 8);
    ProbabilityRaster p = forward(st, s);
    for (int64_t i = 0; i < p.probs.numel(); ++i)
        CHECK(p.probs[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("location mode none ignores location; region mode reacts to it") {
    ModelConfig cfg = toy_config();
    ModelState st = ModelState::init(cfg);
    data::Sample s = toy_sample(cfg, 9);
    s.location.assign(12, 1.0 / 12);
    ProbabilityRaster a = forward(st, s);
    s.location.assign(12, 0.0);
    s.location[5] = 1.0;
    ProbabilityRaster b = forward(st, s);
    for (int64_t i = 0; i < a.probs.numel(); ++i) CHECK(a.probs[i] == b.probs[i]);

    ModelConfig cfg_r = toy_config();
    cfg_r.location_mode = LocationMode::region;
    ModelState str = ModelState::init(cfg_r);
    data::Sample sr = toy_sample(cfg_r, 9);
    sr.location.assign(12, 0.0);
    sr.location[0] = 1.0;
    ProbabilityRaster ra = forward(str, sr);
    sr.location.assign(12, 0.0);
    sr.location[7] = 1.0;
    ProbabilityRaster rb = forward(str, sr);
    double diff = 0;
    for (int64_t i = 0; i < ra.probs.numel(); ++i) diff += std::abs(ra.probs[i] - rb.probs[i]);
    CHECK(diff > 1e-6);  // different region vectors change the output
}

TEST_CASE("attention permutation equivariance (depth 1)") {
    ModelConfig cfg = toy_config();
    ModelState st = ModelState::init(cfg);

    const int t = 16, d = cfg.embed_dim;
    Rng rng(13);
    Tensor tokens({t, d});
    for (int64_t i = 0; i < tokens.numel(); ++i) tokens[i] = rng.normal();

    Tensor enc = encoder_tokens(st, Var::leaf(tokens)).val();

    // permute rows, run, un-permute; must match the unpermuted encoding
    std::vector<int> perm(t);
    for (int i = 0; i < t; ++i) perm[i] = (i * 7 + 3) % t;
    Tensor ptokens({t, d});
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j) ptokens.at2(i, j) = tokens.at2(perm[i], j);
    Tensor penc = encoder_tokens(st, Var::leaf(ptokens)).val();
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < d; ++j)
            CHECK(penc.at2(i, j) == doctest::Approx(enc.at2(perm[i], j)).epsilon(1e-10));
}

TEST_CASE("depth 0 transformer still decodes the patch embedding") {
    ModelConfig cfg = toy_config();
    cfg.depth = 0;
    ModelState st = ModelState::init(cfg);
    data::Sample s = toy_sample(cfg, 10);
    ProbabilityRaster p = forward(st, s);
    CHECK(p.rows() == cfg.patch_size_px);
    CHECK(p.probs.all_finite());
}

TEST_CASE("encoder halves spatial size per level") {
    // 64 px with unet_depth 4 bottlenecks at 4 px; verified via the conv
    // arithmetic on a minimal state
    ModelConfig cfg = toy_config();
    cfg.patch_size_px = 64;
    cfg.token_patch = 8;
    cfg.unet_depth = 4;
    ModelState st = ModelState::init(cfg);
    data::Sample s = toy_sample(cfg, 11);
    std::map<std::string, Var> fv;
    for (const auto& [g, t] : s.features) fv.emplace(g, Var::leaf(t));
    Var fused = fusion_block(st, fv, std::nullopt);
    Var x = op::gelu(op::conv2d(op::concat_channels({fused, fused}),
                                st.param("unet.stem.weight"), st.param("unet.stem.bias"), 1, 1));
    for (int i = 0; i < 4; ++i)
        x = op::conv2d(x, st.param("unet.down" + std::to_string(i) + ".weight"),
                       st.param("unet.down" + std::to_string(i) + ".bias"), 2, 1);
    CHECK(x.shape()[1] == 4);
    CHECK(x.shape()[2] == 4);
}

TEST_CASE("mc_forward: determinism, degenerate cases, variance decay") {
    ModelConfig cfg = toy_config();
    cfg.dropout_rate = 0.2;
    ModelState st = ModelState::init(cfg);
    data::Sample s = toy_sample(cfg, 15);

    CHECK_THROWS(mc_forward(st, s, 0, 1));

    ProbabilityRaster a = mc_forward(st, s, 4, 42);
    ProbabilityRaster b = mc_forward(st, s, 4, 42);
    for (int64_t i = 0; i < a.probs.numel(); ++i) CHECK(a.probs[i] == b.probs[i]);

    // dropout 0 -> identical to the deterministic forward for any n_passes
    ModelConfig cfg0 = toy_config();
    ModelState st0 = ModelState::init(cfg0);
    ProbabilityRaster det = forward(st0, s);
    ProbabilityRaster mc = mc_forward(st0, s, 5, 7);
    for (int64_t i = 0; i < det.probs.numel(); ++i)
        CHECK(mc.probs[i] == doctest::Approx(det.probs[i]).epsilon(1e-12));

    // variance of the MC mean shrinks as passes double (20 seeds)
    const int64_t hw = static_cast<int64_t>(cfg.patch_size_px) * cfg.patch_size_px;
    std::vector<double> var_by_n;
    for (int n : {1, 2, 4, 8}) {
        std::vector<std::vector<double>> runs;
        for (uint64_t seed = 0; seed < 20; ++seed) {
            ProbabilityRaster p = mc_forward(st, s, n, 1000 + seed);
            std::vector<double> sel;
            for (int64_t i = 0; i < hw; i += hw / 17) sel.push_back(p.probs[i]);
            runs.push_back(sel);
        }
        double total_var = 0;
        for (size_t px = 0; px < runs[0].size(); ++px) {
            double m = 0, v = 0;
            for (const auto& run : runs) m += run[px];
            m /= runs.size();
            for (const auto& run : runs) v += (run[px] - m) * (run[px] - m);
            total_var += v / runs.size();
        }
        var_by_n.push_back(total_var);
    }
    CHECK(var_by_n[1] < var_by_n[0]);
    CHECK(var_by_n[2] < var_by_n[1]);
    CHECK(var_by_n[3] < var_by_n[2]);
}

TEST_CASE("checkpoint round trip and error paths") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "glamap_ckpt_test.bin").string();

    ModelConfig cfg = toy_config();
    cfg.location_mode = LocationMode::region;
    ModelState st = ModelState::init(cfg);
    save_state(st, path);
    ModelState re = load_state(path);
    CHECK(re.equal_parameters(st));
    CHECK(re.config.embed_dim == cfg.embed_dim);

    CHECK_THROWS(load_state(""));
    CHECK_THROWS(load_state("/nonexistent/path.ckpt"));

    {
        std::ofstream f(path, std::ios::binary);
        f << "garbage garbage garbage";
    }
    CHECK_THROWS(load_state(path));

    // index listing fewer tensors than the model owns: the error names them
    {
        save_state(st, path);
        std::ifstream in(path, std::ios::binary);
        std::vector<char> buf(std::istreambuf_iterator<char>(in), {});
        in.close();
        uint64_t jlen;
        std::memcpy(&jlen, buf.data() + 12, 8);
        std::string js(buf.data() + 20, jlen);
        auto idx = nlohmann::json::parse(js);
        const std::string dropped = idx["tensors"].back()["name"].get<std::string>();
        const auto shape = idx["tensors"].back()["shape"].get<std::vector<int64_t>>();
        int64_t numel = 1;
        for (auto d : shape) numel *= d;
        idx["tensors"].erase(idx["tensors"].size() - 1);
        const std::string js2 = idx.dump();
        std::ofstream out(path, std::ios::binary);
        out.write(buf.data(), 12);
        const uint64_t jlen2 = js2.size();
        out.write(reinterpret_cast<const char*>(&jlen2), 8);
        out.write(js2.data(), static_cast<std::streamsize>(js2.size()));
        out.write(buf.data() + 20 + jlen,
                  static_cast<std::streamsize>(buf.size() - 20 - jlen -
                                               numel * sizeof(double)));
        out.close();
        CHECK_THROWS_WITH_AS(load_state(path), doctest::Contains(dropped.c_str()),
                             std::runtime_error);
    }
    fs::remove(path);
}

TEST_CASE("full-model gradients match finite differences") {
    // Toy GlaViTU covering every parameter family (fusion, SE, attention,
    // PUP, U-Net, location MLP); checked on a subsample of coordinates per
    // tensor to keep the unit suite fast. The acceptance suite sweeps every
    // coordinate.
    ModelConfig cfg = toy_config();
    cfg.location_mode = LocationMode::region;
    ModelState st = ModelState::init(cfg);
    data::Sample s = toy_sample(cfg, 21);

    const double gamma = 2.0, eps = 0.1;
    auto loss_value = [&]() {
        Var probs = forward_probs_var(st, s);
        return train::focal_loss_var(probs, s.label_onehot, gamma, eps).val()[0];
    };

    st.zero_grads();
    Var probs = forward_probs_var(st, s);
    Var loss = train::focal_loss_var(probs, s.label_onehot, gamma, eps);
    nn::backward(loss);

    double worst = 0;
    std::string worst_name;
    for (auto& [name, var] : st.params()) {
        Tensor analytic = var.grad();
        Tensor& w = var.mutable_val();
        const int64_t n = w.numel();
        const int64_t step = std::max<int64_t>(1, n / 5);  // ~5 coords per tensor
        for (int64_t i = 0; i < n; i += step) {
            const double orig = w[i];
            const double h = 1e-5 * std::max(1.0, std::abs(orig));
            w[i] = orig + h;
            const double lp = loss_value();
            w[i] = orig - h;
            const double lm = loss_value();
            w[i] = orig;
            const double fd = (lp - lm) / (2 * h);
            const double rel = std::abs(fd - analytic[i]) /
                               std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
            if (rel > worst) {
                worst = rel;
                worst_name = name;
            }
        }
    }
    CAPTURE(worst_name);
    CHECK(worst < 1e-4);
}
