#include <benchmark/benchmark.h>

#include "glamap/divides.hpp"
#include "glamap/model.hpp"
#include "glamap/synth.hpp"
#include "glamap/training.hpp"
#include "glamap/uncertainty.hpp"

using namespace glamap;

namespace {

model::ModelConfig bench_model() {
    model::ModelConfig cfg;
    cfg.patch_size_px = 64;
    cfg.token_patch = 8;
    cfg.embed_dim = 32;
    cfg.depth = 2;
    cfg.heads = 4;
    cfg.base_channels = 8;
    cfg.unet_depth = 2;
    cfg.dropout_rate = 0.0;
    cfg.groups = {"optical", "dem"};
    return cfg;
}

data::Sample bench_sample(const model::ModelConfig& cfg) {
    data::SynthSpec spec;
    spec.size_px = cfg.patch_size_px;
    spec.groups = cfg.groups;
    data::Tile tile = data::synth_scene(spec, 1);
    Rng rng(2);
    return data::extract_patch(tile, rng, cfg.groups, cfg.patch_size_px);
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
    model::ModelConfig cfg = bench_model();
    model::ModelState st = model::ModelState::init(cfg);
    data::Sample s = bench_sample(cfg);
    for (auto _ : state) {
        ProbabilityRaster p = model::forward(st, s);
        benchmark::DoNotOptimize(p.probs.data());
    }
}
BENCHMARK(BM_Forward);

static void BM_ForwardBackward(benchmark::State& state) {
    model::ModelConfig cfg = bench_model();
    model::ModelState st = model::ModelState::init(cfg);
    data::Sample s = bench_sample(cfg);
    for (auto _ : state) {
        st.zero_grads();
        nn::Var probs = model::forward_probs_var(st, s);
        nn::Var loss = train::focal_loss_var(probs, s.label_onehot, 2.0, 0.1);
        nn::backward(loss);
        benchmark::DoNotOptimize(loss.val()[0]);
    }
}
BENCHMARK(BM_ForwardBackward);

static void BM_FocalLoss(benchmark::State& state) {
    model::ModelConfig cfg = bench_model();
    data::Sample s = bench_sample(cfg);
    nn::Tensor probs({2, 64, 64});
    Rng rng(3);
    const int64_t hw = 64 * 64;
    for (int64_t i = 0; i < hw; ++i) {
        const double p = rng.uniform(0.01, 0.99);
        probs[i] = p;
        probs[hw + i] = 1 - p;
    }
    for (auto _ : state)
        benchmark::DoNotOptimize(train::focal_loss(probs, s.label_onehot, 2.0, 0.1));
}
BENCHMARK(BM_FocalLoss);

static void BM_Confidence(benchmark::State& state) {
    ProbabilityRaster pr;
    pr.probs = nn::Tensor({2, 256, 256});
    Rng rng(4);
    const int64_t hw = 256 * 256;
    for (int64_t i = 0; i < hw; ++i) {
        const double p = rng.uniform(0.001, 0.999);
        pr.probs[i] = p;
        pr.probs[hw + i] = 1 - p;
    }
    for (auto _ : state) {
        uq::ConfidenceRaster c = uq::confidence(pr);
        benchmark::DoNotOptimize(c.values.data());
    }
}
BENCHMARK(BM_Confidence);

static void BM_FillDepressions(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    divides::DEMGrid dem;
    dem.elevation = Grid<double>(n, n, 0.0);
    dem.nodata = MaskGrid(n, n, 0);
    Rng rng(5);
    for (auto& v : dem.elevation.raw()) v = rng.uniform(0.0, 500.0);
    for (auto _ : state) {
        divides::DEMGrid f = divides::fill_depressions(dem);
        benchmark::DoNotOptimize(f.elevation.data());
    }
}
BENCHMARK(BM_FillDepressions)->Arg(64)->Arg(256);

static void BM_SynthScene(benchmark::State& state) {
    data::SynthSpec spec;
    spec.size_px = 64;
    uint64_t seed = 0;
    for (auto _ : state) {
        data::Tile t = data::synth_scene(spec, seed++);
        benchmark::DoNotOptimize(t.label.data());
    }
}
BENCHMARK(BM_SynthScene);

BENCHMARK_MAIN();
