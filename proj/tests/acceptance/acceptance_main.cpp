// Acceptance suite: runs every release criterion at its pinned tolerance and
// prints one PASS/FAIL line per criterion. Exit code = number of failures.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "glamap/inference.hpp"
#include "glamap/io/csv.hpp"
#include "glamap/location.hpp"
#include "glamap/synth.hpp"
#include "glamap/training.hpp"
#include "glamap/uncertainty.hpp"
#include "location_probe.hpp"

namespace fs = std::filesystem;
using namespace glamap;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    std::function<Outcome()> fn;
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / "glamap_acceptance";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

// ---------------------------------------------------------------------------
// shared study fixture: one trained toy model on varied-difficulty scenes,
// with MC-dropout and softmax calibrators fitted on its validation tiles
// ---------------------------------------------------------------------------

struct StudyFixture {
    model::ModelState state;
    uq::Calibrator cal_mc;
    uq::Calibrator cal_softmax;
    double train_seconds = 0;
    double best_val_iou = 0;
};

model::ModelConfig study_model_config() {
    model::ModelConfig cfg;
    cfg.patch_size_px = 64;
    cfg.token_patch = 8;
    cfg.embed_dim = 32;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.base_channels = 12;
    cfg.unet_depth = 2;
    cfg.dropout_rate = 0.1;
    cfg.groups = {"optical", "dem"};
    cfg.init_seed = 5;
    return cfg;
}

data::Tile study_tile(int id, double noise, double debris, int blobs, uint64_t seed) {
    data::SynthSpec spec;
    spec.size_px = 64;
    spec.blob_count = blobs;
    spec.groups = {"optical", "dem"};
    spec.noise_level = noise;
    spec.debris_fraction = debris;
    spec.id = "S" + std::to_string(id);
    return data::synth_scene(spec, seed);
}

std::vector<data::Tile> study_training_tiles() {
    std::vector<data::Tile> tiles;
    for (int i = 0; i < 20; ++i) {
        const double f = i / 19.0;
        data::Tile t = study_tile(i, 0.12 * f, 0.5 * f, 3, 100 + i * 7);
        t.split = i % 4 == 3 ? data::Split::val : data::Split::train;
        tiles.push_back(std::move(t));
    }
    return tiles;
}

void collect_pixels(model::ModelState& state, const std::vector<data::Tile>& tiles,
                    data::Split split, int mc_passes, const uq::Calibrator* cal,
                    std::vector<double>& conf, std::vector<uint8_t>& correct) {
    infer::PredictOptions opts;
    opts.window = state.config.patch_size_px;
    opts.overlap = 0;
    opts.mc_passes = mc_passes;
    opts.seed = 3;
    opts.calibrator = cal;
    for (const auto& t : tiles) {
        if (t.split != split) continue;
        infer::SceneResult sr = infer::predict_scene(state, t, opts);
        const Grid<double>& v = cal ? sr.confidence_cal->values : sr.confidence_raw.values;
        for (int r = 0; r < t.rows(); ++r)
            for (int c = 0; c < t.cols(); ++c) {
                conf.push_back(v(r, c));
                correct.push_back(sr.mask(r, c) == t.label(r, c) ? 1 : 0);
            }
    }
}

StudyFixture& study() {
    static StudyFixture fx = [] {
        StudyFixture f;
        const auto t0 = std::chrono::steady_clock::now();
        auto tiles = study_training_tiles();
        train::TrainConfig tcfg;
        tcfg.cycles = {3, 5, 8};
        tcfg.batch_size = 4;
        tcfg.lr_init = 2e-3;
        tcfg.seed = 7;
        tcfg.augment.crop_rescale = false;
        tcfg.augment.occlusion = false;
        tcfg.augment.noise_sigma = 0.01;
        train::TrainResult res = train::train_on_tiles(
            model::ModelState::init(study_model_config()), tiles,
            {train::Strategy::global, {}}, tcfg);
        f.state = res.best_state;
        f.best_val_iou = res.best_val_iou;

        std::vector<double> conf_mc, conf_sm;
        std::vector<uint8_t> cor_mc, cor_sm;
        collect_pixels(f.state, tiles, data::Split::val, 8, nullptr, conf_mc, cor_mc);
        collect_pixels(f.state, tiles, data::Split::val, 0, nullptr, conf_sm, cor_sm);
        f.cal_mc = uq::fit_calibrator(conf_mc, cor_mc, 100);
        f.cal_softmax = uq::fit_calibrator(conf_sm, cor_sm, 100);
        f.train_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return f;
    }();
    return fx;
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    model::ModelConfig cfg;
    cfg.patch_size_px = 32;
    cfg.token_patch = 4;
    cfg.embed_dim = 12;
    cfg.depth = 1;
    cfg.heads = 2;
    cfg.base_channels = 4;
    cfg.unet_depth = 1;
    cfg.dropout_rate = 0.0;
    cfg.groups = {"optical", "dem"};
    cfg.location_mode = model::LocationMode::region;  // exercises the location MLP
    cfg.init_seed = 11;
    model::ModelState st = model::ModelState::init(cfg);

    data::SynthSpec spec;
    spec.size_px = 32;
    spec.groups = cfg.groups;
    data::Tile tile = data::synth_scene(spec, 21);
    Rng rng(22);
    data::Sample s = data::extract_patch(tile, rng, cfg.groups, 32);
    s.location.assign(data::kNumRegions, 0.0);
    s.location[2] = 1.0;

    const double gamma = 2.0, eps = 0.1;
    auto loss_value = [&] {
        return train::focal_loss_var(model::forward_probs_var(st, s), s.label_onehot, gamma,
                                     eps)
            .val()[0];
    };
    st.zero_grads();
    nn::Var loss =
        train::focal_loss_var(model::forward_probs_var(st, s), s.label_onehot, gamma, eps);
    nn::backward(loss);

    double worst = 0;
    std::string worst_name;
    int64_t n_checked = 0;
    for (auto& [name, var] : st.params()) {
        nn::Tensor analytic = var.grad();
        nn::Tensor& w = var.mutable_val();
        for (int64_t i = 0; i < w.numel(); ++i) {
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
            ++n_checked;
        }
    }
    return {worst < 1e-4, fmt("max_rel_err=%.2e at %s over %lld coords (tol 1e-4)", worst,
                              worst_name.c_str(), static_cast<long long>(n_checked))};
}

Outcome loss_schedule_oracles() {
    auto probs = [](double p0) {
        nn::Tensor t({2, 1, 1});
        t[0] = p0;
        t[1] = 1 - p0;
        return t;
    };
    nn::Tensor y({2, 1, 1});
    y[0] = 1.0;
    const double v1 = train::focal_loss(probs(0.9), y, 0.0, 0.0);
    const double v2 = train::focal_loss(probs(0.9), y, 2.0, 0.0);
    const double v3 = train::focal_loss(probs(0.9), y, 2.0, 0.1);
    const bool loss_ok = std::abs(v1 - 0.10536) < 1e-6 && std::abs(v2 - 0.0010536) < 1e-6 &&
                         std::abs(v3 - 0.0942556) < 1e-6;

    train::TrainConfig cfg;
    cfg.lr_init = 5e-4;
    cfg.cycles = {10, 20, 40, 80};
    const bool lr_ok = std::abs(train::lr_schedule(0, cfg) - 5e-4) < 1e-6 &&
                       std::abs(train::lr_schedule(5, cfg) - 2.5e-4) < 1e-6 &&
                       std::abs(train::lr_schedule(10, cfg) - 5e-4) < 1e-6 &&
                       std::abs(train::lr_schedule(30, cfg) - 5e-4) < 1e-6 &&
                       std::abs(train::lr_schedule(70, cfg) - 5e-4) < 1e-6;
    return {loss_ok && lr_ok,
            fmt("focal=(%.7f, %.9f, %.9f) lr(0,5,10)=(%.1e, %.2e, %.1e)", v1, v2, v3,
                train::lr_schedule(0, cfg), train::lr_schedule(5, cfg),
                train::lr_schedule(10, cfg))};
}

Outcome confidence_identities() {
    const double uniform[2] = {0.5, 0.5};
    const double onehot[2] = {1.0, 0.0};
    const double p91[2] = {0.9, 0.1};
    const double c0 = uq::confidence_value(uniform, 2);
    const double c1 = uq::confidence_value(onehot, 2);
    const double c2 = uq::confidence_value(p91, 2);
    bool ok = std::abs(c0) < 1e-5 && std::abs(c1 - 1.0) < 1e-5 && std::abs(c2 - 0.53101) < 1e-5;

    double worst_perm = 0;
    Rng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const int c = 2 + trial % 4;
        std::vector<double> p(c);
        double z = 0;
        for (int i = 0; i < c; ++i) {
            p[i] = std::exp(rng.normal());
            z += p[i];
        }
        for (auto& v : p) v /= z;
        const double base = uq::confidence_value(p.data(), c);
        std::vector<double> q = p;
        for (int i = c - 1; i > 0; --i) std::swap(q[i], q[rng.uniform_int(0, i)]);
        worst_perm = std::max(worst_perm,
                              std::abs(uq::confidence_value(q.data(), c) - base));
    }
    ok = ok && worst_perm < 1e-12;
    return {ok, fmt("conf(.5,.5)=%.1e conf(1,0)=%.6f conf(.9,.1)=%.6f perm_dev=%.1e", c0, c1,
                    c2, worst_perm)};
}

Outcome calibration_property() {
    Rng rng(11);
    std::vector<double> conf_fit, conf_eval;
    std::vector<uint8_t> cor_fit, cor_eval;
    for (int i = 0; i < 120000; ++i) {
        const double c = rng.uniform();
        const uint8_t k = rng.bernoulli(std::min(1.0, c + 0.3)) ? 1 : 0;
        if (i % 2) {
            conf_fit.push_back(c);
            cor_fit.push_back(k);
        } else {
            conf_eval.push_back(c);
            cor_eval.push_back(k);
        }
    }
    uq::Calibrator cal = uq::fit_calibrator(conf_fit, cor_fit, 100);
    const double pre = uq::ece(conf_eval, cor_eval, 100);
    std::vector<double> cc(conf_eval.size());
    for (size_t i = 0; i < cc.size(); ++i) cc[i] = cal.apply(conf_eval[i]);
    const double post = uq::ece(cc, cor_eval, 100);
    return {post < pre / 10.0 && post < 0.02,
            fmt("held-out ECE100 %.5f -> %.5f (need <%.5f and <0.02)", pre, post, pre / 10.0)};
}

Outcome mc_vs_softmax() {
    StudyFixture& fx = study();
    std::vector<data::Tile> test_tiles;
    for (int i = 0; i < 12; ++i) {
        const double f = i / 11.0;
        data::Tile t = study_tile(900 + i, 0.12 * f, 0.5 * f, 3, 900 + i * 11);
        t.split = data::Split::test;
        test_tiles.push_back(std::move(t));
    }
    std::vector<double> conf_mc, conf_sm;
    std::vector<uint8_t> dummy;
    collect_pixels(fx.state, test_tiles, data::Split::test, 8, &fx.cal_mc, conf_mc, dummy);
    dummy.clear();
    collect_pixels(fx.state, test_tiles, data::Split::test, 0, &fx.cal_softmax, conf_sm,
                   dummy);
    std::vector<double> a, b;
    for (size_t i = 0; i < conf_mc.size(); i += 7) {
        a.push_back(conf_mc[i]);
        b.push_back(conf_sm[i]);
    }
    uq::CorrelationResult corr = uq::compare_confidences(a, b, 300, 5);
    return {corr.r > 0.7 && corr.lo > 0.5,
            fmt("pearson=%.3f boot=[%.3f, %.3f] n=%zu (need r>0.7, lo>0.5)", corr.r, corr.lo,
                corr.hi, a.size())};
}

Outcome iou_estimator_exactness() {
    const double e1 = iou::estimate_iou(0.9, 100, 900, 2);
    const double e2 = iou::estimate_iou(0.3, 100, 100, 2);
    bool ok = std::abs(e1 - 9.0 / 19.0) < 1e-6 && std::abs(e2 - 1.0 / 3.0) < 1e-6 &&
              std::abs(e1 - 0.47368) < 1e-5 && std::abs(e2 - 0.33333) < 1e-5;

    // brute-force equivalence against constructed confusion tables
    double worst = 0;
    int64_t checked = 0;
    for (int np = 1; np <= 40 && ok; ++np)
        for (int nn = 0; np + nn <= 40; ++nn)
            for (int tp = 0; tp <= np; ++tp)
                for (int fn = 0; fn <= nn; ++fn) {
                    const iou::ConfusionCounts c{tp, np - tp, fn, nn - fn};
                    const double a = c.accuracy();
                    if (a < 0.5 || std::abs(fn - (1.0 - a) * nn) > 1e-9) continue;
                    if (tp + (np - tp) + fn == 0) continue;
                    worst = std::max(worst, std::abs(iou::estimate_iou(a, np, nn, 2) -
                                                     iou::iou_from_counts(c)));
                    ++checked;
                }
    ok = ok && worst < 1e-9;
    return {ok, fmt("hand=(%.8f, %.8f) brute_force: %lld tables, worst_dev=%.1e (tol 1e-9)",
                    e1, e2, static_cast<long long>(checked), worst)};
}

Outcome iou_estimator_correlation() {
    StudyFixture& fx = study();
    infer::PredictOptions opts;
    opts.window = 64;
    opts.overlap = 0;
    opts.calibrator = &fx.cal_softmax;

    std::vector<std::pair<double, double>> pairs;
    int idx = 0;
    for (double noise : {0.0, 0.1, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0, 1.3, 1.7, 2.2, 2.8})
        for (double debris : {0.0, 0.2})
            for (int blobs : {2, 3, 4}) {
                data::Tile t = study_tile(1000 + idx, noise, debris, blobs, 5000 + idx * 13);
                ++idx;
                infer::SceneResult sr = infer::predict_scene(fx.state, t, opts);
                int64_t np = 0, nn = 0;
                for (auto v : sr.mask.raw()) (v ? np : nn) += 1;
                if (np + nn == 0) continue;
                const double est =
                    iou::estimate_iou(sr.confidence_cal->mean(), np, nn, 2);
                double act;
                try {
                    act = infer::evaluate_iou(sr.mask, t.label).glacier_iou;
                } catch (const std::exception&) {
                    continue;
                }
                pairs.push_back({est, act});
            }
    if (pairs.size() < 50) return {false, fmt("only %zu tiles produced pairs", pairs.size())};
    iou::EstimatorEval ev = iou::evaluate_estimator(pairs, 500, 9);
    return {ev.pearson_r > 0.7 && std::abs(ev.mean_bias) < 0.1,
            fmt("n=%zu pearson=%.3f boot=[%.3f, %.3f] rmse=%.3f r2=%.3f bias=%.4f "
                "(need r>0.7, |bias|<0.1)",
                pairs.size(), ev.pearson_r, ev.pearson_lo, ev.pearson_hi, ev.rmse, ev.r2,
                ev.mean_bias)};
}

Outcome bias_optimisation() {
    // Eq-identity on random probability fields
    Rng rng(3);
    double worst_identity = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int h = 6, w = 5, c = 2 + trial % 3;
        ProbabilityRaster pr;
        pr.probs = nn::Tensor({c, h, w});
        const int64_t hw = h * w;
        for (int64_t px = 0; px < hw; ++px) {
            double z = 0;
            std::vector<double> e(c);
            for (int ci = 0; ci < c; ++ci) {
                e[ci] = std::exp(rng.normal());
                z += e[ci];
            }
            for (int ci = 0; ci < c; ++ci) pr.probs[ci * hw + px] = e[ci] / z;
        }
        double conf_sum = 0;
        const uq::ConfidenceRaster conf = uq::confidence(pr);
        for (double v : conf.values.raw()) conf_sum += v;
        worst_identity = std::max(
            worst_identity,
            std::abs(loc::entropy_objective(pr) - (static_cast<double>(hw) - conf_sum)));
    }

    // constructed toy model: returned argmax matches vertex enumeration
    const int region_a = 6;
    model::ModelState st = test_helpers::make_location_probe(region_a);
    model::ModelState before = st.clone();
    auto samples = test_helpers::probe_scene(st.config, 3);

    int best_vertex = -1;
    double best_obj = 1e300;
    for (int v = 0; v < data::kNumRegions; ++v) {
        double obj = 0;
        for (auto sample : samples) {
            sample.location = loc::encode_region(data::region_by_index(v)).weights;
            obj += loc::entropy_objective(model::forward(st, sample));
        }
        if (obj < best_obj) {
            best_obj = obj;
            best_vertex = v;
        }
    }

    loc::BiasOptConfig cfg;
    cfg.max_epochs = 100;
    loc::BiasOptResult res = loc::bias_optimize(st, samples, cfg);
    bool monotone = true;
    for (size_t e = 1; e < res.objective_history.size(); ++e)
        monotone = monotone && res.objective_history[e] <=
                                   res.objective_history[e - 1] * (1 + 1e-9) + 1e-12;

    const bool ok = worst_identity < 1e-9 && best_vertex == region_a &&
                    res.region_vector.argmax() == region_a && monotone &&
                    st.equal_parameters(before);
    return {ok, fmt("identity_dev=%.1e vertex_argmin=%d argmax=%d monotone=%d params_frozen=%d",
                    worst_identity, best_vertex, res.region_vector.argmax(), monotone,
                    st.equal_parameters(before))};
}

Outcome coordinate_encoding() {
    loc::CoordEncoding e = loc::encode_coords(45.0, 180.0 - 1e-6);
    loc::CoordEncoding w = loc::encode_coords(45.0, -180.0 + 1e-6);
    double meridian_dev = 0;
    for (int i = 0; i < 4; ++i)
        meridian_dev = std::max(meridian_dev, std::abs(e.values[i] - w.values[i]));

    Rng rng(2);
    double circle_dev = 0;
    for (int i = 0; i < 1000; ++i) {
        loc::CoordEncoding c = loc::encode_coords(rng.uniform(-90, 90), rng.uniform(-180, 180));
        circle_dev = std::max(circle_dev, std::abs(c.values[0] * c.values[0] +
                                                   c.values[1] * c.values[1] - 1.0));
        circle_dev = std::max(circle_dev, std::abs(c.values[2] * c.values[2] +
                                                   c.values[3] * c.values[3] - 1.0));
    }
    return {meridian_dev < 1e-5 && circle_dev < 1e-9,
            fmt("meridian_dev=%.1e (tol 1e-5) unit_circle_dev=%.1e (tol 1e-9)", meridian_dev,
                circle_dev)};
}

Outcome ice_divides() {
    // two tilted cones; analytic ridge is the vertical bisector
    const int n = 96;
    const double px = 10.0;
    divides::DEMGrid dem;
    dem.elevation = Grid<double>(n, n, 0.0);
    dem.nodata = MaskGrid(n, n, 0);
    dem.pixel_size = px;
    MaskGrid mask(n, n, 0);
    const double apex_r = n / 2.0, sep = n * 0.42;
    const double ca = n / 2.0 - sep / 2.0, cb = n / 2.0 + sep / 2.0, radius = n * 0.27;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double da = std::hypot(r - apex_r, c - ca);
            const double db = std::hypot(r - apex_r, c - cb);
            dem.elevation(r, c) =
                std::max(1000.0 - 8.0 * da, 1000.0 - 8.0 * db) + 0.3 * c;
            if (std::min(da, db) <= radius) mask(r, c) = 1;
        }
    const double ridge_x = (n / 2.0) * px;

    divides::DivideParams params;
    params.min_watershed_area_cells = 60.0;
    divides::DivideNetwork net = divides::delineate_divides(dem, mask, params);
    double worst_dev = 0;
    for (const auto& line : net.polylines)
        for (const auto& [x, y] : line.points)
            worst_dev = std::max(worst_dev, std::abs(x - ridge_x));
    const bool cone_ok = net.polylines.size() == 1 && worst_dev <= 2.0 * px;

    divides::Polyline a{{{0, 0}, {1000, 0}}};
    divides::Polyline b{{{0, 100}, {1000, 100}}};
    divides::DivideDistance same = divides::divide_distance({a}, {a});
    divides::DivideDistance par = divides::divide_distance({a}, {b});
    const bool dist_ok = std::abs(same.average_m) < 1.0 && std::abs(par.rc_to_rf_m - 100) < 1.0 &&
                         std::abs(par.rf_to_rc_m - 100) < 1.0;

    divides::Polyline ridge;
    for (int r = 0; r < n; ++r)
        if (mask(r, n / 2)) ridge.points.emplace_back(ridge_x, dem.origin_y - r * px);
    divides::CalibrationResult cres =
        divides::calibrate_params(dem, mask, {ridge}, 50, 5);
    const bool cal_ok = cres.log.size() <= 50 && cres.best_objective_m <= 2.0 * px;

    return {cone_ok && dist_ok && cal_ok,
            fmt("divides=%zu ridge_dev=%.1fm (tol %.0fm) dist=(%.2f, %.2f) calib: %zu evals "
                "obj=%.2fm (tol %.0fm)",
                net.polylines.size(), worst_dev, 2 * px, same.average_m, par.average_m,
                cres.log.size(), cres.best_objective_m, 2 * px)};
}

Outcome end_to_end() {
    const fs::path root = work_dir() / "e2e";
    fs::create_directories(root);
    const std::string cfg_path = (root / "config.toml").string();
    std::ofstream(cfg_path)
        << "seed = 7\n"
           "[model]\n"
           "patch_size_px = 64\ntoken_patch = 8\nembed_dim = 32\ndepth = 1\nheads = 2\n"
           "base_channels = 12\nunet_depth = 2\ndropout_rate = 0.1\ninit_seed = 5\n"
           "[train]\n"
           "lr_init = 0.002\ncycles = [3, 5, 8]\nbatch_size = 4\n"
           "[train.augment]\n"
           "crop_rescale = false\nocclusion = false\nnoise_sigma = 0.01\n";

    const std::string data = (root / "data").string();
    if (cli::run_cli({"synth", "--tiles", "24", "--size", "64", "--seed", "7", "--regions",
                      "2", "--track", "OPT_DEM", "--out", data}) != 0)
        return {false, "synth failed"};

    const std::string run = (root / "train").string();
    if (cli::run_cli({"train", "--data", data + "/manifest.json", "--strategy", "global",
                      "--track", "OPT_DEM", "--config", cfg_path, "--out", run, "--seed",
                      "7"}) != 0)
        return {false, "train failed"};

    // test-split IoU through the model
    model::ModelState state = model::load_state(run + "/model.ckpt");
    auto descs = data::load_manifest(data + "/manifest.json");
    iou::ConfusionCounts total;
    infer::PredictOptions opts;
    opts.window = 64;
    opts.overlap = 0;
    for (const auto& d : descs) {
        if (d.split != data::Split::test) continue;
        data::Tile tile = data::load_tile(d);
        infer::SceneResult sr = infer::predict_scene(state, tile, opts);
        infer::IouReport rep = infer::evaluate_iou(sr.mask, tile.label);
        total.tp += rep.counts.tp;
        total.fp += rep.counts.fp;
        total.fn += rep.counts.fn;
        total.tn += rep.counts.tn;
    }
    const double test_iou = iou::iou_from_counts(total);

    const std::string pred = (root / "pred").string();
    if (cli::run_cli({"predict", "--model", run + "/model.ckpt", "--data",
                      data + "/manifest.json", "--out", pred}) != 0)
        return {false, "predict failed"};
    if (!fs::exists(pred + "/mask.tif")) return {false, "predict wrote no mask"};

    const std::string cmp = (root / "compare").string();
    if (cli::run_cli({"compare", "--data", data + "/manifest.json", "--configs",
                      "global:OPT_DEM,regional:OPT_DEM,finetune:OPT_DEM", "--config",
                      cfg_path, "--out", cmp, "--seed", "7"}) != 0)
        return {false, "compare failed"};
    auto rows = io::read_csv(cmp + "/comparison.csv");
    bool populated = rows.size() == 4;
    for (size_t i = 1; i < rows.size() && populated; ++i)
        for (size_t j = 2; j < rows[i].size(); ++j)
            populated = populated && rows[i][j] != "—" && !rows[i][j].empty();

    return {test_iou > 0.9 && populated,
            fmt("test_iou=%.4f (need >0.9) comparison rows=%zu fully_populated=%d", test_iou,
                rows.empty() ? 0 : rows.size() - 1, populated)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::string filter = argc > 1 ? argv[1] : "";
    std::vector<Criterion> criteria = {
        {"gradient-correctness", gradient_correctness},
        {"loss-schedule-oracles", loss_schedule_oracles},
        {"confidence-identities", confidence_identities},
        {"calibration-property", calibration_property},
        {"mc-vs-softmax-correlation", mc_vs_softmax},
        {"iou-estimator-exactness", iou_estimator_exactness},
        {"iou-estimator-correlation", iou_estimator_correlation},
        {"bias-optimisation", bias_optimisation},
        {"coordinate-encoding", coordinate_encoding},
        {"ice-divides", ice_divides},
        {"end-to-end-pipeline", end_to_end},
    };

    int failures = 0, ran = 0;
    for (const auto& c : criteria) {
        if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.fn();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %-28s (%6.1fs) %s\n", out.pass ? "PASS" : "FAIL", c.name.c_str(),
                    secs, out.detail.c_str());
        std::fflush(stdout);
        failures += out.pass ? 0 : 1;
    }
    std::printf("ACCEPTANCE: %d/%d criteria passed\n", ran - failures, ran);
    return failures;
}
