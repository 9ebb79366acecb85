#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>

#include "glamap/inference.hpp"
#include "glamap/io/csv.hpp"
#include "glamap/io/geotiff.hpp"
#include "glamap/io/plot.hpp"
#include "glamap/synth.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace glamap::cli {

namespace {

void log_event(const json& j) { std::cout << j.dump() << std::endl; }

io::GeoRef georef_of(const data::Tile& tile) {
    io::GeoRef ref;
    if (!tile.rasters.empty()) {
        const auto& rs = tile.rasters.begin()->second;
        ref.origin_x = rs.origin_x;
        ref.origin_y = rs.origin_y;
        ref.pixel_size = rs.pixel_size;
        if (rs.crs_id.rfind("EPSG:", 0) == 0)
            ref.epsg = std::stoi(rs.crs_id.substr(5));
    }
    return ref;
}

void write_raster_f32(const std::string& path, const nn::Tensor& bands,
                      const io::GeoRef& ref) {
    std::vector<float> buf(bands.numel());
    for (int64_t i = 0; i < bands.numel(); ++i) buf[i] = static_cast<float>(bands[i]);
    io::write_geotiff_f32(path, buf.data(), bands.dim(0), bands.dim(1), bands.dim(2), ref);
}

void write_mask_u8(const std::string& path, const MaskGrid& mask, const io::GeoRef& ref) {
    std::vector<uint8_t> buf(mask.raw().begin(), mask.raw().end());
    io::write_geotiff_u8(path, buf.data(), 1, mask.rows(), mask.cols(), ref);
}

void write_conf_f32(const std::string& path, const Grid<double>& g, const io::GeoRef& ref) {
    std::vector<float> buf(g.size());
    for (size_t i = 0; i < g.size(); ++i) buf[i] = static_cast<float>(g.raw()[i]);
    io::write_geotiff_f32(path, buf.data(), 1, g.rows(), g.cols(), ref);
}

MaskGrid mask_from_tif(const std::string& path) {
    const io::GeoTiffImage img = io::read_geotiff(path);
    MaskGrid m(img.info.height, img.info.width, 0);
    for (int r = 0; r < img.info.height; ++r)
        for (int c = 0; c < img.info.width; ++c) m(r, c) = img.at(0, r, c) > 0.5f ? 1 : 0;
    return m;
}

divides::DEMGrid dem_from_tif(const std::string& path) {
    const io::GeoTiffImage img = io::read_geotiff(path);
    divides::DEMGrid dem;
    dem.elevation = Grid<double>(img.info.height, img.info.width, 0.0);
    dem.nodata = MaskGrid(img.info.height, img.info.width, 0);
    dem.pixel_size = img.info.ref.pixel_size;
    dem.origin_x = img.info.ref.origin_x;
    dem.origin_y = img.info.ref.origin_y;
    for (int r = 0; r < img.info.height; ++r)
        for (int c = 0; c < img.info.width; ++c) {
            const float v = img.at(0, r, c);
            dem.elevation(r, c) = v;
            if (img.info.nodata && v == static_cast<float>(*img.info.nodata))
                dem.nodata(r, c) = 1;
        }
    return dem;
}

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else
            cur += c;
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

data::TileDesc find_tile(const std::vector<data::TileDesc>& descs, const std::string& id) {
    for (const auto& d : descs)
        if (d.id == id) return d;
    throw std::runtime_error("tile '" + id + "' not found in the manifest");
}

// Per-pixel confidence values and correctness over a split.
void collect_confidence(model::ModelState& state, const std::vector<data::TileDesc>& descs,
                        data::Split split, int mc_passes, const uq::Calibrator* calibrator,
                        uint64_t seed, std::vector<double>& conf,
                        std::vector<uint8_t>& correct) {
    infer::PredictOptions opts;
    opts.window = state.config.patch_size_px;
    opts.overlap = 0;
    opts.mc_passes = mc_passes;
    opts.seed = seed;
    opts.calibrator = calibrator;
    for (const auto& d : descs) {
        if (d.split != split) continue;
        data::Tile tile = data::load_tile(d);
        bool ok = true;
        for (const auto& g : state.config.groups) ok = ok && tile.has_group(g);
        if (!ok) continue;
        infer::SceneResult res = infer::predict_scene(state, tile, opts);
        const Grid<double>& values =
            calibrator ? res.confidence_cal->values : res.confidence_raw.values;
        for (int r = 0; r < tile.rows(); ++r)
            for (int c = 0; c < tile.cols(); ++c) {
                conf.push_back(values(r, c));
                correct.push_back(res.mask(r, c) == tile.label(r, c) ? 1 : 0);
            }
    }
    if (conf.empty())
        throw std::runtime_error("no usable tiles in split '" + data::split_name(split) + "'");
}

// --------------------------------------------------------------------------
// subcommand option bags
// --------------------------------------------------------------------------

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    int64_t seed = -1;  // -1: keep config value

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_path.empty()) cfg.apply_toml(io::Toml::parse_file(config_path));
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
        fs::create_directories(cfg.out_dir);
        cfg.write_snapshot((fs::path(cfg.out_dir) / "config.toml").string());
        return cfg;
    }
};

struct SynthArgs {
    int tiles = 12, size = 64, blobs = 3, regions = 1;
    double debris = 0.0, noise = 0.0;
    std::string track, thermal_regions, insar_regions;
    bool ramp_noise = false, ramp_debris = false;

    /// Loads a synthetic-spec TOML; explicitly passed flags take precedence,
    /// so the caller applies this before its own overrides.
    void apply_spec_file(const std::string& path) {
        io::Toml t = io::Toml::parse_file(path);
        tiles = static_cast<int>(t.get_int_or("tiles", tiles));
        size = static_cast<int>(t.get_int_or("size_px", size));
        blobs = static_cast<int>(t.get_int_or("blob_count", blobs));
        regions = static_cast<int>(t.get_int_or("regions", regions));
        debris = t.get_double_or("debris_fraction", debris);
        noise = t.get_double_or("noise_level", noise);
        track = t.get_string_or("track", track);
        thermal_regions = t.get_string_or("thermal_regions", thermal_regions);
        insar_regions = t.get_string_or("insar_regions", insar_regions);
        ramp_noise = t.get_bool_or("ramp_noise", ramp_noise);
        ramp_debris = t.get_bool_or("ramp_debris", ramp_debris);
    }
};

int run_synth(const CommonOpts& common, int tiles, int size, int blobs, double debris,
              double noise, int regions, const std::string& track, bool ramp_noise,
              bool ramp_debris, const std::string& thermal_regions,
              const std::string& insar_regions) {
    RunConfig cfg = common.resolve();
    if (tiles < 3) throw std::runtime_error("synth: need at least 3 tiles for a 60/20/20 split");
    if (regions < 1 || regions > data::kNumRegions - 1)
        throw std::runtime_error("synth: regions must be in [1, 11]");

    std::vector<std::string> groups = {"optical", "dem", "thermal", "sar"};
    if (!track.empty()) groups = data::data_track(track).groups;
    const auto thermal_allow = split_csv_list(thermal_regions);
    const auto insar_allow = split_csv_list(insar_regions);
    auto allowed = [](const std::vector<std::string>& allow, const std::string& region) {
        return allow.empty() ||
               std::find(allow.begin(), allow.end(), region) != allow.end();
    };

    const fs::path out(cfg.out_dir);
    std::vector<data::TileDesc> descs;
    io::Toml synth_spec;
    synth_spec.set_int("tiles", tiles);
    synth_spec.set_int("size_px", size);
    synth_spec.set_int("blob_count", blobs);
    synth_spec.set_double("debris_fraction", debris);
    synth_spec.set_double("noise_level", noise);
    synth_spec.set_int("regions", regions);
    synth_spec.set_bool("ramp_noise", ramp_noise);
    synth_spec.set_bool("ramp_debris", ramp_debris);
    synth_spec.set_string("track", track);
    synth_spec.set_string("thermal_regions", thermal_regions);
    synth_spec.set_string("insar_regions", insar_regions);
    synth_spec.set_int("seed", static_cast<int64_t>(cfg.seed));
    synth_spec.write_file((out / "synth.toml").string());

    for (int i = 0; i < tiles; ++i) {
        data::SynthSpec spec;
        spec.size_px = size;
        spec.blob_count = blobs;
        spec.region = data::region_by_index(i % regions);
        const double frac = tiles > 1 ? static_cast<double>(i) / (tiles - 1) : 1.0;
        spec.debris_fraction = ramp_debris ? debris * frac : debris;
        spec.noise_level = ramp_noise ? noise * frac : noise;
        spec.groups.clear();
        for (const auto& g : groups) {
            if (g == "thermal" && !allowed(thermal_allow, spec.region.name)) continue;
            if (g == "sar" && !allowed(insar_allow, spec.region.name)) continue;
            spec.groups.push_back(g);
        }
        spec.id = spec.region.name + "-" + std::to_string(i / regions) + "-" +
                  std::to_string(i % regions);
        spec.lat = 40.0 + spec.region.index;
        spec.lon = 5.0 + 3.0 * (i % 7);
        data::Tile tile = data::synth_scene(spec, cfg.seed * 1000003ull + i);

        const fs::path tdir = out / "tiles" / tile.id;
        fs::create_directories(tdir);
        data::TileDesc d;
        d.id = tile.id;
        d.region = tile.region;
        d.lat = tile.lat;
        d.lon = tile.lon;
        io::GeoRef ref = georef_of(tile);
        for (const auto& [g, rs] : tile.rasters) {
            const std::string p = (tdir / (g + ".tif")).string();
            write_raster_f32(p, rs.bands, ref);
            d.group_paths[g] = p;
        }
        d.label_path = (tdir / "label.tif").string();
        write_mask_u8(d.label_path, tile.label, ref);
        descs.push_back(d);
        log_event({{"event", "synth_tile"},
                   {"id", tile.id},
                   {"region", tile.region.name},
                   {"noise", spec.noise_level},
                   {"debris", spec.debris_fraction}});
    }

    data::SplitResult split = data::split_tiles(descs, cfg.seed);
    std::vector<data::TileDesc> ordered;
    for (const auto* lst : {&split.train, &split.val, &split.test})
        ordered.insert(ordered.end(), lst->begin(), lst->end());
    data::save_manifest((out / "manifest.json").string(), ordered, 10.0, "EPSG:32633");
    log_event({{"event", "synth_done"},
               {"tiles", tiles},
               {"train", split.train.size()},
               {"val", split.val.size()},
               {"test", split.test.size()},
               {"manifest", (out / "manifest.json").string()}});
    return 0;
}

int run_train(const CommonOpts& common, const std::string& data_path,
              const std::string& strategy_name, const std::string& track,
              const std::string& regions_csv, const std::string& init_from,
              const std::string& location_mode) {
    RunConfig cfg = common.resolve();
    const train::Strategy strategy = train::strategy_from_name(strategy_name);
    auto descs = data::load_manifest(data_path);

    model::ModelState initial = [&] {
        if (strategy == train::Strategy::finetune) {
            if (init_from.empty())
                throw std::runtime_error("train: finetune requires --init-from <checkpoint>");
            return model::load_state(init_from);
        }
        model::ModelConfig mcfg = cfg.model;
        mcfg.groups = data::data_track(track).groups;
        if (!location_mode.empty())
            mcfg.location_mode = model::location_mode_from_name(location_mode);
        return model::ModelState::init(mcfg);
    }();

    train::StrategySpec spec{strategy, split_csv_list(regions_csv)};
    train::TrainConfig tcfg = cfg.train;
    tcfg.seed = cfg.seed;

    train::TrainResult res = train::train(initial, descs, spec, tcfg, [](const auto& e) {
        log_event({{"event", "epoch"},
                   {"epoch", e.epoch},
                   {"lr", e.lr},
                   {"train_loss", e.train_loss},
                   {"val_iou", e.val_iou}});
    });

    const fs::path out(cfg.out_dir);
    train::write_history_csv((out / "history.csv").string(), res.history);
    model::save_state(res.best_state, (out / "model.ckpt").string());
    log_event({{"event", "train_done"},
               {"strategy", strategy_name},
               {"track", initial.config.groups},
               {"best_val_iou", res.best_val_iou},
               {"best_epoch", res.best_epoch},
               {"checkpoint", (out / "model.ckpt").string()}});
    return 0;
}

int run_predict(const CommonOpts& common, const std::string& model_path,
                const std::string& data_path, const std::string& tile_id, int mc_passes,
                int overlap, bool bias_optimize_flag, const std::string& calibrator_path,
                bool cosine_window) {
    RunConfig cfg = common.resolve();
    model::ModelState state = model::load_state(model_path);
    auto descs = data::load_manifest(data_path);
    data::TileDesc desc = tile_id.empty() ? descs.at(0) : find_tile(descs, tile_id);
    data::Tile tile = data::load_tile(desc);

    uq::Calibrator calibrator;
    const bool have_cal = !calibrator_path.empty();
    if (have_cal) calibrator = uq::Calibrator::load(calibrator_path);

    infer::PredictOptions opts;
    opts.window = state.config.patch_size_px;
    opts.overlap = overlap;
    opts.mc_passes = mc_passes;
    opts.seed = cfg.seed;
    opts.calibrator = have_cal ? &calibrator : nullptr;
    opts.cosine_weights = cosine_window;

    const fs::path out(cfg.out_dir);
    json summary;
    summary["tile"] = tile.id;
    summary["model"] = model_path;

    if (bias_optimize_flag) {
        auto offsets = data::patch_grid_offsets(tile.rows(), tile.cols(), opts.window,
                                                opts.window);
        std::vector<data::Sample> samples;
        for (auto [r0, c0] : offsets)
            samples.push_back(
                data::extract_patch_at(tile, r0, c0, state.config.groups, opts.window));
        loc::BiasOptResult bres = loc::bias_optimize(state, samples, cfg.bias_opt);
        opts.location_override = bres.region_vector.weights;
        json rv;
        for (int i = 0; i < data::kNumRegions; ++i)
            rv[data::region_by_index(i).name] = bres.region_vector.weights[i];
        std::ofstream((out / "region_vector.json").string()) << rv.dump(2) << "\n";
        summary["bias_optimize"] = {{"epochs", bres.epochs_run},
                                    {"converged", bres.converged},
                                    {"objective", bres.objective_history.back()}};
        log_event({{"event", "bias_optimize"},
                   {"epochs", bres.epochs_run},
                   {"converged", bres.converged},
                   {"argmax_region", data::region_by_index(bres.region_vector.argmax()).name}});
    }

    infer::SceneResult res = infer::predict_scene(state, tile, opts);
    const io::GeoRef ref = georef_of(tile);
    write_mask_u8((out / "mask.tif").string(), res.mask, ref);
    write_raster_f32((out / "prob.tif").string(), res.probability.probs, ref);
    write_conf_f32((out / "conf_raw.tif").string(), res.confidence_raw.values, ref);
    if (res.confidence_cal) {
        write_conf_f32((out / "conf_cal.tif").string(), res.confidence_cal->values, ref);
        write_mask_u8((out / "conf_band.tif").string(),
                      infer::confidence_band(res.mask, *res.confidence_cal), ref);
    }
    infer::write_outlines_geojson(
        (out / "outlines.geojson").string(),
        infer::mask_outlines(res.mask, ref.origin_x, ref.origin_y, ref.pixel_size));

    summary["mean_conf_raw"] = res.confidence_raw.mean();
    if (res.confidence_cal) summary["mean_conf_cal"] = res.confidence_cal->mean();
    if (!tile.label.empty()) {
        infer::IouReport rep = infer::evaluate_iou(res.mask, tile.label);
        summary["glacier_iou"] = rep.glacier_iou;
    }
    std::ofstream((out / "summary.json").string()) << summary.dump(2) << "\n";
    log_event({{"event", "predict_done"},
               {"tile", tile.id},
               {"mean_conf_raw", res.confidence_raw.mean()},
               {"out", out.string()}});
    return 0;
}

int run_calibrate(const CommonOpts& common, const std::string& model_path,
                  const std::string& data_path, const std::string& split_name, int mc_passes,
                  int bins, double bandwidth, double ridge, bool isotonic) {
    RunConfig cfg = common.resolve();
    model::ModelState state = model::load_state(model_path);
    auto descs = data::load_manifest(data_path);

    std::vector<double> conf;
    std::vector<uint8_t> correct;
    collect_confidence(state, descs, data::split_from_name(split_name), mc_passes, nullptr,
                       cfg.seed, conf, correct);

    uq::Calibrator cal = uq::fit_calibrator(conf, correct, bins, bandwidth, ridge, isotonic);
    const fs::path out(cfg.out_dir);
    cal.save((out / "calibrator.json").string());

    const double ece_raw = uq::ece(conf, correct, bins);
    std::vector<double> conf_cal(conf.size());
    for (size_t i = 0; i < conf.size(); ++i) conf_cal[i] = cal.apply(conf[i]);
    const double ece_cal = uq::ece(conf_cal, correct, bins);

    auto rows = uq::reliability_data(conf, correct, bins);
    uq::write_reliability_csv((out / "reliability_raw.csv").string(), rows);
    uq::write_reliability_png((out / "reliability_raw.png").string(), rows);

    log_event({{"event", "calibrate_done"},
               {"samples", conf.size()},
               {"ece_raw", ece_raw},
               {"ece_calibrated", ece_cal},
               {"calibrator", (out / "calibrator.json").string()}});
    return 0;
}

int run_estimate_iou(const CommonOpts& common, const std::string& model_path,
                     const std::string& data_path, const std::string& split_name,
                     const std::string& calibrator_path, int mc_passes) {
    RunConfig cfg = common.resolve();
    if (calibrator_path.empty() || !fs::exists(calibrator_path))
        throw std::runtime_error("calibrate first: no calibrator at '" + calibrator_path + "'");
    uq::Calibrator cal = uq::Calibrator::load(calibrator_path);
    model::ModelState state = model::load_state(model_path);
    auto descs = data::load_manifest(data_path);
    const data::Split split = data::split_from_name(split_name);

    infer::PredictOptions opts;
    opts.window = state.config.patch_size_px;
    opts.overlap = 0;
    opts.mc_passes = mc_passes;
    opts.seed = cfg.seed;
    opts.calibrator = &cal;

    const fs::path out(cfg.out_dir);
    io::CsvWriter csv((out / "estimate_iou.csv").string(),
                      {"tile_id", "mean_conf", "n_p", "n_n", "est_iou", "actual_iou"});
    std::vector<std::pair<double, double>> pairs;
    std::vector<double> est_col, act_col;
    for (const auto& d : descs) {
        if (d.split != split) continue;
        data::Tile tile = data::load_tile(d);
        bool ok = true;
        for (const auto& g : state.config.groups) ok = ok && tile.has_group(g);
        if (!ok) continue;
        infer::SceneResult res = infer::predict_scene(state, tile, opts);
        const double mean_conf = res.confidence_cal->mean();
        int64_t n_p = 0, n_n = 0;
        for (const auto v : res.mask.raw()) (v ? n_p : n_n) += 1;
        const double est =
            iou::estimate_iou(mean_conf, n_p, n_n, state.config.num_classes);
        const double actual = infer::evaluate_iou(res.mask, tile.label).glacier_iou;
        pairs.push_back({est, actual});
        est_col.push_back(est);
        act_col.push_back(actual);
        csv.row({tile.id, io::CsvWriter::num(mean_conf, 8), std::to_string(n_p),
                 std::to_string(n_n), io::CsvWriter::num(est, 8),
                 io::CsvWriter::num(actual, 8)});
        log_event({{"event", "estimate_tile"},
                   {"tile", tile.id},
                   {"est_iou", est},
                   {"actual_iou", actual}});
    }
    if (pairs.empty()) throw std::runtime_error("estimate-iou: no tiles in split");

    io::plot_scatter_png((out / "estimate_iou.png").string(), est_col, act_col);
    json summary;
    if (pairs.size() >= 3) {
        try {
            iou::EstimatorEval ev = iou::evaluate_estimator(pairs, 1000, cfg.seed);
            summary = {{"rmse", ev.rmse},
                       {"r2", ev.r2},
                       {"pearson_r", ev.pearson_r},
                       {"pearson_lo", ev.pearson_lo},
                       {"pearson_hi", ev.pearson_hi},
                       {"mean_bias", ev.mean_bias}};
        } catch (const std::exception& e) {
            summary = {{"note", std::string("estimator summary unavailable: ") + e.what()}};
        }
    }
    summary["tiles"] = pairs.size();
    std::ofstream((out / "estimate_summary.json").string()) << summary.dump(2) << "\n";
    summary["event"] = "estimate_iou_done";
    log_event(summary);
    return 0;
}

int run_divides(const CommonOpts& common, const std::string& dem_path,
                const std::string& mask_path, const std::string& reference_path,
                bool calibrate, int budget, bool random_search) {
    RunConfig cfg = common.resolve();
    divides::DEMGrid dem = dem_from_tif(dem_path);
    MaskGrid mask = mask_from_tif(mask_path);

    std::vector<divides::Polyline> reference;
    if (!reference_path.empty())
        reference = divides::read_polylines_geojson(reference_path);

    divides::DivideParams params = cfg.divide;
    const fs::path out(cfg.out_dir);
    if (calibrate) {
        if (reference.empty())
            throw std::runtime_error("divides: --calibrate requires --reference divides");
        divides::CalibrationResult cres = divides::calibrate_params(
            dem, mask, reference, budget, cfg.seed, {}, random_search);
        divides::write_calibration_log_csv((out / "calibration.csv").string(), cres.log);
        params = cres.best;
        log_event({{"event", "divides_calibrated"},
                   {"evaluations", cres.log.size()},
                   {"best_objective_m", cres.best_objective_m}});
    }

    divides::DivideNetwork net = divides::delineate_divides(dem, mask, params);
    divides::write_divides_geojson((out / "divides.geojson").string(), net.polylines);
    {
        nn::Tensor labels({1, mask.rows(), mask.cols()});
        for (int r = 0; r < mask.rows(); ++r)
            for (int c = 0; c < mask.cols(); ++c)
                labels.at3(0, r, c) = net.watershed_labels(r, c);
        io::GeoRef ref;
        ref.origin_x = dem.origin_x;
        ref.origin_y = dem.origin_y;
        ref.pixel_size = dem.pixel_size;
        write_raster_f32((out / "watersheds.tif").string(), labels, ref);
    }

    json done = {{"event", "divides_done"}, {"polylines", net.polylines.size()}};
    if (!reference.empty() && !net.polylines.empty()) {
        divides::DivideDistance d = divides::divide_distance(net.polylines, reference);
        divides::write_distance_json((out / "metrics.json").string(), d);
        done["rc_to_rf_m"] = d.rc_to_rf_m;
        done["rf_to_rc_m"] = d.rf_to_rc_m;
        done["average_m"] = d.average_m;
    }
    log_event(done);
    return 0;
}

int run_evaluate(const CommonOpts& common, const std::string& pred_path,
                 const std::string& ref_path, const std::string& model_path,
                 const std::string& data_path, const std::string& split_name) {
    if (!pred_path.empty() || !ref_path.empty()) {
        if (pred_path.empty() || ref_path.empty())
            throw std::runtime_error("evaluate: need both --pred and --ref");
        infer::IouReport rep = infer::evaluate_iou(mask_from_tif(pred_path),
                                                   mask_from_tif(ref_path));
        log_event({{"event", "evaluate"},
                   {"glacier_iou", rep.glacier_iou},
                   {"background_iou", rep.per_class[0]}});
        return 0;
    }
    if (model_path.empty() || data_path.empty())
        throw std::runtime_error("evaluate: need --pred/--ref rasters or --model/--data");

    RunConfig cfg = common.resolve();
    model::ModelState state = model::load_state(model_path);
    auto descs = data::load_manifest(data_path);
    const data::Split split = data::split_from_name(split_name);

    infer::PredictOptions opts;
    opts.window = state.config.patch_size_px;
    opts.overlap = 0;
    std::map<std::string, iou::ConfusionCounts> by_region;
    iou::ConfusionCounts total;
    for (const auto& d : descs) {
        if (d.split != split) continue;
        data::Tile tile = data::load_tile(d);
        bool ok = true;
        for (const auto& g : state.config.groups) ok = ok && tile.has_group(g);
        if (!ok) continue;
        infer::SceneResult res = infer::predict_scene(state, tile, opts);
        infer::IouReport rep = infer::evaluate_iou(res.mask, tile.label);
        auto& counts = by_region[tile.region.name];
        counts.tp += rep.counts.tp;
        counts.fp += rep.counts.fp;
        counts.fn += rep.counts.fn;
        counts.tn += rep.counts.tn;
        total.tp += rep.counts.tp;
        total.fp += rep.counts.fp;
        total.fn += rep.counts.fn;
        total.tn += rep.counts.tn;
    }
    if (total.total() == 0) throw std::runtime_error("evaluate: no usable tiles in split");
    json per_region;
    for (const auto& [region, counts] : by_region)
        per_region[region] = iou::iou_from_counts(counts);
    log_event({{"event", "evaluate"},
               {"split", split_name},
               {"glacier_iou", iou::iou_from_counts(total)},
               {"per_region", per_region}});
    return 0;
}

int run_compare(const CommonOpts& common, const std::string& data_path,
                const std::string& configs_csv) {
    RunConfig cfg = common.resolve();
    auto descs = data::load_manifest(data_path);

    std::vector<infer::ComparisonConfig> configs;
    for (const auto& item : split_csv_list(configs_csv)) {
        const size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw std::runtime_error("compare: configs must be strategy:TRACK pairs, got '" +
                                     item + "'");
        configs.push_back({train::strategy_from_name(item.substr(0, colon)),
                           item.substr(colon + 1)});
    }
    if (configs.empty()) throw std::runtime_error("compare: no configs given");

    infer::ComparisonTable table =
        infer::comparison_harness(configs, descs, cfg.model, cfg.train, cfg.seed);
    const fs::path out(cfg.out_dir);
    table.write_csv((out / "comparison.csv").string());
    {
        json summary;
        summary["regions"] = table.regions;
        summary["fully_populated"] = table.fully_populated();
        summary["rows"] = json::array();
        for (size_t i = 0; i < table.configs.size(); ++i) {
            json row = {{"strategy", train::strategy_name(table.configs[i].strategy)},
                        {"track", table.configs[i].track}};
            for (size_t j = 0; j < table.regions.size(); ++j)
                row[table.regions[j]] =
                    table.iou[i][j] ? json(*table.iou[i][j]) : json(nullptr);
            summary["rows"].push_back(row);
        }
        std::ofstream((out / "summary.json").string()) << summary.dump(2) << "\n";
    }
    for (size_t i = 0; i < table.configs.size(); ++i) {
        json row = {{"event", "compare_row"},
                    {"strategy", train::strategy_name(table.configs[i].strategy)},
                    {"track", table.configs[i].track}};
        for (size_t j = 0; j < table.regions.size(); ++j)
            row[table.regions[j]] = table.iou[i][j] ? json(*table.iou[i][j]) : json(nullptr);
        log_event(row);
    }
    log_event({{"event", "compare_done"},
               {"fully_populated", table.fully_populated()},
               {"csv", (out / "comparison.csv").string()}});
    return 0;
}

int run_plot_reliability(const CommonOpts& common, const std::string& model_path,
                         const std::string& data_path, const std::string& split_name,
                         const std::string& calibrator_path, int mc_passes, int bins) {
    RunConfig cfg = common.resolve();
    model::ModelState state = model::load_state(model_path);
    auto descs = data::load_manifest(data_path);

    uq::Calibrator cal;
    const bool have_cal = !calibrator_path.empty();
    if (have_cal) cal = uq::Calibrator::load(calibrator_path);

    std::vector<double> conf;
    std::vector<uint8_t> correct;
    collect_confidence(state, descs, data::split_from_name(split_name), mc_passes,
                       have_cal ? &cal : nullptr, cfg.seed, conf, correct);

    auto rows = uq::reliability_data(conf, correct, bins);
    const fs::path out(cfg.out_dir);
    uq::write_reliability_csv((out / "reliability.csv").string(), rows);
    uq::write_reliability_png((out / "reliability.png").string(), rows);
    log_event({{"event", "plot_reliability_done"},
               {"calibrated", have_cal},
               {"ece", uq::ece(conf, correct, bins)},
               {"csv", (out / "reliability.csv").string()}});
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"glamap: desk-scale glacier mapping toolkit"};
    app.require_subcommand(1);

    CommonOpts common;
    auto add_common = [&common](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "run config TOML");
        sub->add_option("--out", common.out_dir, "output directory");
        sub->add_option("--seed", common.seed, "run seed");
    };

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic tile dataset");
    SynthArgs sa;
    std::string s_spec;
    add_common(synth);
    synth->add_option("--spec", s_spec, "synthetic-spec TOML (flags override it)");
    auto* o_tiles = synth->add_option("--tiles", sa.tiles, "number of tiles");
    auto* o_size = synth->add_option("--size", sa.size, "tile size in pixels");
    auto* o_blobs = synth->add_option("--blobs", sa.blobs, "glacier blobs per tile");
    auto* o_debris =
        synth->add_option("--debris", sa.debris, "debris fraction of glacier pixels");
    auto* o_noise = synth->add_option("--noise", sa.noise, "Gaussian noise level");
    auto* o_regions =
        synth->add_option("--regions", sa.regions, "number of region codes to cycle through");
    auto* o_track = synth->add_option("--track", sa.track, "restrict groups to a data track");
    auto* o_rnoise = synth->add_flag("--ramp-noise", sa.ramp_noise,
                                     "scale noise from 0 to --noise across tiles");
    auto* o_rdebris = synth->add_flag("--ramp-debris", sa.ramp_debris,
                                      "scale debris from 0 to --debris across tiles");
    auto* o_thermal = synth->add_option("--thermal-regions", sa.thermal_regions,
                                        "regions that get thermal data (default: all)");
    auto* o_insar = synth->add_option("--insar-regions", sa.insar_regions,
                                      "regions that get SAR data (default: all)");

    // train
    auto* tr = app.add_subcommand("train", "train a glacier mapping model");
    std::string t_data, t_strategy = "global", t_track = "OPT_DEM", t_regions, t_init,
                t_location;
    add_common(tr);
    tr->add_option("--data", t_data, "dataset manifest")->required();
    tr->add_option("--strategy", t_strategy, "global | regional | finetune");
    tr->add_option("--track", t_track, "data track (OPT_DEM, OPT_DEM_THERMAL, OPT_DEM_INSAR)");
    tr->add_option("--regions", t_regions, "region filter for regional/finetune (CSV)");
    tr->add_option("--init-from", t_init, "checkpoint to finetune from");
    tr->add_option("--location", t_location, "location mode: none | region | coord");

    // predict
    auto* pr = app.add_subcommand("predict", "sliding-window scene prediction");
    std::string p_model, p_data, p_tile, p_calibrator;
    int p_mc = 0, p_overlap = 0;
    bool p_bias = false, p_cosine = false;
    add_common(pr);
    pr->add_option("--model", p_model, "model checkpoint")->required();
    pr->add_option("--data", p_data, "dataset manifest")->required();
    pr->add_option("--tile", p_tile, "tile/scene id (default: first)");
    pr->add_option("--scene", p_tile, "alias for --tile");
    pr->add_option("--mc-passes", p_mc, "Monte-Carlo dropout passes (0/1 = deterministic)");
    pr->add_option("--overlap", p_overlap, "window overlap in pixels");
    pr->add_flag("--bias-optimize", p_bias, "optimize the region vector for the scene");
    pr->add_option("--calibrator", p_calibrator, "calibrator JSON for calibrated confidence");
    pr->add_flag("--cosine-window", p_cosine, "cosine-tapered stitching weights");

    // calibrate
    auto* ca = app.add_subcommand("calibrate", "fit the confidence calibration model");
    std::string c_model, c_data, c_split = "val";
    int c_mc = 0, c_bins = 100;
    double c_bandwidth = 0.1, c_ridge = 1e-3;
    bool c_isotonic = false;
    add_common(ca);
    ca->add_option("--model", c_model, "model checkpoint")->required();
    ca->add_option("--data", c_data, "dataset manifest")->required();
    ca->add_option("--split", c_split, "split to fit on");
    ca->add_option("--mc-passes", c_mc, "Monte-Carlo passes for the probability field");
    ca->add_option("--bins", c_bins, "confidence bins");
    ca->add_option("--bandwidth", c_bandwidth, "kernel bandwidth");
    ca->add_option("--ridge", c_ridge, "ridge strength");
    ca->add_flag("--isotonic", c_isotonic, "apply the monotone projection");

    // estimate-iou
    auto* es = app.add_subcommand("estimate-iou", "reference-free IoU estimation per tile");
    std::string e_model, e_data, e_split = "test", e_calibrator;
    int e_mc = 0;
    add_common(es);
    es->add_option("--model", e_model, "model checkpoint")->required();
    es->add_option("--data", e_data, "dataset manifest")->required();
    es->add_option("--split", e_split, "split to estimate on");
    es->add_option("--calibrator", e_calibrator, "calibrator JSON (required)");
    es->add_option("--mc-passes", e_mc, "Monte-Carlo passes");

    // divides
    auto* dv = app.add_subcommand("divides", "delineate ice divides from a DEM");
    std::string d_dem, d_mask, d_reference;
    bool d_calibrate = false, d_random = false;
    int d_budget = 50;
    add_common(dv);
    dv->add_option("--dem", d_dem, "DEM GeoTIFF")->required();
    dv->add_option("--mask", d_mask, "glacier mask GeoTIFF")->required();
    dv->add_option("--reference", d_reference, "reference divides GeoJSON");
    dv->add_flag("--calibrate", d_calibrate, "calibrate parameters against the reference");
    dv->add_option("--budget", d_budget, "calibration evaluation budget");
    dv->add_flag("--random-search", d_random, "random search instead of model-based");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "IoU of predictions against reference");
    std::string v_pred, v_ref, v_model, v_data, v_split = "test";
    add_common(ev);
    ev->add_option("--pred", v_pred, "predicted mask GeoTIFF");
    ev->add_option("--ref", v_ref, "reference mask GeoTIFF");
    ev->add_option("--model", v_model, "model checkpoint (dataset mode)");
    ev->add_option("--data", v_data, "dataset manifest (dataset mode)");
    ev->add_option("--split", v_split, "split for dataset mode");

    // compare
    auto* co = app.add_subcommand("compare", "strategy/track comparison table");
    std::string o_data, o_configs = "global:OPT_DEM";
    add_common(co);
    co->add_option("--data", o_data, "dataset manifest")->required();
    co->add_option("--configs", o_configs, "CSV of strategy:TRACK pairs");

    // plot-reliability
    auto* pl = app.add_subcommand("plot-reliability", "reliability diagram CSV + PNG");
    std::string r_model, r_data, r_split = "val", r_calibrator;
    int r_mc = 0, r_bins = 100;
    add_common(pl);
    pl->add_option("--model", r_model, "model checkpoint")->required();
    pl->add_option("--data", r_data, "dataset manifest")->required();
    pl->add_option("--split", r_split, "split to plot");
    pl->add_option("--calibrator", r_calibrator, "calibrator JSON (plot calibrated)");
    pl->add_option("--mc-passes", r_mc, "Monte-Carlo passes");
    pl->add_option("--bins", r_bins, "confidence bins");

    // parse
    std::vector<const char*> argv;
    argv.push_back("glamap");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) {
            if (!s_spec.empty()) {
                // flags beat the spec file: re-apply any explicitly set values
                SynthArgs flags = sa;
                sa.apply_spec_file(s_spec);
                if (o_tiles->count()) sa.tiles = flags.tiles;
                if (o_size->count()) sa.size = flags.size;
                if (o_blobs->count()) sa.blobs = flags.blobs;
                if (o_debris->count()) sa.debris = flags.debris;
                if (o_noise->count()) sa.noise = flags.noise;
                if (o_regions->count()) sa.regions = flags.regions;
                if (o_track->count()) sa.track = flags.track;
                if (o_rnoise->count()) sa.ramp_noise = flags.ramp_noise;
                if (o_rdebris->count()) sa.ramp_debris = flags.ramp_debris;
                if (o_thermal->count()) sa.thermal_regions = flags.thermal_regions;
                if (o_insar->count()) sa.insar_regions = flags.insar_regions;
            }
            return run_synth(common, sa.tiles, sa.size, sa.blobs, sa.debris, sa.noise,
                             sa.regions, sa.track, sa.ramp_noise, sa.ramp_debris,
                             sa.thermal_regions, sa.insar_regions);
        }
        if (tr->parsed())
            return run_train(common, t_data, t_strategy, t_track, t_regions, t_init,
                             t_location);
        if (pr->parsed())
            return run_predict(common, p_model, p_data, p_tile, p_mc, p_overlap, p_bias,
                               p_calibrator, p_cosine);
        if (ca->parsed())
            return run_calibrate(common, c_model, c_data, c_split, c_mc, c_bins, c_bandwidth,
                                 c_ridge, c_isotonic);
        if (es->parsed())
            return run_estimate_iou(common, e_model, e_data, e_split, e_calibrator, e_mc);
        if (dv->parsed())
            return run_divides(common, d_dem, d_mask, d_reference, d_calibrate, d_budget,
                               d_random);
        if (ev->parsed()) return run_evaluate(common, v_pred, v_ref, v_model, v_data, v_split);
        if (co->parsed()) return run_compare(common, o_data, o_configs);
        if (pl->parsed())
            return run_plot_reliability(common, r_model, r_data, r_split, r_calibrator, r_mc,
                                        r_bins);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}

}  // namespace glamap::cli
