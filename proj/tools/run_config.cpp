#include "run_config.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace glamap::cli {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "seed",
        "out_dir",
        "model.patch_size_px",
        "model.token_patch",
        "model.embed_dim",
        "model.depth",
        "model.heads",
        "model.base_channels",
        "model.unet_depth",
        "model.dropout_rate",
        "model.num_classes",
        "model.location_mode",
        "model.unet_concat_fused",
        "model.loc_hidden",
        "model.init_seed",
        "train.lr_init",
        "train.cycles",
        "train.focal_gamma",
        "train.label_smoothing",
        "train.finetune_lr",
        "train.batch_size",
        "train.unknown_region_prob",
        "train.augment.flips",
        "train.augment.rotations",
        "train.augment.crop_rescale",
        "train.augment.contrast",
        "train.augment.noise",
        "train.augment.occlusion",
        "train.augment.crop_min_frac",
        "train.augment.contrast_range",
        "train.augment.noise_sigma",
        "train.augment.occlusion_max_frac",
        "bias_opt.lr",
        "bias_opt.max_epochs",
        "bias_opt.convergence_tol",
        "bias_opt.patience",
        "divides.gutter_depth_m",
        "divides.buffer_radius_cells",
        "divides.min_watershed_area_cells",
        "divides.smoothing_window_cells",
    };
    return keys;
}

}  // namespace

void RunConfig::apply_toml(const io::Toml& t) {
    for (const auto& key : t.keys())
        if (!known_keys().count(key))
            throw std::runtime_error("config: unknown key '" + key + "'");

    seed = static_cast<uint64_t>(t.get_int_or("seed", static_cast<int64_t>(seed)));
    out_dir = t.get_string_or("out_dir", out_dir);

    model.patch_size_px = static_cast<int>(t.get_int_or("model.patch_size_px", model.patch_size_px));
    model.token_patch = static_cast<int>(t.get_int_or("model.token_patch", model.token_patch));
    model.embed_dim = static_cast<int>(t.get_int_or("model.embed_dim", model.embed_dim));
    model.depth = static_cast<int>(t.get_int_or("model.depth", model.depth));
    model.heads = static_cast<int>(t.get_int_or("model.heads", model.heads));
    model.base_channels =
        static_cast<int>(t.get_int_or("model.base_channels", model.base_channels));
    model.unet_depth = static_cast<int>(t.get_int_or("model.unet_depth", model.unet_depth));
    model.dropout_rate = t.get_double_or("model.dropout_rate", model.dropout_rate);
    model.num_classes = static_cast<int>(t.get_int_or("model.num_classes", model.num_classes));
    if (t.has("model.location_mode"))
        model.location_mode = model::location_mode_from_name(t.get_string("model.location_mode"));
    model.unet_concat_fused = t.get_bool_or("model.unet_concat_fused", model.unet_concat_fused);
    model.loc_hidden = static_cast<int>(t.get_int_or("model.loc_hidden", model.loc_hidden));
    model.init_seed =
        static_cast<uint64_t>(t.get_int_or("model.init_seed", static_cast<int64_t>(model.init_seed)));

    train.lr_init = t.get_double_or("train.lr_init", train.lr_init);
    if (t.has("train.cycles")) {
        train.cycles.clear();
        for (double c : t.get_double_array("train.cycles"))
            train.cycles.push_back(static_cast<int>(c));
    }
    train.focal_gamma = t.get_double_or("train.focal_gamma", train.focal_gamma);
    train.label_smoothing = t.get_double_or("train.label_smoothing", train.label_smoothing);
    train.finetune_lr = t.get_double_or("train.finetune_lr", train.finetune_lr);
    train.batch_size = static_cast<int>(t.get_int_or("train.batch_size", train.batch_size));
    train.unknown_region_prob =
        t.get_double_or("train.unknown_region_prob", train.unknown_region_prob);
    train.augment.flips = t.get_bool_or("train.augment.flips", train.augment.flips);
    train.augment.rotations = t.get_bool_or("train.augment.rotations", train.augment.rotations);
    train.augment.crop_rescale =
        t.get_bool_or("train.augment.crop_rescale", train.augment.crop_rescale);
    train.augment.contrast = t.get_bool_or("train.augment.contrast", train.augment.contrast);
    train.augment.noise = t.get_bool_or("train.augment.noise", train.augment.noise);
    train.augment.occlusion = t.get_bool_or("train.augment.occlusion", train.augment.occlusion);
    train.augment.crop_min_frac =
        t.get_double_or("train.augment.crop_min_frac", train.augment.crop_min_frac);
    train.augment.contrast_range =
        t.get_double_or("train.augment.contrast_range", train.augment.contrast_range);
    train.augment.noise_sigma =
        t.get_double_or("train.augment.noise_sigma", train.augment.noise_sigma);
    train.augment.occlusion_max_frac =
        t.get_double_or("train.augment.occlusion_max_frac", train.augment.occlusion_max_frac);

    bias_opt.lr = t.get_double_or("bias_opt.lr", bias_opt.lr);
    bias_opt.max_epochs = static_cast<int>(t.get_int_or("bias_opt.max_epochs", bias_opt.max_epochs));
    bias_opt.convergence_tol =
        t.get_double_or("bias_opt.convergence_tol", bias_opt.convergence_tol);
    bias_opt.patience = static_cast<int>(t.get_int_or("bias_opt.patience", bias_opt.patience));

    divide.gutter_depth_m = t.get_double_or("divides.gutter_depth_m", divide.gutter_depth_m);
    divide.buffer_radius_cells =
        static_cast<int>(t.get_int_or("divides.buffer_radius_cells", divide.buffer_radius_cells));
    divide.min_watershed_area_cells =
        t.get_double_or("divides.min_watershed_area_cells", divide.min_watershed_area_cells);
    divide.smoothing_window_cells = static_cast<int>(
        t.get_int_or("divides.smoothing_window_cells", divide.smoothing_window_cells));
}

RunConfig RunConfig::from_file(const std::string& path) {
    RunConfig cfg;
    cfg.apply_toml(io::Toml::parse_file(path));
    return cfg;
}

io::Toml RunConfig::to_toml() const {
    io::Toml t;
    t.set_int("seed", static_cast<int64_t>(seed));
    t.set_string("out_dir", out_dir);

    t.set_int("model.patch_size_px", model.patch_size_px);
    t.set_int("model.token_patch", model.token_patch);
    t.set_int("model.embed_dim", model.embed_dim);
    t.set_int("model.depth", model.depth);
    t.set_int("model.heads", model.heads);
    t.set_int("model.base_channels", model.base_channels);
    t.set_int("model.unet_depth", model.unet_depth);
    t.set_double("model.dropout_rate", model.dropout_rate);
    t.set_int("model.num_classes", model.num_classes);
    t.set_string("model.location_mode", model::location_mode_name(model.location_mode));
    t.set_bool("model.unet_concat_fused", model.unet_concat_fused);
    t.set_int("model.loc_hidden", model.loc_hidden);
    t.set_int("model.init_seed", static_cast<int64_t>(model.init_seed));

    t.set_double("train.lr_init", train.lr_init);
    std::vector<double> cycles(train.cycles.begin(), train.cycles.end());
    t.set_double_array("train.cycles", cycles);
    t.set_double("train.focal_gamma", train.focal_gamma);
    t.set_double("train.label_smoothing", train.label_smoothing);
    t.set_double("train.finetune_lr", train.finetune_lr);
    t.set_int("train.batch_size", train.batch_size);
    t.set_double("train.unknown_region_prob", train.unknown_region_prob);
    t.set_bool("train.augment.flips", train.augment.flips);
    t.set_bool("train.augment.rotations", train.augment.rotations);
    t.set_bool("train.augment.crop_rescale", train.augment.crop_rescale);
    t.set_bool("train.augment.contrast", train.augment.contrast);
    t.set_bool("train.augment.noise", train.augment.noise);
    t.set_bool("train.augment.occlusion", train.augment.occlusion);
    t.set_double("train.augment.crop_min_frac", train.augment.crop_min_frac);
    t.set_double("train.augment.contrast_range", train.augment.contrast_range);
    t.set_double("train.augment.noise_sigma", train.augment.noise_sigma);
    t.set_double("train.augment.occlusion_max_frac", train.augment.occlusion_max_frac);

    t.set_double("bias_opt.lr", bias_opt.lr);
    t.set_int("bias_opt.max_epochs", bias_opt.max_epochs);
    t.set_double("bias_opt.convergence_tol", bias_opt.convergence_tol);
    t.set_int("bias_opt.patience", bias_opt.patience);

    t.set_double("divides.gutter_depth_m", divide.gutter_depth_m);
    t.set_int("divides.buffer_radius_cells", divide.buffer_radius_cells);
    t.set_double("divides.min_watershed_area_cells", divide.min_watershed_area_cells);
    t.set_int("divides.smoothing_window_cells", divide.smoothing_window_cells);
    return t;
}

void RunConfig::write_snapshot(const std::string& path) const { to_toml().write_file(path); }

}  // namespace glamap::cli
