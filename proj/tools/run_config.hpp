#pragma once

#include <string>

#include "glamap/divides.hpp"
#include "glamap/io/toml.hpp"
#include "glamap/location.hpp"
#include "glamap/model.hpp"
#include "glamap/training.hpp"

namespace glamap::cli {

/// Everything a run can configure, mirrored 1:1 in the TOML file. Precedence
/// is CLI flag > config file > defaults; unknown keys in the file are
/// rejected. Every subcommand writes its resolved snapshot to the run
/// directory.
struct RunConfig {
    uint64_t seed = 0;
    std::string out_dir = "run";
    model::ModelConfig model;
    train::TrainConfig train;
    loc::BiasOptConfig bias_opt;
    divides::DivideParams divide;

    static RunConfig from_file(const std::string& path);
    void apply_toml(const io::Toml& t);
    io::Toml to_toml() const;
    void write_snapshot(const std::string& path) const;
};

}  // namespace glamap::cli
