#pragma once

// Plain-text run configuration: UTF-8 `key = value` lines, '#' starts a
// comment. Every key has a default; serialization emits all keys sorted.

#include <filesystem>
#include <string>
#include <vector>

#include "rdv2/losses.hpp"
#include "rdv2/model.hpp"
#include "rdv2/priors.hpp"
#include "rdv2/tiling.hpp"
#include "rdv2/trainer.hpp"

namespace rdv2::io {

struct RunConfig {
    model::ModelConfig model;
    train::TrainConfig train;
    losses::LossWeights loss;
    tiling::TileSpec tile;
    double rain_alpha = priors::kDefaultRainBoost;
    std::string data_dir, checkpoint, log;

    /// Cross-field checks of every section; throws ConfigError.
    void validate() const;
};

/// Throws ConfigError naming the line for malformed lines, unknown or
/// repeated keys and out-of-range values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical form: every key, sorted, one `key = value` per line.
std::string serialize(const RunConfig& cfg);

/// All recognized keys in sorted order.
std::vector<std::string> config_keys();

}  // namespace rdv2::io
