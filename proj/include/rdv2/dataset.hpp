#pragma once

// Paired dataset layout: <root>/degraded/<name>.png with <root>/clean/<name>.png.

#include <filesystem>
#include <string>
#include <vector>

#include "rdv2/trainer.hpp"

namespace rdv2::io {

/// Names present in both directories, sorted. Throws ConfigError listing
/// every file that lacks a partner.
std::vector<std::string> pair_names(const std::filesystem::path& a_dir, const std::filesystem::path& b_dir);

/// Loads every pair under `root`. Throws ConfigError when the directory holds
/// no pairs, files are unpaired, or a pair's extents differ.
std::vector<train::ImagePair> load_pairs(const std::filesystem::path& root);

}  // namespace rdv2::io
