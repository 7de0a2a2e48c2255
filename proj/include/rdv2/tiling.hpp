#pragma once

// Overlapping-tile inference with triangular feathering.

#include <cstddef>
#include <vector>

#include "rdv2/model.hpp"
#include "rdv2/tensor.hpp"

namespace rdv2::tiling {

struct TileSpec {
    std::size_t tile = 256;
    std::size_t overlap = 32;

    /// Throws ConfigError unless tile % 4 == 0 and overlap < tile / 2.
    void validate() const;
};

/// Start offsets of tiles of length `tile` covering [0, extent); the last tile
/// is flush with the end. A single start of 0 when tile >= extent.
std::vector<std::size_t> tile_starts(std::size_t extent, std::size_t tile, std::size_t overlap);

/// Un-normalized weight of position i in a tile of length n; ramps up over
/// `overlap` pixels on sides that border another tile.
double feather(std::size_t i, std::size_t n, std::size_t overlap, bool ramp_lo, bool ramp_hi);

/// Sum of normalized weights per pixel, [1 x H x W]; 1 everywhere by construction.
Tensor weight_coverage(std::size_t height, std::size_t width, const TileSpec& spec);

/// Restores each tile independently with the prior cropped from the
/// full-image prior and blends the results. H and W must be divisible by 4.
Tensor tiled_restore(const model::RetinexDual& net, const Tensor& img, const TileSpec& spec);

/// Reflect-pads to a multiple of 4, restores (tiled when `spec` is given) and
/// crops back. Sets `padded` when padding was needed.
Tensor restore_image(const model::RetinexDual& net, const Tensor& img, const TileSpec* spec, bool* padded = nullptr);

}  // namespace rdv2::tiling
