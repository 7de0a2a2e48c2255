#pragma once

// 8-bit PNG codec. Images are [C x H x W] tensors with values in [0, 1].

#include <filesystem>

#include "rdv2/tensor.hpp"

namespace rdv2::io {

/// Decodes an 8-bit RGB PNG as v / 255. Other bit depths, palettes, grey or
/// alpha channels raise UnsupportedFormatError.
Tensor load_image(const std::filesystem::path& path);

/// Encodes [3 x H x W] as RGB or [1 x H x W] as grey, round(255 v) clamped to [0, 255].
void save_image(const Tensor& img, const std::filesystem::path& path);

}  // namespace rdv2::io
