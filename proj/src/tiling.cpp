#include "rdv2/tiling.hpp"

#include <algorithm>

#include "rdv2/errors.hpp"
#include "rdv2/tensor_ops.hpp"

namespace rdv2::tiling {

void TileSpec::validate() const {
    if (tile == 0 || tile % 4 != 0) throw ConfigError("tile must be a positive multiple of 4, got " + std::to_string(tile));
    if (2 * overlap >= tile)
        throw ConfigError("overlap must be below tile / 2, got overlap " + std::to_string(overlap) + " for tile " +
                          std::to_string(tile));
}

std::vector<std::size_t> tile_starts(std::size_t extent, std::size_t tile, std::size_t overlap) {
    if (tile >= extent) return {0};
    const std::size_t stride = tile - overlap;
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + tile < extent; s += stride) starts.push_back(s);
    starts.push_back(extent - tile);
    return starts;
}

double feather(std::size_t i, std::size_t n, std::size_t overlap, bool ramp_lo, bool ramp_hi) {
    const double span = static_cast<double>(overlap + 1);
    double w = 1.0;
    if (ramp_lo) w = std::min(w, static_cast<double>(i + 1) / span);
    if (ramp_hi) w = std::min(w, static_cast<double>(n - i) / span);
    return w;
}

namespace {

struct Axis {
    std::size_t start, len;
    std::vector<double> w;
};

std::vector<Axis> axis_plan(std::size_t extent, const TileSpec& spec) {
    std::vector<Axis> out;
    const std::size_t len = std::min(spec.tile, extent);
    for (std::size_t s : tile_starts(extent, spec.tile, spec.overlap)) {
        Axis a{s, len, std::vector<double>(len)};
        for (std::size_t i = 0; i < len; ++i) a.w[i] = feather(i, len, spec.overlap, s > 0, s + len < extent);
        out.push_back(std::move(a));
    }
    return out;
}

// Accumulates weight * tile into `acc` and weight into `norm`.
template <class TileFn>
void blend(std::size_t channels, std::size_t h, std::size_t w, const TileSpec& spec, TileFn&& tile_fn, Tensor& acc,
           Tensor& norm) {
    acc = Tensor(Shape{channels, h, w});
    norm = Tensor(Shape{1, h, w});
    const auto rows = axis_plan(h, spec), cols = axis_plan(w, spec);
    for (const Axis& r : rows)
        for (const Axis& c : cols) {
            const Tensor out = tile_fn(r.start, c.start, r.len, c.len);
            for (std::size_t y = 0; y < r.len; ++y)
                for (std::size_t x = 0; x < c.len; ++x) {
                    const double wt = r.w[y] * c.w[x];
                    const std::size_t p = (r.start + y) * w + c.start + x;
                    norm[p] += wt;
                    for (std::size_t k = 0; k < channels; ++k) acc[k * h * w + p] += wt * out[(k * r.len + y) * c.len + x];
                }
        }
}

}  // namespace

Tensor weight_coverage(std::size_t height, std::size_t width, const TileSpec& spec) {
    spec.validate();
    Tensor acc, norm;
    blend(1, height, width, spec,
          [](std::size_t, std::size_t, std::size_t h, std::size_t w) { return Tensor(Shape{1, h, w}, 1.0); }, acc,
          norm);
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] /= norm[i];
    return acc;
}

Tensor tiled_restore(const model::RetinexDual& net, const Tensor& img, const TileSpec& spec) {
    spec.validate();
    priors::validate_image(img);
    const std::size_t h = img.dim(1), w = img.dim(2);
    if (h % 4 != 0 || w % 4 != 0)
        throw DimensionError("tiled_restore needs extents divisible by 4, got " + shape_str(img.shape()));
    const Tensor prior = net.prior_map(img);
    Tensor acc, norm;
    blend(3, h, w, spec,
          [&](std::size_t y0, std::size_t x0, std::size_t th, std::size_t tw) {
              return net.restore(ops::crop(img, y0, x0, th, tw), ops::crop(prior, y0, x0, th, tw));
          },
          acc, norm);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t p = 0; p < h * w; ++p) acc[k * h * w + p] /= norm[p];
    return acc;
}

Tensor restore_image(const model::RetinexDual& net, const Tensor& img, const TileSpec* spec, bool* padded) {
    priors::validate_image(img);
    const std::size_t h = img.dim(1), w = img.dim(2);
    const std::size_t ph = (4 - h % 4) % 4, pw = (4 - w % 4) % 4;
    if (padded) *padded = ph || pw;
    const Tensor work = ph || pw ? ops::reflect_pad(img, ph, pw) : img;
    Tensor out = spec ? tiled_restore(net, work, *spec) : net.restore(work);
    return ph || pw ? ops::crop(out, 0, 0, h, w) : out;
}

}  // namespace rdv2::tiling
