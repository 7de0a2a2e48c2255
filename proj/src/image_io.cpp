#include "rdv2/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "rdv2/errors.hpp"

namespace rdv2::io {

namespace {

struct ImageGuard {
    png_image img{};
    ImageGuard() {
        img.version = PNG_IMAGE_VERSION;
    }
    ~ImageGuard() { png_image_free(&img); }
};

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw std::runtime_error("no such image: " + path.string());
    ImageGuard g;
    if (!png_image_begin_read_from_file(&g.img, path.c_str()))
        throw UnsupportedFormatError(path.string() + ": " + g.img.message);
    const auto fmt = g.img.format;
    if (fmt & PNG_FORMAT_FLAG_LINEAR) throw UnsupportedFormatError(path.string() + ": only 8-bit PNGs are supported");
    if (fmt & PNG_FORMAT_FLAG_COLORMAP) throw UnsupportedFormatError(path.string() + ": palette PNGs are not supported");
    if (!(fmt & PNG_FORMAT_FLAG_COLOR) || (fmt & PNG_FORMAT_FLAG_ALPHA))
        throw UnsupportedFormatError(path.string() + ": expected 3-channel RGB");

    g.img.format = PNG_FORMAT_RGB;
    const std::size_t h = g.img.height, w = g.img.width;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(g.img));
    if (!png_image_finish_read(&g.img, nullptr, buf.data(), 0, nullptr))
        throw UnsupportedFormatError(path.string() + ": " + g.img.message);

    Tensor out(Shape{3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) out[(c * h + y) * w + x] = buf[(y * w + x) * 3 + c] / 255.0;
    return out;
}

void save_image(const Tensor& img, const std::filesystem::path& path) {
    if (img.ndim() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
        throw DimensionError("save_image expects [1 x H x W] or [3 x H x W], got " + shape_str(img.shape()));
    const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
    ImageGuard g;
    g.img.width = static_cast<png_uint_32>(w);
    g.img.height = static_cast<png_uint_32>(h);
    g.img.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(c * h * w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t k = 0; k < c; ++k) {
                const double v = img[(k * h + y) * w + x];
                const double q = std::isnan(v) ? 0.0 : std::clamp(std::round(v * 255.0), 0.0, 255.0);
                buf[(y * w + x) * c + k] = static_cast<png_byte>(q);
            }
    if (!png_image_write_to_file(&g.img, path.c_str(), 0, buf.data(), 0, nullptr))
        throw std::runtime_error("cannot write " + path.string() + ": " + g.img.message);
}

}  // namespace rdv2::io
