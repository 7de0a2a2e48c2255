#include "rdv2/fft.hpp"

#include <cmath>
#include <numbers>

#include "rdv2/errors.hpp"

namespace rdv2 {

namespace {

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

void radix2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t k = 0; k < half; ++k) {
            // Twiddles from the exact angle per k, not by repeated multiplication.
            const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
            const std::complex<double> w = k == 0 ? std::complex<double>(1.0, 0.0)
                                                  : std::complex<double>(std::cos(ang), std::sin(ang));
            for (std::size_t i = 0; i < n; i += len) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + half] * w;
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
}

void dft(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    std::vector<std::complex<double>> out(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> s{};
        for (std::size_t t = 0; t < n; ++t) {
            const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
            s += a[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = s;
    }
    a.swap(out);
}

Spectrum transform2(const Tensor& re, const Tensor* im, bool inverse) {
    if (re.ndim() < 2) throw DimensionError("fft2 expects at least 2 axes, got " + shape_str(re.shape()));
    if (im) require_same_shape(re, *im, "fft2");
    const std::size_t h = re.dim(re.ndim() - 2), w = re.dim(re.ndim() - 1);
    const std::size_t batch = re.numel() / (h * w);
    Spectrum out{Tensor(re.shape()), Tensor(re.shape())};
    std::vector<std::complex<double>> row(w), col(h);
    std::vector<std::complex<double>> plane(h * w);
    const double norm = inverse ? 1.0 / static_cast<double>(h * w) : 1.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = b * h * w;
        for (std::size_t i = 0; i < h * w; ++i) plane[i] = {re[off + i], im ? (*im)[off + i] : 0.0};
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) row[x] = plane[y * w + x];
            fft1d(row, inverse);
            for (std::size_t x = 0; x < w; ++x) plane[y * w + x] = row[x];
        }
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t y = 0; y < h; ++y) col[y] = plane[y * w + x];
            fft1d(col, inverse);
            for (std::size_t y = 0; y < h; ++y) plane[y * w + x] = col[y];
        }
        for (std::size_t i = 0; i < h * w; ++i) {
            out.re[off + i] = plane[i].real() * norm;
            out.im[off + i] = plane[i].imag() * norm;
        }
    }
    return out;
}

}  // namespace

void fft1d(std::vector<std::complex<double>>& a, bool inverse) {
    if (a.size() <= 1) return;
    if (is_pow2(a.size()))
        radix2(a, inverse);
    else
        dft(a, inverse);
}

Spectrum fft2(const Tensor& x) { return transform2(x, nullptr, false); }
Spectrum fft2(const Tensor& re, const Tensor& im) { return transform2(re, &im, false); }
Spectrum ifft2(const Tensor& re, const Tensor& im) { return transform2(re, &im, true); }

}  // namespace rdv2
