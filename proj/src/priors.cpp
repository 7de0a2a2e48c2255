#include "rdv2/priors.hpp"

#include <algorithm>
#include <cmath>

#include "rdv2/ag.hpp"
#include "rdv2/errors.hpp"
#include "rdv2/tensor_ops.hpp"

namespace rdv2::priors {

Task parse_task(const std::string& name) {
    if (name == "derain") return Task::derain;
    if (name == "lowlight") return Task::lowlight;
    if (name == "dehaze") return Task::dehaze;
    if (name == "deshadow") return Task::deshadow;
    throw ConfigError("unknown task '" + name + "' (expected derain, lowlight, dehaze or deshadow)");
}

std::string task_name(Task task) {
    switch (task) {
        case Task::derain: return "derain";
        case Task::lowlight: return "lowlight";
        case Task::dehaze: return "dehaze";
        case Task::deshadow: return "deshadow";
    }
    return "?";
}

void validate_image(const Tensor& img) {
    if (img.ndim() != 3 || img.dim(0) != 3)
        throw DimensionError("expected an RGB image [3 x H x W], got " + shape_str(img.shape()));
    for (double v : img.data())
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("image values must lie in [0, 1]");
}

namespace {
constexpr double kGrayR = 0.299, kGrayG = 0.587, kGrayB = 0.114;

std::size_t plane(const Tensor& img) { return img.dim(1) * img.dim(2); }

Tensor single(const Tensor& img) { return Tensor(Shape{1, img.dim(1), img.dim(2)}); }
}  // namespace

Tensor gray(const Tensor& img) {
    validate_image(img);
    const std::size_t n = plane(img);
    Tensor out = single(img);
    for (std::size_t i = 0; i < n; ++i) out[i] = kGrayR * img[i] + kGrayG * img[n + i] + kGrayB * img[2 * n + i];
    return out;
}

Tensor dark_channel(const Tensor& img) {
    validate_image(img);
    const std::size_t n = plane(img);
    Tensor out = single(img);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::min({img[i], img[n + i], img[2 * n + i]});
    return out;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ContractError("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

LogChromaticity log_chromaticity(const Tensor& img, double theta) {
    validate_image(img);
    const std::size_t n = plane(img);
    LogChromaticity lc{single(img), single(img), single(img), single(img)};
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t i = 0; i < n; ++i) {
        const double lr = std::log(std::max(img[i], kLogClamp));
        const double lg = std::log(std::max(img[n + i], kLogClamp));
        const double lb = std::log(std::max(img[2 * n + i], kLogClamp));
        // log of the geometric mean
        const double lmu = (lr + lg + lb) / 3.0;
        lc.rho_r[i] = lr - lmu;
        lc.rho_g[i] = lg - lmu;
        lc.rho_b[i] = lb - lmu;
        lc.invariant[i] = lc.rho_r[i] * ct + lc.rho_b[i] * st;
    }
    return lc;
}

Tensor shadow_prior(const Tensor& img, double theta) {
    const Tensor s = log_chromaticity(img, theta).invariant;
    std::vector<double> v(s.data().begin(), s.data().end());
    const double p2 = percentile(v, 2.0), p98 = percentile(std::move(v), 98.0);
    Tensor out(s.shape(), kDegenerateValue);
    if (p98 - p2 < kDegenerateWindow) return out;
    for (std::size_t i = 0; i < s.numel(); ++i) out[i] = std::clamp((s[i] - p2) / (p98 - p2), 0.0, 1.0);
    return out;
}

Var shadow_prior(Tape& t, const Tensor& img, Var theta) {
    const LogChromaticity lc = log_chromaticity(img, 0.0);
    Var s = ag::add(ag::mul_sv(t.constant(lc.rho_r), ag::cos(theta)),
                    ag::mul_sv(t.constant(lc.rho_b), ag::sin(theta)));
    Var p2 = ag::percentile(s, 2.0);
    Var p98 = ag::percentile(s, 98.0);
    Var window = ag::sub(p98, p2);
    if (window.value()[0] < kDegenerateWindow) return t.constant(Tensor(s.shape(), kDegenerateValue));
    return ag::clip(ag::div_sv(ag::sub(s, ag::mul_sv(t.constant(Tensor::ones(s.shape())), p2)), window), 0.0, 1.0);
}

Tensor gaussian_color_model(const Tensor& img) {
    validate_image(img);
    const std::size_t n = plane(img);
    Tensor out(Shape{3, img.dim(1), img.dim(2)});
    for (std::size_t i = 0; i < n; ++i) {
        const double r = img[i], g = img[n + i], b = img[2 * n + i];
        out[i] = 0.06 * r + 0.63 * g + 0.27 * b;
        out[n + i] = 0.30 * r + 0.04 * g - 0.35 * b;
        out[2 * n + i] = 0.34 * r - 0.60 * g + 0.17 * b;
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma, int order) {
    if (!(sigma > 0.0)) throw ConfigError("Gaussian scale must be positive");
    if (order < 0 || order > 2) throw ConfigError("Gaussian derivative order must be 0, 1 or 2");
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> g(static_cast<std::size_t>(2 * r + 1));
    double total = 0.0;
    for (int t = -r; t <= r; ++t) {
        g[static_cast<std::size_t>(t + r)] = std::exp(-0.5 * t * t / (sigma * sigma));
        total += g[static_cast<std::size_t>(t + r)];
    }
    for (auto& v : g) v /= total;
    if (order == 0) return g;
    std::vector<double> k(g.size());
    const double s2 = sigma * sigma;
    for (int t = -r; t <= r; ++t) {
        const auto i = static_cast<std::size_t>(t + r);
        k[i] = order == 1 ? -t / s2 * g[i] : (t * t / (s2 * s2) - 1.0 / s2) * g[i];
    }
    if (order == 2) {
        double m = 0.0;
        for (double v : k) m += v;
        m /= static_cast<double>(k.size());
        for (auto& v : k) v -= m;
    }
    return k;
}

namespace {

// out(y, x) = sum_t k[t] * in(y, clamp(x - t)) along x (axis = 1) or y (axis = 0).
Tensor filter_axis(const Tensor& in, std::size_t h, std::size_t w, const std::vector<double>& k, int axis) {
    const int r = static_cast<int>(k.size() / 2);
    Tensor out(Shape{h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = -r; t <= r; ++t) {
                long yy = static_cast<long>(y), xx = static_cast<long>(x);
                if (axis == 1)
                    xx = std::clamp<long>(xx - t, 0, static_cast<long>(w) - 1);
                else
                    yy = std::clamp<long>(yy - t, 0, static_cast<long>(h) - 1);
                s += k[static_cast<std::size_t>(t + r)] * in[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
            }
            out[y * w + x] = s;
        }
    return out;
}

Tensor separable(const Tensor& ch, std::size_t h, std::size_t w, const std::vector<double>& kx,
                 const std::vector<double>& ky) {
    return filter_axis(filter_axis(ch, h, w, kx, 1), h, w, ky, 0);
}

}  // namespace

std::vector<StructureResponse> structure_responses(const Tensor& img, const std::vector<double>& sigmas) {
    if (sigmas.empty()) throw ConfigError("structure prior needs at least one Gaussian scale");
    const Tensor gcm = gaussian_color_model(img);
    const std::size_t h = img.dim(1), w = img.dim(2), n = h * w;
    Tensor e(Shape{h, w}), el(Shape{h, w});
    std::copy(gcm.data().begin(), gcm.data().begin() + static_cast<std::ptrdiff_t>(n), e.data().begin());
    std::copy(gcm.data().begin() + static_cast<std::ptrdiff_t>(n), gcm.data().begin() + static_cast<std::ptrdiff_t>(2 * n),
              el.data().begin());
    std::vector<StructureResponse> out;
    for (double sigma : sigmas) {
        const auto g0 = gaussian_kernel(sigma, 0), g1 = gaussian_kernel(sigma, 1), g2 = gaussian_kernel(sigma, 2);
        // (x-kernel, y-kernel) per term
        const std::vector<std::pair<const std::vector<double>*, const std::vector<double>*>> terms = {
            {&g0, &g0}, {&g1, &g0}, {&g0, &g1}, {&g2, &g0}, {&g0, &g2}};
        for (const auto& [kx, ky] : terms)
            out.push_back({separable(el, h, w, *kx, *ky).reshaped({1, h, w}),
                           separable(e, h, w, *kx, *ky).reshaped({1, h, w})});
    }
    return out;
}

Tensor weberized_invariant(const Tensor& img, const std::vector<double>& sigmas) {
    Tensor out(Shape{1, img.dim(1), img.dim(2)});
    for (const auto& r : structure_responses(img, sigmas))
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const double ratio = r.numer[i] / (r.denom[i] + kStructureEps);
            out[i] += ratio * ratio;
        }
    return out;
}

Tensor normalize_minmax(const Tensor& x) {
    const double lo = ops::min(x), hi = ops::max(x);
    Tensor out(x.shape(), kDegenerateValue);
    if (hi - lo < kDegenerateWindow) return out;
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = (x[i] - lo) / (hi - lo);
    return out;
}

Tensor structure_prior(const Tensor& img, const std::vector<double>& sigmas) {
    return normalize_minmax(weberized_invariant(img, sigmas));
}

Tensor rain_mask_gt(const Tensor& drop, const Tensor& blur, double alpha) {
    validate_image(drop);
    validate_image(blur);
    require_same_shape(drop, blur, "rain_mask_gt");
    const std::size_t n = plane(drop);
    Tensor out = single(drop);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = kGrayR * std::abs(drop[i] - blur[i]) + kGrayG * std::abs(drop[n + i] - blur[n + i]) +
                         kGrayB * std::abs(drop[2 * n + i] - blur[2 * n + i]);
        out[i] = std::clamp(alpha * g, 0.0, 1.0);
    }
    return out;
}

RainMaskNet::RainMaskNet(ParamStore& store, const std::string& prefix, Rng& rng) {
    enc0a_ = make_conv(store, prefix + ".enc0a", {.in = 3, .out = 8, .kernel = 3}, rng);
    enc0b_ = make_conv(store, prefix + ".enc0b", {.in = 8, .out = 8, .kernel = 3}, rng);
    enc1_ = make_conv(store, prefix + ".enc1", {.in = 8, .out = 16, .kernel = 3}, rng);
    enc2_ = make_conv(store, prefix + ".enc2", {.in = 16, .out = 32, .kernel = 3}, rng);
    dec1_ = make_conv(store, prefix + ".dec1", {.in = 48, .out = 16, .kernel = 3}, rng);
    dec0_ = make_conv(store, prefix + ".dec0", {.in = 24, .out = 8, .kernel = 3}, rng);
    out_ = make_conv(store, prefix + ".out", {.in = 8, .out = 1, .kernel = 3, .init = Init::zero}, rng);
}

Var RainMaskNet::forward(Tape& t, Var img) const {
    if (!enc0a_.weight) throw ConfigError("rain mask network is not initialized");
    if (img.value().ndim() != 3 || img.value().dim(0) != 3)
        throw ConfigError("rain mask network expects [3 x H x W] input, got " + shape_str(img.shape()));
    const std::size_t h = img.value().dim(1), w = img.value().dim(2);
    Var e0 = ag::silu(enc0b_(t, ag::silu(enc0a_(t, img))));
    Var e1 = ag::silu(enc1_(t, ag::avg_pool(e0, 2)));
    Var e2 = ag::silu(enc2_(t, ag::avg_pool(e1, 2)));
    Var u1 = ag::upsample_bilinear(e2, e1.value().dim(1), e1.value().dim(2));
    Var d1 = ag::silu(dec1_(t, ag::concat0({u1, e1})));
    Var u0 = ag::upsample_bilinear(d1, h, w);
    Var d0 = ag::silu(dec0_(t, ag::concat0({u0, e0})));
    return ag::sigmoid(out_(t, d0));
}

Tensor RainMaskNet::predict(const Tensor& img) const {
    Tape t;
    return forward(t, t.constant(img)).value();
}

Var rain_mask_loss(Tape& t, const RainMaskNet& net, const Tensor& img, const Tensor& gt_mask) {
    Var pred = net.forward(t, t.constant(img));
    require_same_shape(pred.value(), gt_mask, "rain_mask_loss");
    constexpr double eps = 1e-3;
    Var d = ag::sub(pred, t.constant(gt_mask));
    return ag::mean(ag::sqrt(ag::add_scalar(ag::square(d), eps * eps)));
}

Var sobel_gradients(Tape& t, Var img) {
    Tensor gw = Tensor::from({1, 3, 1, 1}, {kGrayR, kGrayG, kGrayB});
    Var g = ag::conv2d(img, t.constant(gw), Var{});
    Tensor sobel = Tensor::from({2, 1, 3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1,  //
                                               -1, -2, -1, 0, 0, 0, 1, 2, 1});
    return ag::conv2d(g, t.constant(sobel), Var{}, 1, 1);
}

PriorFusion::PriorFusion(ParamStore& store, const std::string& prefix, std::size_t lift_width,
                         std::size_t out_width, Rng& rng)
    : out_width_(out_width) {
    lift_grad_ = make_conv(store, prefix + ".lift_grad", {.in = 2, .out = lift_width, .kernel = 1}, rng);
    lift_prior_ = make_conv(store, prefix + ".lift_prior", {.in = 1, .out = lift_width, .kernel = 1}, rng);
    mix_ = make_conv(store, prefix + ".mix", {.in = 2 * lift_width, .out = out_width, .kernel = 3, .init = Init::zero},
                     rng);
}

std::vector<Var> PriorFusion::forward(Tape& t, Var img, Var prior, std::size_t levels) const {
    if (!mix_.weight) throw ConfigError("prior fusion is not initialized");
    if (prior.value().ndim() != 3 || prior.value().dim(0) != 1 || prior.value().dim(1) != img.value().dim(1) ||
        prior.value().dim(2) != img.value().dim(2))
        throw DimensionError("prior map " + shape_str(prior.shape()) + " does not match image " + shape_str(img.shape()));
    Var grad = lift_grad_(t, sobel_gradients(t, img));
    Var lifted = lift_prior_(t, prior);
    Var mixed = mix_(t, ag::concat0({grad, lifted}));
    std::vector<Var> out{ag::add_scalar(ag::tanh(mixed), 1.0)};
    for (std::size_t l = 1; l < levels; ++l) out.push_back(ag::avg_pool(out.back(), 2));
    return out;
}

}  // namespace rdv2::priors
