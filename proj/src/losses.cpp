#include "rdv2/losses.hpp"

#include <cmath>
#include <limits>

#include "rdv2/ag.hpp"
#include "rdv2/errors.hpp"
#include "rdv2/tensor_ops.hpp"

namespace rdv2::losses {

void LossWeights::validate() const {
    for (double w : level)
        if (!(w >= 0.0)) throw ConfigError("level weights must be non-negative");
    if (!(ssim >= 0.0) || !(fft >= 0.0) || !(perceptual >= 0.0))
        throw ConfigError("loss weights must be non-negative");
}

Var charbonnier(Var x, Var y, double eps) {
    require_same_shape(x.value(), y.value(), "charbonnier");
    return ag::mean(ag::sqrt(ag::add_scalar(ag::square(ag::sub(x, y)), eps * eps)));
}

std::vector<double> ssim_taps() {
    const int r = static_cast<int>(kSsimWindow / 2);
    std::vector<double> g;
    double total = 0.0;
    for (int t = -r; t <= r; ++t) {
        g.push_back(std::exp(-0.5 * t * t / (kSsimSigma * kSsimSigma)));
        total += g.back();
    }
    for (auto& v : g) v /= total;
    return g;
}

namespace {

Tensor window_weights(std::size_t channels) {
    const auto g = ssim_taps();
    const std::size_t k = kSsimWindow;
    Tensor w(Shape{channels, 1, k, k});
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) w[(c * k + i) * k + j] = g[i] * g[j];
    return w;
}

}  // namespace

Var ssim(Var x, Var y) {
    require_same_shape(x.value(), y.value(), "ssim");
    const Shape& s = x.shape();
    if (s.size() != 3) throw DimensionError("ssim expects [C x H x W], got " + shape_str(s));
    if (s[1] < kSsimWindow || s[2] < kSsimWindow)
        throw ConfigError("ssim needs images of at least " + std::to_string(kSsimWindow) + "x" +
                          std::to_string(kSsimWindow) + ", got " + shape_str(s));
    Tape& t = *x.tape;
    const std::size_t c = s[0];
    Var w = t.constant(window_weights(c));
    auto blur = [&](Var v) { return ag::conv2d(v, w, Var{}, 1, 0, c); };
    Var mx = blur(x), my = blur(y);
    Var mx2 = ag::square(mx), my2 = ag::square(my), mxy = ag::mul(mx, my);
    Var vx = ag::sub(blur(ag::square(x)), mx2);
    Var vy = ag::sub(blur(ag::square(y)), my2);
    Var cxy = ag::sub(blur(ag::mul(x, y)), mxy);
    Var num = ag::mul(ag::add_scalar(ag::mul_scalar(mxy, 2.0), kSsimC1), ag::add_scalar(ag::mul_scalar(cxy, 2.0), kSsimC2));
    Var den = ag::mul(ag::add_scalar(ag::add(mx2, my2), kSsimC1), ag::add_scalar(ag::add(vx, vy), kSsimC2));
    return ag::mean(ag::div(num, den));
}

Var fft_loss(Var x, Var y) {
    require_same_shape(x.value(), y.value(), "fft_loss");
    // the transform is linear, so the spectrum difference is the spectrum of the difference
    return ag::mean(ag::abs(ag::fft2(ag::sub(x, y))));
}

Var total_loss(Tape& t, const std::vector<Var>& outputs, const std::vector<Tensor>& targets,
               const LossWeights& weights, const PerceptualHook& perceptual, std::vector<LevelTerms>* terms) {
    if (outputs.size() != 3 || targets.size() != 3)
        throw ConfigError("total_loss needs 3 output and 3 target levels, got " + std::to_string(outputs.size()) +
                          " and " + std::to_string(targets.size()));
    weights.validate();
    if (terms) terms->assign(3, {});
    Var total;
    for (std::size_t i = 0; i < 3; ++i) {
        Var target = t.constant(targets[i]);
        Var cb = charbonnier(outputs[i], target);
        Var ss = ssim(outputs[i], target);
        Var ff = fft_loss(outputs[i], target);
        Var level = ag::add(cb, ag::mul_scalar(ag::add_scalar(ag::neg(ss), 1.0), weights.ssim));
        level = ag::add(level, ag::mul_scalar(ff, weights.fft));
        double pv = 0.0;
        if (perceptual) {
            Var p = perceptual(t, outputs[i], target);
            pv = p.value()[0];
            level = ag::add(level, ag::mul_scalar(p, weights.perceptual));
        }
        if (terms) (*terms)[i] = {cb.value()[0], ss.value()[0], ff.value()[0], pv};
        Var scaled = ag::mul_scalar(level, weights.level[i]);
        total = total.tape ? ag::add(total, scaled) : scaled;
    }
    return total;
}

std::vector<Tensor> level_targets(const Tensor& clean) {
    return {ops::avg_pool(clean, 4), ops::avg_pool(clean, 2), clean};
}

double psnr(const Tensor& x, const Tensor& y, double peak) {
    require_same_shape(x, y, "psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) se += (x[i] - y[i]) * (x[i] - y[i]);
    const double mse = se / static_cast<double>(x.numel());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& x, const Tensor& y) {
    Tape t(TapeMode::inference);
    return ssim(t.constant(x), t.constant(y)).value()[0];
}

}  // namespace rdv2::losses
