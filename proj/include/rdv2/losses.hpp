#pragma once

// Restoration objective and image quality metrics. Images are [C x H x W]
// with unit dynamic range.

#include <array>
#include <functional>
#include <vector>

#include "rdv2/autograd.hpp"
#include "rdv2/tensor.hpp"

namespace rdv2::losses {

inline constexpr double kCharbonnierEps = 1e-3;
inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct LossWeights {
    std::array<double, 3> level{0.25, 0.5, 1.0};  // coarse to fine
    double ssim = 0.5;
    double fft = 1e-4;
    double perceptual = 0.5;

    /// Throws ConfigError on a negative weight.
    void validate() const;
};

/// Optional perceptual term: (prediction, target) -> scalar on the same tape.
/// When empty the term contributes 0.
using PerceptualHook = std::function<Var(Tape&, Var, Var)>;

/// Mean of sqrt((x - y)^2 + eps^2).
Var charbonnier(Var x, Var y, double eps = kCharbonnierEps);

/// Gaussian-windowed SSIM over valid windows, averaged over windows and channels.
/// Throws ConfigError when the image is smaller than the window.
Var ssim(Var x, Var y);

/// Mean absolute difference of the real and imaginary spectrum parts, per channel.
Var fft_loss(Var x, Var y);

struct LevelTerms {
    double charbonnier = 0.0, ssim = 0.0, fft = 0.0, perceptual = 0.0;
};

/// Sum over levels of w_i (cb + l_ssim (1 - S_i) + l_fft fft + l_p p).
/// Throws ConfigError unless there are exactly three outputs and three targets.
Var total_loss(Tape& t, const std::vector<Var>& outputs, const std::vector<Tensor>& targets,
               const LossWeights& weights, const PerceptualHook& perceptual = {},
               std::vector<LevelTerms>* terms = nullptr);

/// Targets for the three output levels: 4x and 2x average-pooled, then full.
std::vector<Tensor> level_targets(const Tensor& clean);

/// 10 log10(peak^2 / MSE); +infinity when the images are identical.
double psnr(const Tensor& x, const Tensor& y, double peak = 1.0);
double ssim(const Tensor& x, const Tensor& y);

/// Normalized 1-D Gaussian taps of the SSIM window.
std::vector<double> ssim_taps();

}  // namespace rdv2::losses
