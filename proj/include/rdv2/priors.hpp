#pragma once

// Task-specific physical priors and their fusion into per-level modulation
// maps. Images are planar [3 x H x W] tensors with values in [0, 1]; prior
// maps are [1 x H x W] in [0, 1].

#include <string>
#include <vector>

#include "rdv2/autograd.hpp"
#include "rdv2/layers.hpp"
#include "rdv2/tensor.hpp"

namespace rdv2::priors {

enum class Task { derain, lowlight, dehaze, deshadow };

Task parse_task(const std::string& name);
std::string task_name(Task task);

inline constexpr double kLogClamp = 1e-4;        // floor applied before log-chromaticity logs
inline constexpr double kStructureEps = 1e-4;    // denominator guard of the Weberized ratios
inline constexpr double kDegenerateWindow = 1e-8;
inline constexpr double kDegenerateValue = 0.5;  // output for a collapsed normalization window
inline constexpr double kDefaultRainBoost = 5.0;

/// Throws DimensionError unless `img` is [3 x H x W]; ContractError if any value leaves [0, 1].
void validate_image(const Tensor& img);

/// 0.299 R + 0.587 G + 0.114 B, as [1 x H x W].
Tensor gray(const Tensor& img);

/// Per-pixel minimum across the colour channels.
Tensor dark_channel(const Tensor& img);

/// Percentile with linear interpolation between sorted order statistics.
double percentile(std::vector<double> values, double p);

/// Log-chromaticity features of the shadow prior before normalization.
struct LogChromaticity {
    Tensor rho_r, rho_g, rho_b;  // log(I_c / geometric mean), each [1 x H x W]
    Tensor invariant;            // rho_r cos(theta) + rho_b sin(theta)
};
LogChromaticity log_chromaticity(const Tensor& img, double theta);

/// Shadow-resistant prior: the invariant rescaled by its 2nd/98th percentiles and clipped.
Tensor shadow_prior(const Tensor& img, double theta);

/// Gaussian colour model opponent channels [E, E_l, E_ll], as [3 x H x W].
Tensor gaussian_color_model(const Tensor& img);

/// Sampled Gaussian (order 0), its first and second derivative, on [-r, r] with r = ceil(3 sigma).
/// Order 0 sums to one; orders 1 and 2 sum to zero.
std::vector<double> gaussian_kernel(double sigma, int order);

/// Filter responses of E_l (numerator) and E (denominator) for one
/// derivative term at one scale.
struct StructureResponse {
    Tensor numer;
    Tensor denom;
};
/// Responses for every scale, in the order smooth, d/dx, d/dy, d2/dx2, d2/dy2.
/// Derivative responses approximate derivatives of the Gaussian-smoothed
/// channel; borders replicate the edge pixel.
std::vector<StructureResponse> structure_responses(const Tensor& img, const std::vector<double>& sigmas);

/// Unnormalized Weberized invariant: sum over scales and over the responses
/// {smooth, d/dx, d/dy, d2/dx2, d2/dy2} of (response(E_l) / (response(E) + eps))^2.
Tensor weberized_invariant(const Tensor& img, const std::vector<double>& sigmas);
/// Weberized invariant min-max normalized to [0, 1].
Tensor structure_prior(const Tensor& img, const std::vector<double>& sigmas);

/// Ground-truth rain mask: clip(alpha * Gray(|drop - blur|), 0, 1).
Tensor rain_mask_gt(const Tensor& drop, const Tensor& blur, double alpha = kDefaultRainBoost);

/// Min-max rescale to [0, 1]; a window narrower than kDegenerateWindow yields kDegenerateValue.
Tensor normalize_minmax(const Tensor& x);

/// Shadow prior on the tape with a differentiable projection angle.
Var shadow_prior(Tape& t, const Tensor& img, Var theta);

/// Shallow three-level U-net predicting a rain intensity mask in (0, 1).
/// Widths 8/16/32, 3x3 convolutions, average-pool down, bilinear up. The
/// output convolution starts at zero, so an untrained net predicts 0.5.
class RainMaskNet {
public:
    RainMaskNet() = default;
    RainMaskNet(ParamStore& store, const std::string& prefix, Rng& rng);

    Var forward(Tape& t, Var img) const;
    Tensor predict(const Tensor& img) const;

private:
    Conv enc0a_, enc0b_, enc1_, enc2_, dec1_, dec0_, out_;
};

/// Charbonnier loss of a RainMaskNet prediction against its ground-truth mask.
Var rain_mask_loss(Tape& t, const RainMaskNet& net, const Tensor& img, const Tensor& gt_mask);

/// Fuses fixed Sobel gradients of Gray(I) with a prior map into modulation
/// maps P in (0, 2): both are lifted by 1x1 convolutions to `lift_width`
/// channels, concatenated, mixed by a 3x3 convolution to `out_width`
/// channels, and mapped through 1 + tanh. The mixing convolution starts at
/// zero, so P is exactly 1 at initialization.
class PriorFusion {
public:
    PriorFusion() = default;
    PriorFusion(ParamStore& store, const std::string& prefix, std::size_t lift_width, std::size_t out_width,
                Rng& rng);

    /// Level l has extents ceil(H / 2^l) x ceil(W / 2^l) by repeated 2x average pooling.
    std::vector<Var> forward(Tape& t, Var img, Var prior, std::size_t levels) const;

    std::size_t out_width() const { return out_width_; }

private:
    Conv lift_grad_, lift_prior_, mix_;
    std::size_t out_width_ = 0;
};

/// Sobel x/y responses of Gray(I) on the tape, [2 x H x W], zero padded.
Var sobel_gradients(Tape& t, Var img);

}  // namespace rdv2::priors
