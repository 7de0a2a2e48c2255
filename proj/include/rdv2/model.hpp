#pragma once

// The dual-branch Retinex restoration network. A decomposer splits the input
// into reflectance and illumination; a reflectance branch of multi-scale
// attention blocks and a light illumination branch of Fourier correction
// blocks predict additive corrections at three resolutions, each modulated by
// a task prior through channel-transposed attention.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rdv2/autograd.hpp"
#include "rdv2/layers.hpp"
#include "rdv2/priors.hpp"
#include "rdv2/tensor.hpp"

namespace rdv2::model {

/// How the prior enters attention: multiplying the values, concatenated and
/// projected, or not at all.
enum class Injection { pcmsa, concat, none };

Injection parse_injection(const std::string& name);
std::string injection_name(Injection mode);

inline constexpr double kIllumFloor = 1e-3;
inline constexpr double kSigmaFloor = 1e-4;

struct ModelConfig {
    std::size_t base_width = 16;
    std::size_t levels = 3;
    std::size_t samb_blocks = 2;
    std::size_t fia_width = 8;
    std::size_t heads = 4;
    Injection injection = Injection::pcmsa;
    bool dual_branch = true;
    priors::Task task = priors::Task::lowlight;
    // prior extraction settings
    double theta = 0.0;
    std::vector<double> sigmas{1.0, 2.0};
    std::uint64_t seed = 1;

    /// Throws ConfigError on inconsistent widths or head counts.
    void validate() const;
    /// Channel width of the modulation maps; divides every branch width.
    std::size_t prior_width() const;
};

struct RetinexPair {
    Var reflectance;
    Var illumination;
};

class Decomposer {
public:
    Decomposer() = default;
    Decomposer(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng);
    /// L = eps + (1 - eps) sigmoid(stack(I)), R = clamp(I, eps, 1) / L.
    RetinexPair operator()(Tape& t, Var img) const;

private:
    Conv c0_, c1_, c2_;
};

/// Channel-transposed multi-head attention with prior-modulated values.
class PcMsa {
public:
    PcMsa() = default;
    PcMsa(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t heads,
          std::size_t prior_width, Injection mode, Rng& rng);

    /// x: [C x H x W]; prior: [Cp x H x W] with Cp dividing C, ignored in `none` mode.
    Var operator()(Tape& t, Var x, Var prior) const;

    /// Per-head score matrices of the last call, [C/h x C/h] each (post-softmax).
    const std::vector<Tensor>& last_attention() const { return attention_; }

    Parameter* wq = nullptr;
    Parameter* wk = nullptr;
    Parameter* wv = nullptr;
    Parameter* sigma = nullptr;
    Conv pos, proj, inject;

private:
    std::size_t width_ = 0, heads_ = 0, prior_width_ = 0;
    Injection mode_ = Injection::pcmsa;
    mutable std::vector<Tensor> attention_;
};

/// Reflectance block: attention at scales 1, 1/2, 1/4 plus a per-channel
/// linear recurrence over the row-major flattened map, fused by a 1x1
/// convolution into a residual.
class PgSamb {
public:
    PgSamb() = default;
    PgSamb(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t heads,
           std::size_t prior_width, Injection mode, Rng& rng);
    Var operator()(Tape& t, Var f, Var prior) const;

    std::array<PcMsa, 3> msa;
    std::array<Conv, 3> local;
    Parameter* lambda = nullptr;
    Conv fuse;
};

/// Illumination block: attention, then additive amplitude and phase stacks in
/// the 2-D spectrum, returned through a per-channel gate.
class PgFcb {
public:
    PgFcb() = default;
    PgFcb(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t heads,
          std::size_t prior_width, Injection mode, Rng& rng);
    Var operator()(Tape& t, Var f, Var prior) const;

    PcMsa msa;
    Conv amp1, amp2, pha1, pha2;
    Parameter* gate = nullptr;
};

/// Three-level U-shape emitting a 3-channel correction per level, coarse first.
template <class Block>
class UBranch {
public:
    UBranch() = default;
    /// widths[l] is the feature width at level l.
    UBranch(ParamStore& store, const std::string& prefix, std::array<std::size_t, 3> widths, std::size_t blocks,
            std::size_t heads, std::size_t prior_width, Injection mode, Rng& rng);
    std::array<Var, 3> operator()(Tape& t, Var x, const std::vector<Var>& priors) const;

private:
    Conv stem_, down0_, down1_, up1_, up0_, head2_, head1_, head0_;
    std::vector<Block> enc0_, enc1_, mid_, dec1_, dec0_;
};

struct Forward {
    std::array<Var, 3> outputs;  // coarse to fine: H/4, H/2, H
    RetinexPair pair;            // empty when the decomposer is disabled
    Var prior;
};

class RetinexDual {
public:
    RetinexDual(const ModelConfig& config, ParamStore& store);

    const ModelConfig& config() const { return config_; }

    /// Task prior on the tape, [1 x H x W].
    Var prior_map(Tape& t, const Tensor& img) const;
    Tensor prior_map(const Tensor& img) const;

    /// img must be [3 x H x W] with H, W divisible by 4.
    Forward forward(Tape& t, const Tensor& img) const;
    /// Same, with an externally computed prior (used by tiled inference).
    Forward forward(Tape& t, const Tensor& img, Var prior) const;

    /// Full-resolution output value.
    Tensor restore(const Tensor& img) const;
    Tensor restore(const Tensor& img, const Tensor& prior) const;

    RetinexPair decompose(Tape& t, const Tensor& img) const;

private:
    ModelConfig config_;
    Decomposer decomposer_;
    priors::RainMaskNet rain_;
    Parameter* theta_ = nullptr;
    priors::PriorFusion fusion_;
    UBranch<PgSamb> samba_;
    UBranch<PgFcb> fia_;
};

}  // namespace rdv2::model
