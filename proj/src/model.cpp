#include "rdv2/model.hpp"

#include <numeric>

#include "rdv2/ag.hpp"
#include "rdv2/errors.hpp"

namespace rdv2::model {

Injection parse_injection(const std::string& name) {
    if (name == "pcmsa") return Injection::pcmsa;
    if (name == "concat") return Injection::concat;
    if (name == "none") return Injection::none;
    throw ConfigError("unknown injection mode '" + name + "' (expected pcmsa, concat or none)");
}

std::string injection_name(Injection mode) {
    switch (mode) {
        case Injection::pcmsa: return "pcmsa";
        case Injection::concat: return "concat";
        case Injection::none: return "none";
    }
    return "?";
}

void ModelConfig::validate() const {
    if (levels != 3) throw ConfigError("levels must be 3");
    if (base_width == 0 || fia_width == 0 || heads == 0 || samb_blocks == 0)
        throw ConfigError("widths, heads and block counts must be positive");
    if (base_width % heads != 0)
        throw ConfigError("base_width " + std::to_string(base_width) + " is not divisible by heads " +
                          std::to_string(heads));
    if (dual_branch && fia_width % heads != 0)
        throw ConfigError("fia_width " + std::to_string(fia_width) + " is not divisible by heads " +
                          std::to_string(heads));
    if (sigmas.empty()) throw ConfigError("at least one structure scale is required");
    for (double s : sigmas)
        if (!(s > 0.0)) throw ConfigError("structure scales must be positive");
}

std::size_t ModelConfig::prior_width() const {
    return dual_branch ? std::gcd(base_width, fia_width) : base_width;
}

namespace {

Var maybe_pool(Var x, std::size_t factor) {
    if (!x.tape || factor == 1) return x;
    return ag::avg_pool(x, factor);
}

}  // namespace

Decomposer::Decomposer(ParamStore& store, const std::string& prefix, std::size_t width, Rng& rng) {
    c0_ = make_conv(store, prefix + ".c0", {.in = 3, .out = width, .kernel = 3}, rng);
    c1_ = make_conv(store, prefix + ".c1", {.in = width, .out = width, .kernel = 3}, rng);
    c2_ = make_conv(store, prefix + ".c2", {.in = width, .out = 3, .kernel = 3, .init = Init::zero}, rng);
}

RetinexPair Decomposer::operator()(Tape& t, Var img) const {
    Var h = ag::silu(c0_(t, img));
    h = ag::silu(c1_(t, h));
    Var l = ag::add_scalar(ag::mul_scalar(ag::sigmoid(c2_(t, h)), 1.0 - kIllumFloor), kIllumFloor);
    Var r = ag::div(ag::clip(img, kIllumFloor, 1.0), l);
    return {r, l};
}

PcMsa::PcMsa(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t heads,
             std::size_t prior_width, Injection mode, Rng& rng)
    : width_(width), heads_(heads), prior_width_(prior_width), mode_(mode) {
    if (heads == 0 || width % heads != 0) throw ConfigError("attention width must be divisible by the head count");
    if (mode == Injection::pcmsa && (prior_width == 0 || width % prior_width != 0))
        throw ConfigError("prior width must divide the attention width");
    wq = &make_matrix(store, prefix + ".wq", width, width, rng);
    wk = &make_matrix(store, prefix + ".wk", width, width, rng);
    wv = &make_matrix(store, prefix + ".wv", width, width, rng);
    sigma = &store.add(prefix + ".sigma", Tensor::ones({heads}));
    if (mode == Injection::concat)
        inject = make_conv(store, prefix + ".inject", {.in = width + prior_width, .out = width, .bias = false}, rng);
    pos = make_conv(store, prefix + ".pos", {.in = width, .out = width, .kernel = 3, .groups = width, .bias = false},
                    rng);
    proj = make_conv(store, prefix + ".proj", {.in = width, .out = width, .bias = false}, rng);
}

Var PcMsa::operator()(Tape& t, Var x, Var prior) const {
    const Shape& s = x.shape();
    if (s.size() != 3 || s[0] != width_)
        throw DimensionError("attention expects [" + std::to_string(width_) + " x H x W], got " + shape_str(s));
    const std::size_t h = s[1], w = s[2], n = h * w, d = width_ / heads_;
    if (mode_ != Injection::none) {
        if (!prior.tape) throw ContractError("attention needs a prior map in this injection mode");
        const Shape& ps = prior.shape();
        if (ps.size() != 3 || ps[0] != prior_width_ || ps[1] != h || ps[2] != w)
            throw DimensionError("prior map " + shape_str(ps) + " does not match features " + shape_str(s));
    }

    Var xc = ag::reshape(x, {width_, n});
    Var q = ag::matmul(t.param(*wq), xc);
    Var k = ag::matmul(t.param(*wk), xc);
    Var v = ag::matmul(t.param(*wv), xc);
    Var vs = ag::reshape(v, {width_, h, w});

    Var vm = v;
    if (mode_ == Injection::pcmsa)
        vm = ag::mul(v, ag::reshape(ag::repeat0(prior, width_ / prior_width_), {width_, n}));
    else if (mode_ == Injection::concat)
        vm = ag::reshape(inject(t, ag::concat0({vs, prior})), {width_, n});

    Var sg = ag::magnitude_floor(t.param(*sigma), kSigmaFloor);
    std::vector<Var> maps;
    maps.reserve(heads_);
    attention_.clear();
    for (std::size_t i = 0; i < heads_; ++i) {
        Var qh = ag::slice0(q, i * d, d);
        Var kh = ag::slice0(k, i * d, d);
        Var scores = ag::div_sv(ag::matmul(kh, ag::transpose(qh)), ag::element(sg, i));
        maps.push_back(ag::softmax(scores, 1));
        attention_.push_back(maps.back().value());
    }
    // one pass over V' for all heads; off-diagonal zeros leave each head's sums unchanged
    Var o = ag::reshape(ag::matmul(ag::block_diag(maps), vm), {width_, h, w});
    o = ag::add(o, pos(t, vs));
    return proj(t, o);
}

PgSamb::PgSamb(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t heads,
               std::size_t prior_width, Injection mode, Rng& rng) {
    for (std::size_t i = 0; i < 3; ++i) {
        const std::string tag = prefix + ".s" + std::to_string(i);
        msa[i] = PcMsa(store, tag + ".msa", width, heads, prior_width, mode, rng);
        local[i] = make_conv(store, tag + ".local", {.in = width, .out = width, .kernel = 3, .groups = width}, rng);
    }
    lambda = &store.add(prefix + ".lambda", Tensor::zeros({width}));
    fuse = make_conv(store, prefix + ".fuse", {.in = 4 * width, .out = width, .init = Init::zero}, rng);
}

Var PgSamb::operator()(Tape& t, Var f, Var prior) const {
    const Shape s = f.shape();
    const std::size_t c = s[0], h = s[1], w = s[2];
    std::vector<Var> parts;
    for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t factor = std::size_t{1} << i;
        Var y = local[i](t, msa[i](t, maybe_pool(f, factor), maybe_pool(prior, factor)));
        if (factor > 1) y = ag::upsample_bilinear(y, h, w);
        parts.push_back(y);
    }
    Var scan = ag::linear_scan(ag::reshape(f, {c, h * w}), t.param(*lambda));
    parts.push_back(ag::reshape(scan, {c, h, w}));
    return ag::add(f, fuse(t, ag::concat0(parts)));
}

PgFcb::PgFcb(ParamStore& store, const std::string& prefix, std::size_t width, std::size_t heads,
             std::size_t prior_width, Injection mode, Rng& rng) {
    msa = PcMsa(store, prefix + ".msa", width, heads, prior_width, mode, rng);
    amp1 = make_conv(store, prefix + ".amp1", {.in = width, .out = width, .bias = false}, rng);
    amp2 = make_conv(store, prefix + ".amp2", {.in = width, .out = width, .bias = false, .init = Init::zero}, rng);
    pha1 = make_conv(store, prefix + ".pha1", {.in = width, .out = width, .bias = false}, rng);
    pha2 = make_conv(store, prefix + ".pha2", {.in = width, .out = width, .bias = false, .init = Init::zero}, rng);
    gate = &store.add(prefix + ".gate", Tensor::zeros({width}));
}

Var PgFcb::operator()(Tape& t, Var f, Var prior) const {
    const Shape s = f.shape();
    const std::size_t c = s[0], h = s[1], w = s[2];
    Var z = ag::fft2(msa(t, f, prior));
    Var re = ag::reshape(ag::slice0(z, 0, 1), {c, h, w});
    Var im = ag::reshape(ag::slice0(z, 1, 1), {c, h, w});
    Var amp = ag::hypot(re, im);
    Var pha = ag::atan2(im, re);
    amp = ag::add(amp, amp2(t, ag::tanh(amp1(t, amp))));
    pha = ag::add(pha, pha2(t, ag::tanh(pha1(t, pha))));
    Var re2 = ag::reshape(ag::mul(amp, ag::cos(pha)), {1, c, h, w});
    Var im2 = ag::reshape(ag::mul(amp, ag::sin(pha)), {1, c, h, w});
    Var back = ag::ifft2(ag::concat0({re2, im2}));
    Var correction = ag::reshape(ag::slice0(back, 0, 1), {c, h, w});
    return ag::add(f, ag::scale_channels(correction, t.param(*gate)));
}

template <class Block>
UBranch<Block>::UBranch(ParamStore& store, const std::string& prefix, std::array<std::size_t, 3> widths,
                        std::size_t blocks, std::size_t heads, std::size_t prior_width, Injection mode, Rng& rng) {
    const auto [w0, w1, w2] = widths;
    auto stage = [&](std::vector<Block>& dst, const std::string& name, std::size_t width) {
        for (std::size_t b = 0; b < blocks; ++b)
            dst.emplace_back(store, prefix + "." + name + std::to_string(b), width, heads, prior_width, mode, rng);
    };
    stem_ = make_conv(store, prefix + ".stem", {.in = 3, .out = w0, .kernel = 3}, rng);
    stage(enc0_, "enc0_", w0);
    down0_ = make_conv(store, prefix + ".down0", {.in = w0, .out = w1, .kernel = 3, .stride = 2}, rng);
    stage(enc1_, "enc1_", w1);
    down1_ = make_conv(store, prefix + ".down1", {.in = w1, .out = w2, .kernel = 3, .stride = 2}, rng);
    stage(mid_, "mid", w2);
    head2_ = make_conv(store, prefix + ".head2", {.in = w2, .out = 3, .kernel = 3, .init = Init::zero}, rng);
    up1_ = make_conv(store, prefix + ".up1", {.in = w2 + w1, .out = w1}, rng);
    stage(dec1_, "dec1_", w1);
    head1_ = make_conv(store, prefix + ".head1", {.in = w1, .out = 3, .kernel = 3, .init = Init::zero}, rng);
    up0_ = make_conv(store, prefix + ".up0", {.in = w1 + w0, .out = w0}, rng);
    stage(dec0_, "dec0_", w0);
    head0_ = make_conv(store, prefix + ".head0", {.in = w0, .out = 3, .kernel = 3, .init = Init::zero}, rng);
}

template <class Block>
std::array<Var, 3> UBranch<Block>::operator()(Tape& t, Var x, const std::vector<Var>& priors) const {
    auto level = [&](std::size_t l) { return priors.empty() ? Var{} : priors[l]; };
    auto run = [&](const std::vector<Block>& stage, Var h, std::size_t l) {
        for (const auto& b : stage) h = b(t, h, level(l));
        return h;
    };
    Var e0 = run(enc0_, stem_(t, x), 0);
    Var e1 = run(enc1_, down0_(t, e0), 1);
    Var m = run(mid_, down1_(t, e1), 2);
    Var out2 = head2_(t, m);
    Var u1 = ag::upsample_bilinear(m, e1.shape()[1], e1.shape()[2]);
    Var d1 = run(dec1_, up1_(t, ag::concat0({u1, e1})), 1);
    Var out1 = head1_(t, d1);
    Var u0 = ag::upsample_bilinear(d1, e0.shape()[1], e0.shape()[2]);
    Var d0 = run(dec0_, up0_(t, ag::concat0({u0, e0})), 0);
    return {out2, out1, head0_(t, d0)};
}

template class UBranch<PgSamb>;
template class UBranch<PgFcb>;

RetinexDual::RetinexDual(const ModelConfig& config, ParamStore& store) : config_(config) {
    config_.validate();
    Rng rng(config_.seed);
    const std::size_t c = config_.base_width, pw = config_.prior_width();
    if (config_.dual_branch) decomposer_ = Decomposer(store, "decomp", c, rng);
    if (config_.injection != Injection::none) {
        if (config_.task == priors::Task::derain) rain_ = priors::RainMaskNet(store, "rain", rng);
        if (config_.task == priors::Task::deshadow) theta_ = &store.add("prior.theta", Tensor::scalar(config_.theta));
        fusion_ = priors::PriorFusion(store, "fusion", pw, pw, rng);
    }
    samba_ = UBranch<PgSamb>(store, "samba", {c, 2 * c, 4 * c}, config_.samb_blocks, config_.heads, pw,
                             config_.injection, rng);
    if (config_.dual_branch) {
        const std::size_t f = config_.fia_width;
        fia_ = UBranch<PgFcb>(store, "fia", {f, f, f}, config_.samb_blocks, config_.heads, pw, config_.injection,
                              rng);
    }
}

Var RetinexDual::prior_map(Tape& t, const Tensor& img) const {
    priors::validate_image(img);
    switch (config_.task) {
        case priors::Task::derain:
            if (config_.injection != Injection::none) return rain_.forward(t, t.constant(img));
            return t.constant(Tensor(Shape{1, img.dim(1), img.dim(2)}, 0.5));
        case priors::Task::deshadow:
            return priors::shadow_prior(t, img, theta_ ? t.param(*theta_) : t.constant(Tensor::scalar(config_.theta)));
        case priors::Task::lowlight: return t.constant(priors::structure_prior(img, config_.sigmas));
        case priors::Task::dehaze: return t.constant(priors::dark_channel(img));
    }
    throw ContractError("unhandled task");
}

Tensor RetinexDual::prior_map(const Tensor& img) const {
    Tape t(TapeMode::inference);
    return prior_map(t, img).value();
}

RetinexPair RetinexDual::decompose(Tape& t, const Tensor& img) const {
    if (!config_.dual_branch) throw ConfigError("decomposition is disabled when dual_branch is off");
    priors::validate_image(img);
    return decomposer_(t, t.constant(img));
}

Forward RetinexDual::forward(Tape& t, const Tensor& img) const {
    priors::validate_image(img);
    Var prior = config_.injection == Injection::none ? Var{} : prior_map(t, img);
    return forward(t, img, prior);
}

Forward RetinexDual::forward(Tape& t, const Tensor& img, Var prior) const {
    priors::validate_image(img);
    const std::size_t h = img.dim(1), w = img.dim(2);
    if (h % 4 != 0 || w % 4 != 0)
        throw DimensionError("image extents " + std::to_string(h) + "x" + std::to_string(w) +
                             " are not divisible by 4; reflect-pad the input first");
    Var in = t.constant(img);
    std::vector<Var> levels;
    if (config_.injection != Injection::none) {
        if (!prior.tape) throw ContractError("forward needs a prior map in this injection mode");
        levels = fusion_.forward(t, in, prior, 3);
    }

    Forward out;
    out.prior = prior;
    if (!config_.dual_branch) {
        Var base = ag::clip(in, kIllumFloor, 1.0);
        auto s = samba_(t, base, levels);
        for (std::size_t k = 0; k < 3; ++k) out.outputs[k] = ag::add(maybe_pool(base, std::size_t{4} >> k), s[k]);
        return out;
    }
    out.pair = decomposer_(t, in);
    auto s = samba_(t, out.pair.reflectance, levels);
    auto f = fia_(t, out.pair.illumination, levels);
    for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t factor = std::size_t{4} >> k;
        Var r = ag::add(maybe_pool(out.pair.reflectance, factor), s[k]);
        Var l = ag::add(maybe_pool(out.pair.illumination, factor), f[k]);
        out.outputs[k] = ag::mul(r, l);
    }
    return out;
}

Tensor RetinexDual::restore(const Tensor& img) const {
    Tape t(TapeMode::inference);
    return forward(t, img).outputs[2].value();
}

Tensor RetinexDual::restore(const Tensor& img, const Tensor& prior) const {
    Tape t(TapeMode::inference);
    return forward(t, img, t.constant(prior)).outputs[2].value();
}

}  // namespace rdv2::model
