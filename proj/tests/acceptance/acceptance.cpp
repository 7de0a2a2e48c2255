// Acceptance suite: one pass/fail line per criterion, non-zero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rdv2/ag.hpp"
#include "rdv2/checkpoint.hpp"
#include "rdv2/losses.hpp"
#include "rdv2/model.hpp"
#include "rdv2/priors.hpp"
#include "rdv2/tensor_ops.hpp"
#include "rdv2/tiling.hpp"
#include "rdv2/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace rdv2;
using namespace rdv2::model;
using Clock = std::chrono::steady_clock;

namespace {

struct Result {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ModelConfig small_config(priors::Task task) {
    ModelConfig c;
    c.base_width = 4;
    c.fia_width = 4;
    c.heads = 2;
    c.samb_blocks = 1;
    c.task = task;
    return c;
}

const priors::Task kTasks[4] = {priors::Task::derain, priors::Task::lowlight, priors::Task::dehaze,
                                priors::Task::deshadow};

// Collects gradient-check reports and remembers the worst one.
struct GradTally {
    double worst = 0.0;
    std::string worst_name;
    std::size_t checks = 0;
    std::vector<std::string> failures;

    void add(const std::string& name, const testing::GradCheckReport& r) {
        ++checks;
        if (r.worst >= worst) {
            worst = r.worst;
            worst_name = name + (r.worst_name.empty() ? "" : "/" + r.worst_name);
        }
        if (!(r.worst < 1e-4)) failures.push_back(name + "/" + r.worst_name + "=" + sci(r.worst));
    }
    void report(Result& res) const {
        res.note(std::to_string(checks) + " checks, worst rel err " + sci(worst) + " (" + worst_name + ")");
        for (const auto& f : failures) res.require(false, f);
    }
};

void check_blocks(GradTally& tally, Injection mode, std::uint64_t seed) {
    const std::string tag = injection_name(mode) + "#" + std::to_string(seed);
    ParamStore store;
    Rng rng(seed);
    PcMsa msa(store, "m", 4, 2, 2, mode, rng);
    PgSamb samb(store, "s", 4, 2, 2, mode, rng);
    PgFcb fcb(store, "f", 4, 2, 2, mode, rng);
    testing::perturb_params(store, seed + 50);
    const Tensor x = rng_randn({4, 8, 8}, seed);
    const Tensor p = rng_uniform({2, 8, 8}, seed + 1, 0.2, 1.8);
    auto prior_of = [&](const std::vector<Var>& v) { return mode == Injection::none ? Var{} : v[1]; };
    tally.add("pc_msa[" + tag + "]", testing::check_inputs(
                                         [&](Tape& t, const std::vector<Var>& v) { return testing::probe(t, msa(t, v[0], prior_of(v)), seed); },
                                         {x, p}));
    tally.add("pg_samb[" + tag + "]", testing::check_inputs(
                                          [&](Tape& t, const std::vector<Var>& v) { return testing::probe(t, samb(t, v[0], prior_of(v)), seed); },
                                          {x, p}));
    tally.add("pg_fcb[" + tag + "]", testing::check_inputs(
                                         [&](Tape& t, const std::vector<Var>& v) { return testing::probe(t, fcb(t, v[0], prior_of(v)), seed); },
                                         {x, p}));
    tally.add("block params[" + tag + "]", testing::check_params(
                                               [&](Tape& t) {
                                                   Var px = mode == Injection::none ? Var{} : t.constant(p);
                                                   return testing::probe(t, fcb(t, samb(t, msa(t, t.constant(x), px), px), px), seed);
                                               },
                                               store));
}

void check_full_forward(GradTally& tally, Injection mode, bool dual, std::uint64_t seed) {
    ModelConfig cfg = small_config(kTasks[seed % 4]);
    cfg.injection = mode;
    cfg.dual_branch = dual;
    ParamStore store;
    RetinexDual net(cfg, store);
    testing::perturb_params(store, seed + 7, 0.3);
    if (store.contains("prior.theta")) store.get("prior.theta").value[0] = 0.4;
    const Tensor img = rng_uniform({3, 8, 8}, seed + 13, 0.05, 0.95);
    const std::string tag = injection_name(mode) + (dual ? "/dual" : "/single") + "/" + priors::task_name(cfg.task) +
                            "#" + std::to_string(seed);
    tally.add("forward[" + tag + "]", testing::check_params(
                                          [&](Tape& t) {
                                              Forward out = net.forward(t, img);
                                              Var s = testing::probe(t, out.outputs[0], seed);
                                              s = ag::add(s, testing::probe(t, out.outputs[1], seed + 1));
                                              return ag::add(s, testing::probe(t, out.outputs[2], seed + 2));
                                          },
                                          store, 1e-5, 2, seed));
}

// ---------------------------------------------------------------- 1
Result gradient_suite() {
    Result res;
    const auto t0 = Clock::now();
    GradTally tally;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const std::uint64_t s = seed * 101;
        auto in = [&](const char* name, const testing::InputFn& f, std::vector<Tensor> xs) {
            tally.add(std::string(name) + "#" + std::to_string(seed), testing::check_inputs(f, std::move(xs)));
        };
        in("matmul", [s](Tape& t, const std::vector<Var>& v) { return testing::probe(t, ag::matmul(v[0], v[1]), s); },
           {rng_randn({3, 4}, s), rng_randn({4, 2}, s + 1)});
        in("conv2d",
           [s](Tape& t, const std::vector<Var>& v) { return testing::probe(t, ag::conv2d(v[0], v[1], v[2], 1, 1, 1), s); },
           {rng_randn({2, 5, 5}, s), rng_randn({3, 2, 3, 3}, s + 1), rng_randn({3}, s + 2)});
        in("conv2d strided grouped",
           [s](Tape& t, const std::vector<Var>& v) { return testing::probe(t, ag::conv2d(v[0], v[1], v[2], 2, 1, 2), s); },
           {rng_randn({4, 6, 5}, s), rng_randn({2, 2, 3, 3}, s + 1), rng_randn({2}, s + 2)});
        in("softmax", [s](Tape& t, const std::vector<Var>& v) { return testing::probe(t, ag::softmax(v[0], 1), s); },
           {rng_randn({3, 5}, s)});
        in("fft2", [s](Tape& t, const std::vector<Var>& v) { return testing::probe(t, ag::fft2(v[0]), s); },
           {rng_randn({2, 4, 6}, s)});
        in("fft2 polar round trip",
           [s](Tape& t, const std::vector<Var>& v) {
               Var z = ag::fft2(v[0]);
               Var re = ag::slice0(z, 0, 1), im = ag::slice0(z, 1, 1);
               Var amp = ag::hypot(re, im), pha = ag::atan2(im, re);
               Var back = ag::concat0({ag::mul(amp, ag::cos(pha)), ag::mul(amp, ag::sin(pha))});
               return testing::probe(t, ag::ifft2(back), s);
           },
           {rng_randn({2, 4, 6}, s)});
        const Tensor x8 = rng_uniform({3, 8, 8}, s), y8 = rng_uniform({3, 8, 8}, s + 1);
        in("charbonnier", [](Tape&, const std::vector<Var>& v) { return losses::charbonnier(v[0], v[1]); }, {x8, y8});
        in("fft_loss", [](Tape&, const std::vector<Var>& v) { return losses::fft_loss(v[0], v[1]); }, {x8, y8});
        in("ssim", [](Tape&, const std::vector<Var>& v) { return losses::ssim(v[0], v[1]); },
           {rng_uniform({3, 16, 16}, s + 2), rng_uniform({3, 16, 16}, s + 3)});
        const Tensor clean = rng_uniform({3, 48, 48}, s + 4);
        const auto targets = losses::level_targets(clean);
        std::vector<Tensor> preds;
        for (std::size_t l = 0; l < 3; ++l)
            preds.push_back(ops::clip(ops::add(targets[l], ops::mul_scalar(rng_randn(targets[l].shape(), s + 5 + l), 0.1)), 0, 1));
        in("total_loss",
           [&](Tape& t, const std::vector<Var>& v) { return losses::total_loss(t, v, targets, losses::LossWeights{}); },
           preds);
        check_blocks(tally, Injection::pcmsa, seed);
        check_full_forward(tally, Injection::pcmsa, true, seed);
    }
    tally.report(res);
    res.require(seconds_since(t0) < 120.0, "runtime over 2 minutes");
    return res;
}

// ---------------------------------------------------------------- 2
Result identity_at_init() {
    Result res;
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 10; ++i) {
        ModelConfig cfg;
        cfg.task = kTasks[i % 4];
        ParamStore store;
        RetinexDual net(cfg, store);
        const Tensor img = rng_uniform({3, 64, 64}, 500 + i);
        worst = std::max(worst, ops::max_abs_diff(net.restore(img), ops::clip(img, kIllumFloor, 1.0)));
    }
    res.note("10 images 64x64, max |restore(I) - clamp(I)| = " + sci(worst));
    res.require(worst < 1e-6, "identity deviation >= 1e-6");
    return res;
}

// ---------------------------------------------------------------- 3
Result prior_invariants() {
    Result res;
    double rho_sum = 0.0, rho_scale = 0.0, weber = 0.0, weber_guarded = 0.0;
    bool dominance = true, symmetric = true, ranges = true, fusion_range = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Tensor img = rng_uniform({3, 24, 20}, 700 + seed);
        const Tensor dc = priors::dark_channel(img);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < dc.numel(); ++i) dominance = dominance && dc[i] <= img[c * dc.numel() + i];

        const Tensor mid = rng_uniform({3, 24, 20}, 710 + seed, 0.1, 0.45);  // 0.5x and 2x stay clear of the clamps
        const auto lc = priors::log_chromaticity(mid, 0.3);
        for (std::size_t i = 0; i < lc.rho_r.numel(); ++i)
            rho_sum = std::max(rho_sum, std::abs(lc.rho_r[i] + lc.rho_g[i] + lc.rho_b[i]));
        for (double s : {0.5, 2.0, 0.7, 1.3}) {
            const Tensor scaled = ops::mul_scalar(mid, s);
            const auto ls = priors::log_chromaticity(scaled, 0.3);
            rho_scale = std::max({rho_scale, ops::max_abs_diff(ls.rho_r, lc.rho_r), ops::max_abs_diff(ls.rho_g, lc.rho_g),
                                  ops::max_abs_diff(ls.rho_b, lc.rho_b), ops::max_abs_diff(ls.invariant, lc.invariant)});
            const auto rb = priors::structure_responses(mid, {1.0, 2.0});
            const auto rs = priors::structure_responses(scaled, {1.0, 2.0});
            for (std::size_t k = 0; k < rb.size(); ++k)
                for (std::size_t i = 0; i < rb[k].numer.numel(); ++i) {
                    if (std::abs(rb[k].denom[i]) < 1e-9) continue;
                    const double r0 = rb[k].numer[i] / rb[k].denom[i], r1 = rs[k].numer[i] / rs[k].denom[i];
                    weber = std::max(weber, std::abs(r1 - r0) / std::max(1.0, std::abs(r0)));
                }
            const Tensor w0 = priors::weberized_invariant(mid, {1.0, 2.0}), w1 = priors::weberized_invariant(scaled, {1.0, 2.0});
            for (std::size_t i = 0; i < w0.numel(); ++i)
                weber_guarded = std::max(weber_guarded, std::abs(w1[i] - w0[i]) / std::max(1.0, std::abs(w0[i])));
        }

        const Tensor other = rng_uniform({3, 24, 20}, 720 + seed);
        symmetric = symmetric && priors::rain_mask_gt(img, other) == priors::rain_mask_gt(other, img);

        ParamStore store;
        Rng rng(seed);
        priors::RainMaskNet rain(store, "rain", rng);
        priors::PriorFusion fusion(store, "fusion", 8, 4, rng);
        for (std::size_t i = 0; i < store.size(); ++i)
            for (auto& v : store[i].value.data()) v = rng.uniform(-0.5, 0.5);
        for (const Tensor& m : {dc, priors::shadow_prior(img, 0.7), priors::structure_prior(img, {1.0, 2.0}),
                                priors::rain_mask_gt(img, other), rain.predict(img)})
            ranges = ranges && ops::min(m) >= 0.0 && ops::max(m) <= 1.0;
        Tape t(TapeMode::inference);
        for (const Var& lv : fusion.forward(t, t.constant(img), t.constant(dc), 3))
            fusion_range = fusion_range && ops::min(lv.value()) > 0.0 && ops::max(lv.value()) < 2.0;
    }
    res.require(dominance, "dark channel exceeds a colour channel");
    res.note("|rho_R+rho_G+rho_B| " + sci(rho_sum));
    res.require(rho_sum < 1e-9, "chromaticity sum");
    res.note("log-chromaticity scale drift " + sci(rho_scale));
    res.require(rho_scale < 1e-9, "log-chromaticity scale invariance");
    res.note("Weberized ratio scale drift " + sci(weber) + " (eps-guarded map " + sci(weber_guarded) + ")");
    res.require(weber < 1e-6, "Weberized ratio scale invariance");
    res.require(symmetric, "rain mask symmetry");
    res.require(ranges, "a prior map left [0, 1]");
    res.require(fusion_range, "P_m left (0, 2)");
    return res;
}

// ---------------------------------------------------------------- 4
Result pcmsa_reductions() {
    Result res;
    bool bitwise = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ParamStore sa, sb;
        Rng ra(seed), rb(seed);
        PcMsa mod(sa, "m", 16, 4, 8, Injection::pcmsa, ra);
        PcMsa plain(sb, "m", 16, 4, 8, Injection::none, rb);
        const Tensor x = rng_randn({16, 12, 10}, seed + 10);
        Tape t;
        const Tensor a = mod(t, t.constant(x), t.constant(Tensor::ones({8, 12, 10}))).value();
        const Tensor b = plain(t, t.constant(x), Var{}).value();
        bitwise = bitwise && a == b;
    }
    res.require(bitwise, "unit prior differs from unmodulated attention");

    ParamStore store;
    Rng rng(4);
    PcMsa msa(store, "m", 2, 1, 2, Injection::pcmsa, rng);
    const double wq[2][2] = {{0.3, -0.2}, {0.5, 0.1}}, wk[2][2] = {{-0.4, 0.25}, {0.15, 0.6}};
    const double wv[2][2] = {{0.7, -0.1}, {0.2, 0.9}}, wp[2][2] = {{1.1, -0.3}, {0.4, 0.8}};
    const double pos_mid[2][3] = {{0.2, -0.5, 0.3}, {0.6, 0.1, -0.4}};
    const double sigma = 0.7, x[2][2] = {{0.9, -0.6}, {0.35, 1.2}}, p[2][2] = {{1.5, 0.4}, {0.8, 1.9}};
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            msa.wq->value[i * 2 + j] = wq[i][j];
            msa.wk->value[i * 2 + j] = wk[i][j];
            msa.wv->value[i * 2 + j] = wv[i][j];
            msa.proj.weight->value[i * 2 + j] = wp[i][j];
        }
    msa.sigma->value[0] = sigma;
    msa.pos.weight->value.fill(0.0);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 3; ++k) msa.pos.weight->value[c * 9 + 3 + k] = pos_mid[c][k];

    double q[2][2], kk[2][2], v[2][2], vm[2][2], a[2][2], o[2][2];
    for (int i = 0; i < 2; ++i)
        for (int n = 0; n < 2; ++n) {
            q[i][n] = wq[i][0] * x[0][n] + wq[i][1] * x[1][n];
            kk[i][n] = wk[i][0] * x[0][n] + wk[i][1] * x[1][n];
            v[i][n] = wv[i][0] * x[0][n] + wv[i][1] * x[1][n];
            vm[i][n] = v[i][n] * p[i][n];
        }
    for (int i = 0; i < 2; ++i) {
        const double s0 = (kk[i][0] * q[0][0] + kk[i][1] * q[0][1]) / sigma;
        const double s1 = (kk[i][0] * q[1][0] + kk[i][1] * q[1][1]) / sigma;
        const double e0 = std::exp(s0 - std::max(s0, s1)), e1 = std::exp(s1 - std::max(s0, s1));
        a[i][0] = e0 / (e0 + e1);
        a[i][1] = e1 / (e0 + e1);
    }
    for (int i = 0; i < 2; ++i) {
        const double pos0 = pos_mid[i][1] * v[i][0] + pos_mid[i][2] * v[i][1];
        const double pos1 = pos_mid[i][0] * v[i][0] + pos_mid[i][1] * v[i][1];
        o[i][0] = a[i][0] * vm[0][0] + a[i][1] * vm[1][0] + pos0;
        o[i][1] = a[i][0] * vm[0][1] + a[i][1] * vm[1][1] + pos1;
    }
    Tape t;
    const Tensor y = msa(t, t.constant(Tensor::from({2, 1, 2}, {x[0][0], x[0][1], x[1][0], x[1][1]})),
                         t.constant(Tensor::from({2, 1, 2}, {p[0][0], p[0][1], p[1][0], p[1][1]})))
                         .value();
    double worst = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int n = 0; n < 2; ++n)
            worst = std::max(worst, std::abs(y[static_cast<std::size_t>(i * 2 + n)] - (wp[i][0] * o[0][n] + wp[i][1] * o[1][n])));
    res.note("unit prior bitwise equal over 5 seeds; hand expansion max err " + sci(worst));
    res.require(worst < 1e-12, "hand expansion");
    return res;
}

// ---------------------------------------------------------------- 5
struct Trained {
    ParamStore store;
    std::unique_ptr<RetinexDual> net;
};
std::unique_ptr<Trained> g_trained;

train::ImagePair overfit_pair() {
    // smooth colour ramps with texture, darkened by half
    Tensor clean(Shape{3, 64, 64});
    const Tensor tex = rng_uniform({3, 64, 64}, 900, -0.15, 0.15);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 64; ++y)
            for (std::size_t x = 0; x < 64; ++x) {
                const std::size_t i = (c * 64 + y) * 64 + x;
                clean[i] = std::clamp(0.5 + 0.3 * std::sin(0.1 * (c + 1) * x + 0.07 * y) + tex[i], 0.0, 1.0);
            }
    return {"overfit", ops::mul_scalar(clean, 0.5), clean};
}

Result overfit() {
    Result res;
    const auto t0 = Clock::now();
    ModelConfig cfg;  // desk configuration
    auto tr = std::make_unique<Trained>();
    tr->net = std::make_unique<RetinexDual>(cfg, tr->store);
    const auto pair = overfit_pair();
    train::TrainConfig tc;
    tc.total_steps = 500;
    tc.batch_size = 1;
    tc.patch = 64;
    tc.hflip = false;
    tc.lr_init = 2e-3;
    tc.lr_final = 2e-5;
    train::Trainer trainer(*tr->net, tr->store, tc, losses::LossWeights{});
    const double initial = trainer.evaluate(pair);
    for (std::size_t s = 0; s < tc.total_steps; ++s) trainer.step({pair});
    const double final_loss = trainer.evaluate(pair);
    const double secs = seconds_since(t0);
    res.note("loss " + sci(initial) + " -> " + sci(final_loss) + " (ratio " + sci(final_loss / initial) + ") in " +
             sci(secs) + " s");
    res.require(final_loss <= 0.1 * initial, "final loss above 0.1x initial");
    res.require(secs < 900.0, "runtime over 15 minutes");
    g_trained = std::move(tr);
    return res;
}

// ---------------------------------------------------------------- 6
Result ablation_axes() {
    Result res;
    GradTally tally;
    std::size_t trained = 0;
    std::vector<double> finals;
    for (Injection mode : {Injection::pcmsa, Injection::concat, Injection::none}) {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) check_blocks(tally, mode, seed);
        for (bool dual : {true, false}) {
            for (std::uint64_t seed = 1; seed <= 5; ++seed) check_full_forward(tally, mode, dual, seed);
            ModelConfig cfg;
            cfg.injection = mode;
            cfg.dual_branch = dual;
            cfg.task = kTasks[trained % 4];
            ParamStore store;
            RetinexDual net(cfg, store);
            train::TrainConfig tc;
            tc.total_steps = 50;
            tc.patch = 64;
            Tensor clean = rng_uniform({3, 80, 72}, 950 + trained, 0.1, 0.9);
            std::vector<train::ImagePair> data{{"a", ops::mul_scalar(clean, 0.4), clean}};
            try {
                const auto recs = train::run(net, store, data, tc, losses::LossWeights{}, {});
                bool finite = recs.size() == 50;
                for (const auto& r : recs) finite = finite && std::isfinite(r.loss);
                res.require(finite, injection_name(mode) + (dual ? "/dual" : "/single") + " training");
                finals.push_back(recs.back().loss);
            } catch (const std::exception& e) {
                res.require(false, injection_name(mode) + (dual ? "/dual" : "/single") + ": " + e.what());
            }
            ++trained;
        }
    }
    tally.report(res);
    std::string losses_txt = "50-step final losses";
    for (double f : finals) losses_txt += " " + sci(f);
    res.note(losses_txt);
    return res;
}

// ---------------------------------------------------------------- 7
Result metric_fidelity() {
    Result res;
    const Tensor x = rng_uniform({3, 32, 32}, 31), low = rng_uniform({3, 32, 32}, 32, 0.0, 0.85);
    const double ssim_xx = losses::ssim(x, x);
    const double psnr_01 = losses::psnr(low, ops::add_scalar(low, 0.1));
    Tape t;
    const double cb = losses::charbonnier(t.constant(x), t.constant(x)).value()[0];
    const double ff = losses::fft_loss(t.constant(x), t.constant(x)).value()[0];
    train::TrainConfig tc;
    tc.total_steps = 1000;
    res.note("SSIM(x,x)-1 " + sci(ssim_xx - 1.0) + ", PSNR " + sci(psnr_01) + " dB");
    res.require(std::abs(ssim_xx - 1.0) <= 1e-9, "SSIM(x,x)");
    res.require(std::abs(psnr_01 - 20.0) <= 1e-6, "PSNR at 0.1");
    res.require(cb == 1e-3, "Charbonnier(x,x) == 1e-3");
    res.require(ff == 0.0, "fft_loss(x,x) == 0");
    res.require(train::lr_at(0, tc) == 2e-5, "lr(0)");
    res.require(train::lr_at(1000, tc) == 1e-7, "lr(T)");
    return res;
}

// ---------------------------------------------------------------- 8
std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Result determinism() {
    Result res;
    const auto dir = std::filesystem::temp_directory_path() / "rdv2_acceptance";
    std::filesystem::create_directories(dir);
    std::vector<train::ImagePair> data;
    for (std::uint64_t i = 0; i < 2; ++i) {
        Tensor clean = rng_uniform({3, 72, 76}, 960 + i, 0.05, 0.95);
        data.push_back({"p" + std::to_string(i), ops::mul_scalar(clean, 0.5), clean});
    }
    train::TrainConfig tc;
    tc.total_steps = 4;
    tc.lr_init = 1e-3;
    tc.lr_final = 1e-5;
    tc.seed = 77;
    auto full_run = [&](const std::filesystem::path& out) {
        ParamStore store;
        RetinexDual net(ModelConfig{}, store);
        train::RunOptions o;
        o.checkpoint_out = out;
        train::run(net, store, data, tc, losses::LossWeights{}, o);
    };
    full_run(dir / "a.ckpt");
    full_run(dir / "b.ckpt");
    const auto a = file_bytes(dir / "a.ckpt");
    res.require(!a.empty() && a == file_bytes(dir / "b.ckpt"), "two fixed-seed runs differ");

    const auto tensors = ckpt::read_file(dir / "a.ckpt");
    res.require(ckpt::encode(tensors) == a, "checkpoint re-encode differs");
    {
        ParamStore store;
        RetinexDual net(train::config_from(tensors), store);
        train::OptimState st;
        train::restore_params(tensors, store, &st);
        train::save_checkpoint(dir / "c.ckpt", net.config(), store, &st);
        res.require(file_bytes(dir / "c.ckpt") == a, "load/save round trip differs");
    }
    {
        ParamStore store;
        RetinexDual net(ModelConfig{}, store);
        train::Trainer tr(net, store, tc, losses::LossWeights{});
        tr.step(data);
        tr.step(data);
        train::save_checkpoint(dir / "half.ckpt", net.config(), store, &tr.state());
    }
    {
        ParamStore store;
        RetinexDual net(ModelConfig{}, store);
        train::RunOptions o;
        o.checkpoint_out = dir / "resumed.ckpt";
        o.resume_from = dir / "half.ckpt";
        train::run(net, store, data, tc, losses::LossWeights{}, o);
    }
    res.require(file_bytes(dir / "resumed.ckpt") == a, "resume at step 2 differs from the uninterrupted run");
    res.note("checkpoint " + std::to_string(a.size()) + " bytes; repeat, round trip and resume compared bytewise");
    return res;
}

// ---------------------------------------------------------------- 9
double time_msa(const PcMsa& msa, const Tensor& x, const Tensor& p) {
    const auto t0 = Clock::now();
    Tape t(TapeMode::inference);
    Var y = msa(t, t.constant(x), t.constant(p));
    (void)y;
    return seconds_since(t0);
}

// Best of interleaved rounds, so load drift hits every size alike.
std::vector<double> time_msa_sizes(const PcMsa& msa, const std::vector<std::pair<Tensor, Tensor>>& inputs, int rounds) {
    std::vector<double> best(inputs.size(), 1e300);
    for (int r = 0; r < rounds; ++r)
        for (std::size_t i = 0; i < inputs.size(); ++i)
            best[i] = std::min(best[i], time_msa(msa, inputs[i].first, inputs[i].second));
    return best;
}

Result uhd_plumbing() {
    Result res;
    if (!g_trained) {
        res.require(false, "no trained model from the overfit run");
        return res;
    }
    const RetinexDual& net = *g_trained->net;
    Tensor img(Shape{3, 512, 512});
    const Tensor tex = rng_uniform({3, 512, 512}, 990, -0.1, 0.1);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 512; ++y)
            for (std::size_t x = 0; x < 512; ++x) {
                const std::size_t i = (c * 512 + y) * 512 + x;
                img[i] = std::clamp(0.25 + 0.15 * std::sin(0.02 * (c + 1) * x + 0.013 * y) + tex[i], 0.0, 1.0);
            }
    const auto t0 = Clock::now();
    const Tensor whole = net.restore(img);
    const double t_whole = seconds_since(t0);
    const auto t1 = Clock::now();
    const Tensor tiled = tiling::tiled_restore(net, img, tiling::TileSpec{256, 32});
    const double t_tiled = seconds_since(t1);
    const double agree = losses::psnr(tiled, whole);
    const double gain = losses::psnr(whole, ops::clip(img, kIllumFloor, 1.0));
    res.note("trained model: tiled vs untiled " + sci(agree) + " dB (correction vs input " + sci(gain) +
             " dB; untiled " + sci(t_whole) + " s, tiled " + sci(t_tiled) + " s)");
    res.require(agree > 45.0, "tiled vs untiled PSNR <= 45 dB");

    ParamStore store;
    Rng rng(3);
    PcMsa msa(store, "m", 16, 4, 8, Injection::pcmsa, rng);
    std::vector<std::pair<Tensor, Tensor>> inputs;
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{128, 128}, {128, 256}, {256, 256}})
        inputs.emplace_back(rng_randn({16, h, w}, h + w), rng_uniform({8, h, w}, h * w, 0.5, 1.5));
    time_msa_sizes(msa, inputs, 1);
    const auto times = time_msa_sizes(msa, inputs, 15);
    const double ta = times[0], tb = times[1], tcs = times[2];
    const double ratio = tb / ta;
    res.note("pc_msa 128x128 -> 128x256 time ratio " + sci(ratio) + " (256x256: " + sci(tcs / ta) + "x for 4x pixels)");
    res.require(ratio <= 2.2, "pc_msa time ratio above 2.2 when pixels double");
    return res;
}

// ---------------------------------------------------------------- 10
Result fia_lightness() {
    Result res;
    ParamStore store;
    RetinexDual net(ModelConfig{}, store);
    const std::size_t total = store.count(), fia = store.count("fia.");
    const double share = static_cast<double>(fia) / static_cast<double>(total);
    res.note("illumination branch " + std::to_string(fia) + " of " + std::to_string(total) + " parameters (" +
             sci(100.0 * share) + "%)");
    res.require(fia > 0 && share < 0.10, "illumination branch share >= 10%");
    return res;
}

}  // namespace

int main() {
    rdv2::retain_freed_memory();
    struct Criterion {
        int id;
        const char* title;
        std::function<Result()> run;
    };
    const std::vector<Criterion> all{
        {1, "gradient suite", gradient_suite},
        {2, "identity at initialization", identity_at_init},
        {3, "prior invariants", prior_invariants},
        {4, "PC-MSA reductions", pcmsa_reductions},
        {7, "metric fidelity", metric_fidelity},
        {10, "illumination-branch lightness", fia_lightness},
        {8, "determinism and persistence", determinism},
        {5, "overfit a single pair", overfit},
        {9, "UHD plumbing", uhd_plumbing},
        {6, "ablation axes", ablation_axes},
    };
    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = Clock::now();
        Result r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r.require(false, std::string("exception: ") + e.what());
        }
        std::printf("criterion %2d %s %-30s %6.1f s  %s\n", c.id, r.pass ? "PASS" : "FAIL", c.title, seconds_since(t0),
                    r.detail.c_str());
        std::fflush(stdout);
        failed += r.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
    return failed == 0 ? 0 : 1;
}
