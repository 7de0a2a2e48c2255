// Serial vs OpenMP kernel timings. Prints one row per kernel with the best
// of --reps runs and whether both variants agree bitwise.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#include "CLI11.hpp"
#include "rdv2/kernels.hpp"
#include "rdv2/model.hpp"
#include "rdv2/rng.hpp"

using namespace rdv2;
using Clock = std::chrono::steady_clock;

namespace {

double best_ms(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = Clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    }
    return best;
}

void row(const char* name, double serial, double parallel, bool same) {
    std::printf("%-24s %10.2f %10.2f %8.2fx  %s\n", name, serial, parallel, serial / parallel, same ? "yes" : "NO");
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
    rdv2::retain_freed_memory();
    CLI::App app{"Serial vs parallel kernel benchmark"};
    int reps = 3;
    std::size_t size = 128;
    app.add_option("--reps", reps, "Repetitions per measurement")->capture_default_str();
    app.add_option("--size", size, "Spatial extent of the conv and model inputs")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    std::printf("threads: %d (OpenMP %s)\n", kernels::parallel::max_threads(),
                kernels::parallel_enabled() ? "on" : "off");
    std::printf("%-24s %10s %10s %9s  %s\n", "kernel", "serial ms", "omp ms", "speedup", "bitwise");

    {
        const std::size_t n = 256;
        const Tensor a = rng_uniform({n, n}, 1), b = rng_uniform({n, n}, 2);
        std::vector<double> cs(n * n), cp(n * n);
        const double ts = best_ms(reps, [&] { kernels::serial::matmul(a.data().data(), b.data().data(), cs.data(), n, n, n); });
        const double tp = best_ms(reps, [&] { kernels::parallel::matmul(a.data().data(), b.data().data(), cp.data(), n, n, n); });
        row("matmul 256^3", ts, tp, same_bits(cs, cp));
    }

    kernels::ConvGeometry g;
    g.in_channels = g.out_channels = 16;
    g.in_h = g.in_w = g.out_h = g.out_w = size;
    g.kernel_h = g.kernel_w = 3;
    g.padding = 1;
    const Tensor in = rng_uniform({16, size, size}, 3), w = rng_uniform({16, 16, 3, 3}, 4, -0.1, 0.1);
    const Tensor bias = rng_uniform({16}, 5), gout = rng_uniform({16, size, size}, 6);
    {
        std::vector<double> s(in.numel()), p(in.numel());
        const double ts = best_ms(reps, [&] {
            kernels::serial::conv2d_forward(in.data().data(), w.data().data(), bias.data().data(), s.data(), g);
        });
        const double tp = best_ms(reps, [&] {
            kernels::parallel::conv2d_forward(in.data().data(), w.data().data(), bias.data().data(), p.data(), g);
        });
        row("conv3x3 16->16 fwd", ts, tp, same_bits(s, p));
    }
    {
        std::vector<double> s(in.numel()), p(in.numel());
        const double ts = best_ms(reps, [&] { kernels::serial::conv2d_backward_input(gout.data().data(), w.data().data(), s.data(), g); });
        const double tp = best_ms(reps, [&] { kernels::parallel::conv2d_backward_input(gout.data().data(), w.data().data(), p.data(), g); });
        row("conv3x3 grad input", ts, tp, same_bits(s, p));
    }
    {
        std::vector<double> s(w.numel()), p(w.numel());
        const double ts = best_ms(reps, [&] { kernels::serial::conv2d_backward_weight(gout.data().data(), in.data().data(), s.data(), g); });
        const double tp = best_ms(reps, [&] { kernels::parallel::conv2d_backward_weight(gout.data().data(), in.data().data(), p.data(), g); });
        row("conv3x3 grad weight", ts, tp, same_bits(s, p));
    }
    {
        ParamStore store;
        model::RetinexDual net(model::ModelConfig{}, store);
        const Tensor img = rng_uniform({3, size, size}, 7);
        Tensor s, p;
        kernels::set_use_parallel(false);
        const double ts = best_ms(reps, [&] { s = net.restore(img); });
        kernels::set_use_parallel(true);
        const double tp = best_ms(reps, [&] { p = net.restore(img); });
        row("model restore (desk)", ts, tp, same_bits(std::move(s).data(), std::move(p).data()));
    }
    return 0;
}
