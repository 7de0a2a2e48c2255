#pragma once

// Command implementations behind the command-line tool. Each returns a
// process exit code, prints results to `out` and diagnostics to `err`.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace rdv2::cli {

struct PriorArgs {
    std::string task, input, output;
    std::optional<double> theta, alpha;
    std::vector<double> sigmas;
    std::optional<std::string> blur_input;
};
int cmd_prior(const PriorArgs& a, std::ostream& out, std::ostream& err);

struct InitArgs {
    std::optional<std::string> config;
    std::optional<std::string> task;
    std::string output;
};
/// Writes a freshly initialized (identity) checkpoint.
int cmd_init(const InitArgs& a, std::ostream& out, std::ostream& err);

struct DecomposeArgs {
    std::string checkpoint, input, output_r, output_l;
};
int cmd_decompose(const DecomposeArgs& a, std::ostream& out, std::ostream& err);

struct TrainArgs {
    std::string config;
    std::optional<std::string> data, output, log, resume;
    std::optional<std::size_t> steps;
};
int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err);

struct RestoreArgs {
    std::string checkpoint, input, output;
    std::optional<std::string> task;
    std::optional<std::size_t> tile;
    std::size_t overlap = 32;
};
int cmd_restore(const RestoreArgs& a, std::ostream& out, std::ostream& err);

struct EvalArgs {
    std::string pred_dir, gt_dir, report;
};
int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err);

/// Report line formatting: PSNR with 4 decimals or "inf", SSIM with 6.
std::string format_psnr(double psnr);

}  // namespace rdv2::cli
