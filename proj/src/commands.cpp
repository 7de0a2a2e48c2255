#include "rdv2/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "rdv2/dataset.hpp"
#include "rdv2/errors.hpp"
#include "rdv2/image_io.hpp"
#include "rdv2/losses.hpp"
#include "rdv2/priors.hpp"
#include "rdv2/run_config.hpp"
#include "rdv2/tensor_ops.hpp"
#include "rdv2/tiling.hpp"
#include "rdv2/trainer.hpp"

namespace rdv2::cli {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void print_stats(std::ostream& out, const Tensor& map) {
    out << "min " << fixed(ops::min(map), 6) << " max " << fixed(ops::max(map), 6) << " mean "
        << fixed(ops::mean(map), 6) << '\n';
}

struct LoadedModel {
    ParamStore store;
    std::unique_ptr<model::RetinexDual> net;
};

std::unique_ptr<LoadedModel> load_model(const std::string& path) {
    const train::Loaded l = train::load_checkpoint(path);
    auto m = std::make_unique<LoadedModel>();
    m->net = std::make_unique<model::RetinexDual>(l.config, m->store);
    train::restore_params(l.tensors, m->store, nullptr);
    return m;
}

}  // namespace

std::string format_psnr(double psnr) { return std::isinf(psnr) && psnr > 0 ? "inf" : fixed(psnr, 4); }

int cmd_prior(const PriorArgs& a, std::ostream& out, std::ostream&) {
    const priors::Task task = priors::parse_task(a.task);
    const Tensor img = io::load_image(a.input);
    Tensor map;
    switch (task) {
        case priors::Task::dehaze:
            map = priors::dark_channel(img);
            break;
        case priors::Task::deshadow:
            if (!a.theta) throw UsageError("--theta is required for --task deshadow");
            map = priors::shadow_prior(img, *a.theta);
            break;
        case priors::Task::lowlight:
            map = priors::structure_prior(img, a.sigmas.empty() ? model::ModelConfig{}.sigmas : a.sigmas);
            break;
        case priors::Task::derain: {
            if (!a.blur_input) throw UsageError("--blur-input is required for --task derain");
            const Tensor blur = io::load_image(*a.blur_input);
            map = priors::rain_mask_gt(img, blur, a.alpha.value_or(priors::kDefaultRainBoost));
            break;
        }
    }
    io::save_image(map, a.output);
    print_stats(out, map);
    return 0;
}

int cmd_init(const InitArgs& a, std::ostream& out, std::ostream&) {
    io::RunConfig cfg = a.config ? io::load_run_config(*a.config) : io::RunConfig{};
    if (a.task) cfg.model.task = priors::parse_task(*a.task);
    cfg.model.validate();
    ParamStore store;
    model::RetinexDual net(cfg.model, store);
    train::save_checkpoint(a.output, cfg.model, store, nullptr);
    out << "wrote " << a.output << " (" << store.count() << " parameters, task " << priors::task_name(cfg.model.task)
        << ")\n";
    return 0;
}

int cmd_decompose(const DecomposeArgs& a, std::ostream& out, std::ostream&) {
    auto m = load_model(a.checkpoint);
    if (!m->net->config().dual_branch)
        throw UsageError("--checkpoint holds a single-branch model without a decomposer");
    const Tensor img = io::load_image(a.input);
    Tape t(TapeMode::inference);
    model::RetinexPair p = m->net->decompose(t, img);
    io::save_image(p.reflectance.value(), a.output_r);
    io::save_image(p.illumination.value(), a.output_l);
    out << "reflectance ";
    print_stats(out, p.reflectance.value());
    out << "illumination ";
    print_stats(out, p.illumination.value());
    return 0;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    io::RunConfig cfg = io::load_run_config(a.config);
    if (a.data) cfg.data_dir = *a.data;
    if (a.output) cfg.checkpoint = *a.output;
    if (a.log) cfg.log = *a.log;
    if (a.steps) cfg.train.total_steps = *a.steps;
    cfg.validate();
    if (cfg.data_dir.empty()) throw UsageError("--data (or paths.data) is required");
    if (cfg.checkpoint.empty()) throw UsageError("--out (or paths.checkpoint) is required");

    const auto data = io::load_pairs(cfg.data_dir);
    err << "loaded " << data.size() << " pairs from " << cfg.data_dir << '\n';
    for (const auto& p : data)
        if (p.degraded.dim(1) < cfg.train.patch || p.degraded.dim(2) < cfg.train.patch)
            err << "pair '" << p.name << "' is smaller than the patch; it will be reflect-padded\n";

    ParamStore store;
    model::RetinexDual net(cfg.model, store);
    std::ofstream log_file;
    train::RunOptions opts;
    opts.checkpoint_out = cfg.checkpoint;
    if (a.resume) opts.resume_from = *a.resume;
    if (!cfg.log.empty()) {
        log_file.open(cfg.log);
        if (!log_file) throw std::runtime_error("cannot open log file " + cfg.log);
        opts.log = &log_file;
    }
    const auto records = train::run(net, store, data, cfg.train, cfg.loss, opts);
    if (!records.empty())
        out << "steps " << records.front().step << ".." << records.back().step << " loss "
            << records.front().loss << " -> " << records.back().loss << '\n';
    out << "wrote " << cfg.checkpoint << '\n';
    return 0;
}

int cmd_restore(const RestoreArgs& a, std::ostream& out, std::ostream& err) {
    auto m = load_model(a.checkpoint);
    if (a.task && priors::parse_task(*a.task) != m->net->config().task)
        throw UsageError("--task " + *a.task + " does not match the checkpoint's task " +
                         priors::task_name(m->net->config().task));
    const Tensor img = io::load_image(a.input);
    std::optional<tiling::TileSpec> spec;
    if (a.tile) {
        spec = tiling::TileSpec{*a.tile, a.overlap};
        spec->validate();
    }
    bool padded = false;
    const Tensor restored = tiling::restore_image(*m->net, img, spec ? &*spec : nullptr, &padded);
    if (padded)
        err << "input " << img.dim(1) << "x" << img.dim(2)
            << " is not divisible by 4; restored on a reflect-padded copy and cropped back\n";
    io::save_image(restored, a.output);
    out << "wrote " << a.output << '\n';
    return 0;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream&) {
    const auto names = io::pair_names(a.pred_dir, a.gt_dir);
    if (names.empty()) throw ConfigError("no images to evaluate in " + a.pred_dir);
    std::ofstream report(a.report);
    if (!report) throw std::runtime_error("cannot write report " + a.report);
    report << "name\tpsnr\tssim\n";
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (const auto& n : names) {
        const Tensor pred = io::load_image(std::filesystem::path(a.pred_dir) / (n + ".png"));
        const Tensor gt = io::load_image(std::filesystem::path(a.gt_dir) / (n + ".png"));
        if (pred.shape() != gt.shape())
            throw DimensionError("'" + n + "' has extents " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
        const double p = losses::psnr(pred, gt), s = losses::ssim(pred, gt);
        psnr_sum += p;
        ssim_sum += s;
        report << n << '\t' << format_psnr(p) << '\t' << fixed(s, 6) << '\n';
    }
    const double count = static_cast<double>(names.size());
    const std::string mean_line = "mean\t" + format_psnr(psnr_sum / count) + '\t' + fixed(ssim_sum / count, 6);
    report << mean_line << '\n';
    out << mean_line << '\n';
    return 0;
}

}  // namespace rdv2::cli
