#include <iostream>

#include "CLI11.hpp"
#include "rdv2/commands.hpp"
#include "rdv2/errors.hpp"
#include "rdv2/tensor.hpp"

using namespace rdv2::cli;

int main(int argc, char** argv) {
    rdv2::retain_freed_memory();
    CLI::App app{"Dual-branch Retinex image restoration"};
    app.require_subcommand(1);
    int code = 0;

    PriorArgs prior;
    auto* p = app.add_subcommand("prior", "Extract a task prior map");
    p->add_option("--task", prior.task, "derain | lowlight | dehaze | deshadow")->required();
    p->add_option("--input", prior.input, "RGB PNG (the rainy image for derain)")->required();
    p->add_option("--output", prior.output, "Grey PNG")->required();
    p->add_option("--theta", prior.theta, "Projection angle in radians (deshadow)");
    p->add_option("--alpha", prior.alpha, "Mask boost (derain)");
    p->add_option("--sigma", prior.sigmas, "Gaussian scales (lowlight)");
    p->add_option("--blur-input", prior.blur_input, "Rain-free background (derain)");
    p->callback([&] { code = cmd_prior(prior, std::cout, std::cerr); });

    InitArgs init;
    auto* i = app.add_subcommand("init", "Write an untrained checkpoint");
    i->add_option("--config", init.config, "Run configuration file");
    i->add_option("--task", init.task, "Overrides the configured task");
    i->add_option("--out", init.output, "Checkpoint path")->required();
    i->callback([&] { code = cmd_init(init, std::cout, std::cerr); });

    DecomposeArgs dec;
    auto* d = app.add_subcommand("decompose", "Split an image into reflectance and illumination");
    d->add_option("--checkpoint", dec.checkpoint)->required();
    d->add_option("--input", dec.input)->required();
    d->add_option("--output-r", dec.output_r)->required();
    d->add_option("--output-l", dec.output_l)->required();
    d->callback([&] { code = cmd_decompose(dec, std::cout, std::cerr); });

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train on a degraded/ + clean/ directory");
    t->add_option("--config", tr.config, "Run configuration file")->required();
    t->add_option("--data", tr.data, "Dataset root");
    t->add_option("--out", tr.output, "Final checkpoint path");
    t->add_option("--log", tr.log, "Tab-separated metrics log");
    t->add_option("--resume", tr.resume, "Checkpoint to continue from");
    t->add_option("--steps", tr.steps, "Overrides train.total_steps");
    t->callback([&] { code = cmd_train(tr, std::cout, std::cerr); });

    RestoreArgs rs;
    auto* r = app.add_subcommand("restore", "Restore one image");
    r->add_option("--checkpoint", rs.checkpoint)->required();
    r->add_option("--task", rs.task, "Must match the checkpoint");
    r->add_option("--input", rs.input)->required();
    r->add_option("--output", rs.output)->required();
    r->add_option("--tile", rs.tile, "Tile size in pixels (untiled when omitted)");
    r->add_option("--overlap", rs.overlap, "Tile overlap in pixels")->capture_default_str();
    r->callback([&] { code = cmd_restore(rs, std::cout, std::cerr); });

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "PSNR/SSIM report over matching file names");
    e->add_option("--pred-dir", ev.pred_dir)->required();
    e->add_option("--gt-dir", ev.gt_dir)->required();
    e->add_option("--report", ev.report)->required();
    e->callback([&] { code = cmd_eval(ev, std::cout, std::cerr); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    } catch (const rdv2::UsageError& err) {
        std::cerr << "usage error: " << err.what() << '\n';
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return code;
}
