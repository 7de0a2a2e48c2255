#pragma once

// AdamW with cosine-annealed learning rate, aligned patch sampling, and the
// training loop with checkpointing.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rdv2/autograd.hpp"
#include "rdv2/checkpoint.hpp"
#include "rdv2/losses.hpp"
#include "rdv2/model.hpp"
#include "rdv2/rng.hpp"

namespace rdv2::train {

struct TrainConfig {
    double lr_init = 2e-5;
    double lr_final = 1e-7;
    std::size_t total_steps = 1000;
    std::size_t batch_size = 2;
    std::size_t patch = 64;
    std::uint64_t seed = 1;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    bool hflip = true;
    std::size_t checkpoint_every = 0;  // 0 writes only the final checkpoint

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

/// lr_final + (lr_init - lr_final) (1 + cos(pi step / total)) / 2, for 0 <= step <= total.
double lr_at(std::size_t step, const TrainConfig& cfg);

struct OptimState {
    std::vector<Tensor> m, v;  // aligned with the parameter store
    std::size_t step = 0;      // completed optimizer steps

    void init(const ParamStore& store);
};

/// One decoupled-weight-decay Adam update from the gradients held in `store`.
void adamw_step(ParamStore& store, OptimState& state, double lr, const TrainConfig& cfg);

struct ImagePair {
    std::string name;
    Tensor degraded, clean;
};

struct PatchInfo {
    std::size_t y0 = 0, x0 = 0;
    bool flipped = false;
    bool padded = false;
};

/// Crops the same random window from both images (with an optional shared
/// horizontal flip). Images smaller than the patch are reflect-padded first.
ImagePair sample_patch(const ImagePair& pair, std::size_t patch, Rng& rng, bool hflip, PatchInfo* info = nullptr);

struct StepRecord {
    std::size_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
    std::vector<losses::LevelTerms> terms;  // averaged over the batch, coarse to fine
};

/// Writes model configuration, parameters and optimizer state.
ckpt::NamedTensors snapshot(const model::ModelConfig& mc, const ParamStore& store, const OptimState* state);
void save_checkpoint(const std::filesystem::path& path, const model::ModelConfig& mc, const ParamStore& store,
                     const OptimState* state);

struct Loaded {
    model::ModelConfig config;
    ckpt::NamedTensors tensors;
};
Loaded load_checkpoint(const std::filesystem::path& path);
model::ModelConfig config_from(const ckpt::NamedTensors& tensors);
/// Copies parameters (and optimizer state when `state` is given) out of a checkpoint.
/// Throws CorruptFileError when a parameter is missing or has the wrong shape.
void restore_params(const ckpt::NamedTensors& tensors, ParamStore& store, OptimState* state);

class Trainer {
public:
    Trainer(const model::RetinexDual& net, ParamStore& store, TrainConfig cfg, losses::LossWeights weights);

    /// One optimizer step on a batch drawn from `data`. Throws TrainingError on a non-finite loss.
    StepRecord step(const std::vector<ImagePair>& data);

    /// Loss of one pair without updating anything.
    double evaluate(const ImagePair& pair, std::vector<losses::LevelTerms>* terms = nullptr) const;

    OptimState& state() { return state_; }
    const TrainConfig& config() const { return cfg_; }

private:
    const model::RetinexDual& net_;
    ParamStore& store_;
    TrainConfig cfg_;
    losses::LossWeights weights_;
    OptimState state_;
};

struct RunOptions {
    std::optional<std::filesystem::path> checkpoint_out;
    std::optional<std::filesystem::path> resume_from;
    std::ostream* log = nullptr;  // tab-separated metrics, one line per step
    std::function<void(const StepRecord&)> on_step;
};

/// Trains until cfg.total_steps completed steps. Throws TrainingError on an
/// empty dataset or a non-finite loss.
std::vector<StepRecord> run(const model::RetinexDual& net, ParamStore& store, const std::vector<ImagePair>& data,
                            const TrainConfig& cfg, const losses::LossWeights& weights, const RunOptions& opts);

void write_log_header(std::ostream& os);
void write_log_line(std::ostream& os, const StepRecord& rec);

}  // namespace rdv2::train
