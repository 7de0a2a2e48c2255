#include "rdv2/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>

#include "rdv2/ag.hpp"
#include "rdv2/errors.hpp"
#include "rdv2/tensor_ops.hpp"

namespace rdv2::train {

void TrainConfig::validate() const {
    if (!(lr_init > 0.0) || !(lr_final >= 0.0) || lr_final > lr_init)
        throw ConfigError("learning rates need 0 <= lr_final <= lr_init and lr_init > 0");
    if (total_steps == 0) throw ConfigError("total_steps must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (patch == 0 || patch % 4 != 0) throw ConfigError("patch must be a positive multiple of 4");
    if (patch < 4 * losses::kSsimWindow)
        throw ConfigError("patch must be at least " + std::to_string(4 * losses::kSsimWindow) +
                          " so the coarsest level holds an SSIM window");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
    if (step > cfg.total_steps)
        throw ContractError("lr_at: step " + std::to_string(step) + " exceeds total_steps " +
                            std::to_string(cfg.total_steps));
    if (step == 0) return cfg.lr_init;
    if (step == cfg.total_steps) return cfg.lr_final;
    const double c = std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(cfg.total_steps));
    return cfg.lr_final + (cfg.lr_init - cfg.lr_final) * (1.0 + c) / 2.0;
}

void OptimState::init(const ParamStore& store) {
    m.clear();
    v.clear();
    for (std::size_t i = 0; i < store.size(); ++i) {
        m.emplace_back(store[i].value.shape());
        v.emplace_back(store[i].value.shape());
    }
    step = 0;
}

void adamw_step(ParamStore& store, OptimState& state, double lr, const TrainConfig& cfg) {
    if (state.m.size() != store.size()) state.init(store);
    const double t = static_cast<double>(state.step + 1);
    const double c1 = 1.0 - std::pow(cfg.beta1, t), c2 = 1.0 - std::pow(cfg.beta2, t);
    const double decay = 1.0 - lr * cfg.weight_decay;
    for (std::size_t i = 0; i < store.size(); ++i) {
        Parameter& p = store[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        require_same_shape(m, p.value, "adamw moments");
        for (std::size_t k = 0; k < p.value.numel(); ++k) {
            const double g = p.grad[k];
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
            const double mh = m[k] / c1, vh = v[k] / c2;
            // p - lr (mh / (sqrt(vh) + eps) + wd p), with the decay factored out
            p.value[k] = p.value[k] * decay - lr * mh / (std::sqrt(vh) + cfg.adam_eps);
        }
    }
    ++state.step;
}

namespace {

Tensor flip_w(const Tensor& x) {
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out(x.shape());
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) out[(ch * h + y) * w + xx] = x[(ch * h + y) * w + (w - 1 - xx)];
    return out;
}

}  // namespace

ImagePair sample_patch(const ImagePair& pair, std::size_t patch, Rng& rng, bool hflip, PatchInfo* info) {
    require_same_shape(pair.degraded, pair.clean, "sample_patch");
    PatchInfo local;
    Tensor deg = pair.degraded, cln = pair.clean;
    const std::size_t h = deg.dim(1), w = deg.dim(2);
    if (h < patch || w < patch) {
        const std::size_t ph = h < patch ? patch - h : 0, pw = w < patch ? patch - w : 0;
        deg = ops::reflect_pad(deg, ph, pw);
        cln = ops::reflect_pad(cln, ph, pw);
        local.padded = true;
    }
    local.y0 = static_cast<std::size_t>(rng.below(deg.dim(1) - patch + 1));
    local.x0 = static_cast<std::size_t>(rng.below(deg.dim(2) - patch + 1));
    ImagePair out{pair.name, ops::crop(deg, local.y0, local.x0, patch, patch),
                  ops::crop(cln, local.y0, local.x0, patch, patch)};
    if (hflip && rng.below(2) == 1) {
        out.degraded = flip_w(out.degraded);
        out.clean = flip_w(out.clean);
        local.flipped = true;
    }
    if (info) *info = local;
    return out;
}

namespace {

const char* const kParamPrefix = "param.";
const char* const kMomentM = "opt.m.";
const char* const kMomentV = "opt.v.";

double scalar_of(const std::map<std::string, const Tensor*>& index, const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw CorruptFileError("checkpoint lacks '" + name + "'");
    if (it->second->numel() != 1) throw CorruptFileError("checkpoint entry '" + name + "' is not a scalar");
    return (*it->second)[0];
}

std::map<std::string, const Tensor*> index_of(const ckpt::NamedTensors& tensors) {
    std::map<std::string, const Tensor*> idx;
    for (const auto& [name, t] : tensors) idx[name] = &t;
    return idx;
}

std::size_t count_of(const std::map<std::string, const Tensor*>& index, const std::string& name) {
    const double v = scalar_of(index, name);
    if (!(v >= 0.0) || v != std::floor(v)) throw CorruptFileError("checkpoint entry '" + name + "' is not a count");
    return static_cast<std::size_t>(v);
}

}  // namespace

ckpt::NamedTensors snapshot(const model::ModelConfig& mc, const ParamStore& store, const OptimState* state) {
    ckpt::NamedTensors out;
    auto put = [&](const std::string& name, double v) { out.emplace_back(name, Tensor::scalar(v)); };
    put("config.base_width", static_cast<double>(mc.base_width));
    put("config.levels", static_cast<double>(mc.levels));
    put("config.samb_blocks", static_cast<double>(mc.samb_blocks));
    put("config.fia_width", static_cast<double>(mc.fia_width));
    put("config.heads", static_cast<double>(mc.heads));
    put("config.injection", static_cast<double>(mc.injection));
    put("config.dual_branch", mc.dual_branch ? 1.0 : 0.0);
    put("config.task", static_cast<double>(mc.task));
    put("config.theta", mc.theta);
    out.emplace_back("config.sigmas", Tensor(Shape{mc.sigmas.size()}, mc.sigmas));
    out.emplace_back("config.seed", Tensor(Shape{2}, {static_cast<double>(mc.seed >> 32),
                                                       static_cast<double>(mc.seed & 0xFFFFFFFFu)}));
    for (std::size_t i = 0; i < store.size(); ++i) out.emplace_back(kParamPrefix + store[i].name, store[i].value);
    if (state && state->m.size() == store.size()) {
        put("opt.step", static_cast<double>(state->step));
        for (std::size_t i = 0; i < store.size(); ++i) {
            out.emplace_back(kMomentM + store[i].name, state->m[i]);
            out.emplace_back(kMomentV + store[i].name, state->v[i]);
        }
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const model::ModelConfig& mc, const ParamStore& store,
                     const OptimState* state) {
    ckpt::write_file(path, snapshot(mc, store, state));
}

model::ModelConfig config_from(const ckpt::NamedTensors& tensors) {
    const auto idx = index_of(tensors);
    model::ModelConfig mc;
    mc.base_width = count_of(idx, "config.base_width");
    mc.levels = count_of(idx, "config.levels");
    mc.samb_blocks = count_of(idx, "config.samb_blocks");
    mc.fia_width = count_of(idx, "config.fia_width");
    mc.heads = count_of(idx, "config.heads");
    const std::size_t inj = count_of(idx, "config.injection");
    const std::size_t task = count_of(idx, "config.task");
    if (inj > 2) throw CorruptFileError("checkpoint injection code out of range");
    if (task > 3) throw CorruptFileError("checkpoint task code out of range");
    mc.injection = static_cast<model::Injection>(inj);
    mc.task = static_cast<priors::Task>(task);
    mc.dual_branch = scalar_of(idx, "config.dual_branch") != 0.0;
    mc.theta = scalar_of(idx, "config.theta");
    auto sig = idx.find("config.sigmas");
    if (sig == idx.end()) throw CorruptFileError("checkpoint lacks 'config.sigmas'");
    mc.sigmas.assign(sig->second->data().begin(), sig->second->data().end());
    auto seed = idx.find("config.seed");
    if (seed == idx.end() || seed->second->numel() != 2) throw CorruptFileError("checkpoint lacks 'config.seed'");
    mc.seed = (static_cast<std::uint64_t>((*seed->second)[0]) << 32) | static_cast<std::uint64_t>((*seed->second)[1]);
    try {
        mc.validate();
    } catch (const ConfigError& e) {
        throw CorruptFileError(std::string("checkpoint model configuration is invalid: ") + e.what());
    }
    return mc;
}

Loaded load_checkpoint(const std::filesystem::path& path) {
    Loaded l;
    l.tensors = ckpt::read_file(path);
    l.config = config_from(l.tensors);
    return l;
}

void restore_params(const ckpt::NamedTensors& tensors, ParamStore& store, OptimState* state) {
    const auto idx = index_of(tensors);
    auto fetch = [&](const std::string& name, const Shape& shape) -> const Tensor& {
        auto it = idx.find(name);
        if (it == idx.end()) throw CorruptFileError("checkpoint lacks '" + name + "'");
        if (it->second->shape() != shape)
            throw CorruptFileError("checkpoint entry '" + name + "' has shape " + shape_str(it->second->shape()) +
                                   ", expected " + shape_str(shape));
        return *it->second;
    };
    // Validate everything before touching the store.
    std::vector<const Tensor*> values, ms, vs;
    for (std::size_t i = 0; i < store.size(); ++i) values.push_back(&fetch(kParamPrefix + store[i].name, store[i].value.shape()));
    std::size_t step = 0;
    if (state) {
        step = count_of(idx, "opt.step");
        for (std::size_t i = 0; i < store.size(); ++i) {
            ms.push_back(&fetch(kMomentM + store[i].name, store[i].value.shape()));
            vs.push_back(&fetch(kMomentV + store[i].name, store[i].value.shape()));
        }
    }
    for (std::size_t i = 0; i < store.size(); ++i) store[i].value = values[i]->cast(DType::f64);
    if (state) {
        state->init(store);
        for (std::size_t i = 0; i < store.size(); ++i) {
            state->m[i] = ms[i]->cast(DType::f64);
            state->v[i] = vs[i]->cast(DType::f64);
        }
        state->step = step;
    }
}

Trainer::Trainer(const model::RetinexDual& net, ParamStore& store, TrainConfig cfg, losses::LossWeights weights)
    : net_(net), store_(store), cfg_(cfg), weights_(weights) {
    cfg_.validate();
    weights_.validate();
    state_.init(store_);
}

namespace {

void accumulate_terms(std::vector<losses::LevelTerms>& acc, const std::vector<losses::LevelTerms>& add, double w) {
    if (acc.empty()) acc.assign(add.size(), {});
    for (std::size_t i = 0; i < add.size(); ++i) {
        acc[i].charbonnier += w * add[i].charbonnier;
        acc[i].ssim += w * add[i].ssim;
        acc[i].fft += w * add[i].fft;
        acc[i].perceptual += w * add[i].perceptual;
    }
}

}  // namespace

StepRecord Trainer::step(const std::vector<ImagePair>& data) {
    if (data.empty()) throw TrainingError("training dataset is empty");
    if (state_.step >= cfg_.total_steps)
        throw ContractError("training already completed " + std::to_string(state_.step) + " steps");
    StepRecord rec;
    rec.step = state_.step;
    rec.lr = lr_at(state_.step, cfg_);
    Rng rng(mix_seed(cfg_.seed, state_.step));
    store_.zero_grad();
    const double inv = 1.0 / static_cast<double>(cfg_.batch_size);
    for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
        const ImagePair& src = data[static_cast<std::size_t>(rng.below(data.size()))];
        ImagePair patch = sample_patch(src, cfg_.patch, rng, cfg_.hflip);
        Tape t;
        model::Forward fw = net_.forward(t, patch.degraded);
        std::vector<losses::LevelTerms> terms;
        Var loss = losses::total_loss(t, {fw.outputs.begin(), fw.outputs.end()}, losses::level_targets(patch.clean),
                                      weights_, {}, &terms);
        const double lv = loss.value()[0];
        if (!std::isfinite(lv))
            throw TrainingError("non-finite loss at step " + std::to_string(state_.step) + " (sample '" + src.name +
                                "')");
        rec.loss += inv * lv;
        accumulate_terms(rec.terms, terms, inv);
        t.backward(ag::mul_scalar(loss, inv));
    }
    adamw_step(store_, state_, rec.lr, cfg_);
    return rec;
}

double Trainer::evaluate(const ImagePair& pair, std::vector<losses::LevelTerms>* terms) const {
    Tape t(TapeMode::inference);
    model::Forward fw = net_.forward(t, pair.degraded);
    return losses::total_loss(t, {fw.outputs.begin(), fw.outputs.end()}, losses::level_targets(pair.clean), weights_,
                              {}, terms)
        .value()[0];
}

void write_log_header(std::ostream& os) {
    os << "step\tlr\tloss";
    for (const char* term : {"cb", "ssim", "fft"})
        for (int l = 1; l <= 3; ++l) os << '\t' << term << l;
    os << '\n';
}

void write_log_line(std::ostream& os, const StepRecord& rec) {
    os << rec.step << '\t' << std::setprecision(9) << rec.lr << '\t' << rec.loss;
    for (int which = 0; which < 3; ++which)
        for (const auto& t : rec.terms) os << '\t' << (which == 0 ? t.charbonnier : which == 1 ? t.ssim : t.fft);
    os << '\n' << std::flush;
}

std::vector<StepRecord> run(const model::RetinexDual& net, ParamStore& store, const std::vector<ImagePair>& data,
                            const TrainConfig& cfg, const losses::LossWeights& weights, const RunOptions& opts) {
    if (data.empty()) throw TrainingError("training dataset is empty");
    Trainer tr(net, store, cfg, weights);
    if (opts.resume_from) {
        const Loaded l = load_checkpoint(*opts.resume_from);
        restore_params(l.tensors, store, &tr.state());
        if (tr.state().step > cfg.total_steps)
            throw ConfigError("checkpoint is at step " + std::to_string(tr.state().step) + ", beyond total_steps " +
                              std::to_string(cfg.total_steps));
    }
    if (opts.log) write_log_header(*opts.log);
    std::vector<StepRecord> records;
    while (tr.state().step < cfg.total_steps) {
        StepRecord rec = tr.step(data);
        if (opts.log) write_log_line(*opts.log, rec);
        if (opts.on_step) opts.on_step(rec);
        records.push_back(std::move(rec));
        const std::size_t done = tr.state().step;
        if (opts.checkpoint_out && cfg.checkpoint_every && done % cfg.checkpoint_every == 0 && done < cfg.total_steps) {
            auto periodic = *opts.checkpoint_out;
            periodic.replace_filename(opts.checkpoint_out->stem().string() + "_step" + std::to_string(done) +
                                      opts.checkpoint_out->extension().string());
            save_checkpoint(periodic, net.config(), store, &tr.state());
        }
    }
    if (opts.checkpoint_out) save_checkpoint(*opts.checkpoint_out, net.config(), store, &tr.state());
    return records;
}

}  // namespace rdv2::train
