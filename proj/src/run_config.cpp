#include "rdv2/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "rdv2/errors.hpp"

namespace rdv2::io {

namespace {

struct BadValue {
    std::string why;
};

std::string fmt(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

double to_double(const std::string& s) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
        throw BadValue{"'" + s + "' is not a finite number"};
    return v;
}

std::uint64_t to_u64(const std::string& s) {
    std::uint64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw BadValue{"'" + s + "' is not a non-negative integer"};
    return v;
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw BadValue{"'" + s + "' is not a boolean (true/false)"};
}

std::vector<double> to_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
        if (b == std::string::npos) throw BadValue{"empty list element in '" + s + "'"};
        out.push_back(to_double(item.substr(b, e - b + 1)));
    }
    if (out.empty()) throw BadValue{"empty list"};
    return out;
}

std::string fmt_list(const auto& values) {
    std::string out;
    for (double v : values) out += (out.empty() ? "" : ",") + fmt(v);
    return out;
}

double positive(double v) {
    if (!(v > 0.0)) throw BadValue{"must be positive"};
    return v;
}
double non_negative(double v) {
    if (!(v >= 0.0)) throw BadValue{"must be non-negative"};
    return v;
}
double unit_open(double v) {
    if (!(v >= 0.0 && v < 1.0)) throw BadValue{"must lie in [0, 1)"};
    return v;
}
std::size_t count(const std::string& s, std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t v = to_u64(s);
    if (v < lo || v > hi) throw BadValue{"must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"};
    return static_cast<std::size_t>(v);
}

struct Key {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::map<std::string, Key>& keys() {
    static const std::map<std::string, Key> table = [] {
        std::map<std::string, Key> k;
        // model
        k["model.base_width"] = {[](RunConfig& c, const std::string& s) { c.model.base_width = count(s, 1, 4096); },
                                 [](const RunConfig& c) { return fmt(c.model.base_width); }};
        k["model.samb_blocks"] = {[](RunConfig& c, const std::string& s) { c.model.samb_blocks = count(s, 1, 64); },
                                  [](const RunConfig& c) { return fmt(c.model.samb_blocks); }};
        k["model.fia_width"] = {[](RunConfig& c, const std::string& s) { c.model.fia_width = count(s, 1, 4096); },
                                [](const RunConfig& c) { return fmt(c.model.fia_width); }};
        k["model.heads"] = {[](RunConfig& c, const std::string& s) { c.model.heads = count(s, 1, 4096); },
                            [](const RunConfig& c) { return fmt(c.model.heads); }};
        k["model.injection"] = {
            [](RunConfig& c, const std::string& s) {
                try {
                    c.model.injection = model::parse_injection(s);
                } catch (const ConfigError& e) {
                    throw BadValue{e.what()};
                }
            },
            [](const RunConfig& c) { return model::injection_name(c.model.injection); }};
        k["model.dual_branch"] = {[](RunConfig& c, const std::string& s) { c.model.dual_branch = to_bool(s); },
                                  [](const RunConfig& c) { return fmt(c.model.dual_branch); }};
        k["model.seed"] = {[](RunConfig& c, const std::string& s) { c.model.seed = to_u64(s); },
                           [](const RunConfig& c) { return std::to_string(c.model.seed); }};
        k["task"] = {[](RunConfig& c, const std::string& s) {
                         try {
                             c.model.task = priors::parse_task(s);
                         } catch (const ConfigError& e) {
                             throw BadValue{e.what()};
                         }
                     },
                     [](const RunConfig& c) { return priors::task_name(c.model.task); }};
        // priors
        k["prior.theta"] = {[](RunConfig& c, const std::string& s) { c.model.theta = to_double(s); },
                            [](const RunConfig& c) { return fmt(c.model.theta); }};
        k["prior.alpha"] = {[](RunConfig& c, const std::string& s) { c.rain_alpha = positive(to_double(s)); },
                            [](const RunConfig& c) { return fmt(c.rain_alpha); }};
        k["prior.sigmas"] = {[](RunConfig& c, const std::string& s) {
                                 auto v = to_list(s);
                                 for (double x : v) positive(x);
                                 c.model.sigmas = v;
                             },
                             [](const RunConfig& c) { return fmt_list(c.model.sigmas); }};
        // training
        k["train.lr_init"] = {[](RunConfig& c, const std::string& s) { c.train.lr_init = positive(to_double(s)); },
                              [](const RunConfig& c) { return fmt(c.train.lr_init); }};
        k["train.lr_final"] = {[](RunConfig& c, const std::string& s) { c.train.lr_final = non_negative(to_double(s)); },
                               [](const RunConfig& c) { return fmt(c.train.lr_final); }};
        k["train.total_steps"] = {[](RunConfig& c, const std::string& s) { c.train.total_steps = count(s, 1, 1u << 30); },
                                  [](const RunConfig& c) { return fmt(c.train.total_steps); }};
        k["train.batch_size"] = {[](RunConfig& c, const std::string& s) { c.train.batch_size = count(s, 1, 1024); },
                                 [](const RunConfig& c) { return fmt(c.train.batch_size); }};
        k["train.patch"] = {[](RunConfig& c, const std::string& s) {
                                c.train.patch = count(s, 4 * losses::kSsimWindow, 1u << 16);
                                if (c.train.patch % 4 != 0) throw BadValue{"must be divisible by 4"};
                            },
                            [](const RunConfig& c) { return fmt(c.train.patch); }};
        k["train.seed"] = {[](RunConfig& c, const std::string& s) { c.train.seed = to_u64(s); },
                           [](const RunConfig& c) { return std::to_string(c.train.seed); }};
        k["train.weight_decay"] = {
            [](RunConfig& c, const std::string& s) { c.train.weight_decay = non_negative(to_double(s)); },
            [](const RunConfig& c) { return fmt(c.train.weight_decay); }};
        k["train.beta1"] = {[](RunConfig& c, const std::string& s) { c.train.beta1 = unit_open(to_double(s)); },
                            [](const RunConfig& c) { return fmt(c.train.beta1); }};
        k["train.beta2"] = {[](RunConfig& c, const std::string& s) { c.train.beta2 = unit_open(to_double(s)); },
                            [](const RunConfig& c) { return fmt(c.train.beta2); }};
        k["train.adam_eps"] = {[](RunConfig& c, const std::string& s) { c.train.adam_eps = positive(to_double(s)); },
                               [](const RunConfig& c) { return fmt(c.train.adam_eps); }};
        k["train.hflip"] = {[](RunConfig& c, const std::string& s) { c.train.hflip = to_bool(s); },
                            [](const RunConfig& c) { return fmt(c.train.hflip); }};
        k["train.checkpoint_every"] = {
            [](RunConfig& c, const std::string& s) { c.train.checkpoint_every = count(s, 0, 1u << 30); },
            [](const RunConfig& c) { return fmt(c.train.checkpoint_every); }};
        // loss
        k["loss.level_weights"] = {[](RunConfig& c, const std::string& s) {
                                       auto v = to_list(s);
                                       if (v.size() != 3) throw BadValue{"needs exactly 3 comma-separated weights"};
                                       for (std::size_t i = 0; i < 3; ++i) c.loss.level[i] = non_negative(v[i]);
                                   },
                                   [](const RunConfig& c) { return fmt_list(c.loss.level); }};
        k["loss.ssim"] = {[](RunConfig& c, const std::string& s) { c.loss.ssim = non_negative(to_double(s)); },
                          [](const RunConfig& c) { return fmt(c.loss.ssim); }};
        k["loss.fft"] = {[](RunConfig& c, const std::string& s) { c.loss.fft = non_negative(to_double(s)); },
                         [](const RunConfig& c) { return fmt(c.loss.fft); }};
        k["loss.perceptual"] = {[](RunConfig& c, const std::string& s) { c.loss.perceptual = non_negative(to_double(s)); },
                                [](const RunConfig& c) { return fmt(c.loss.perceptual); }};
        // inference
        k["tile.size"] = {[](RunConfig& c, const std::string& s) { c.tile.tile = count(s, 4, 1u << 16); },
                          [](const RunConfig& c) { return fmt(c.tile.tile); }};
        k["tile.overlap"] = {[](RunConfig& c, const std::string& s) { c.tile.overlap = count(s, 0, 1u << 15); },
                             [](const RunConfig& c) { return fmt(c.tile.overlap); }};
        // paths
        k["paths.data"] = {[](RunConfig& c, const std::string& s) { c.data_dir = s; },
                           [](const RunConfig& c) { return c.data_dir; }};
        k["paths.checkpoint"] = {[](RunConfig& c, const std::string& s) { c.checkpoint = s; },
                                 [](const RunConfig& c) { return c.checkpoint; }};
        k["paths.log"] = {[](RunConfig& c, const std::string& s) { c.log = s; },
                          [](const RunConfig& c) { return c.log; }};
        return k;
    }();
    return table;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    train.validate();
    loss.validate();
    tile.validate();
    if (!(rain_alpha > 0.0)) throw ConfigError("prior.alpha must be positive");
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        const std::string line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        auto it = keys().find(key);
        if (it == keys().end()) throw ConfigError(where + "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' is set twice");
        try {
            it->second.set(cfg, value);
        } catch (const BadValue& bad) {
            throw ConfigError(where + key + ": " + bad.why);
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    try {
        return parse_run_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ", " + e.what());
    }
}

std::string serialize(const RunConfig& cfg) {
    std::string out;
    for (const auto& [name, key] : keys()) out += name + " = " + key.get(cfg) + "\n";
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& kv : keys()) out.push_back(kv.first);
    return out;
}

}  // namespace rdv2::io
