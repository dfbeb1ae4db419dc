// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace derain {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) bad(key, v, "an integer");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc{} || r.ptr != v.data() + v.size()) bad(key, v, "a non-negative integer");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    if (v.empty()) bad(key, v, "a number");
    char* end = nullptr;
    errno = 0;
    const double out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(out)) bad(key, v, "a finite number");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    bad(key, v, "true/false");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    return out;
}

template <class T, class Parse>
std::vector<T> to_list(const std::string& key, const std::string& v, Parse parse) {
    std::vector<T> out;
    for (const auto& item : split_list(v)) out.push_back(static_cast<T>(parse(key, item)));
    if (out.empty()) bad(key, v, "a comma-separated list");
    return out;
}

template <std::size_t N>
void to_array(std::array<int, N>& dst, const std::string& key, const std::string& v) {
    const auto items = to_list<int>(key, v, to_int);
    if (items.size() != N) bad(key, v, (std::to_string(N) + " comma-separated integers").c_str());
    std::copy(items.begin(), items.end(), dst.begin());
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class C>
std::string join(const C& c) {
    std::string out;
    for (const auto& x : c) {
        if (!out.empty()) out += ',';
        if constexpr (std::is_floating_point_v<std::decay_t<decltype(x)>>)
            out += fmt(x);
        else
            out += std::to_string(x);
    }
    return out;
}

std::string b2s(bool b) { return b ? "true" : "false"; }

struct Key {
    const char* name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
};

const std::vector<Key>& keys() {
    using S = const std::string&;
    static const std::vector<Key> table{
        {"train.batch_size", [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
         [](RunConfig& c, S k, S v) { c.train.batch_size = static_cast<int>(to_int(k, v)); }},
        {"train.learning_rate", [](const RunConfig& c) { return fmt(c.train.learning_rate); },
         [](RunConfig& c, S k, S v) { c.train.learning_rate = to_double(k, v); }},
        {"train.decay_factor", [](const RunConfig& c) { return fmt(c.train.decay_factor); },
         [](RunConfig& c, S k, S v) { c.train.decay_factor = to_double(k, v); }},
        {"train.decay_mode",
         [](const RunConfig& c) { return std::string(c.train.decay_mode == DecayMode::l2 ? "l2" : "lr_schedule"); },
         [](RunConfig& c, S k, S v) {
             if (v == "lr_schedule")
                 c.train.decay_mode = DecayMode::lr_schedule;
             else if (v == "l2")
                 c.train.decay_mode = DecayMode::l2;
             else
                 bad(k, v, "lr_schedule or l2");
         }},
        {"train.decay_every_epochs", [](const RunConfig& c) { return std::to_string(c.train.decay_every_epochs); },
         [](RunConfig& c, S k, S v) { c.train.decay_every_epochs = static_cast<int>(to_int(k, v)); }},
        {"train.epochs", [](const RunConfig& c) { return std::to_string(c.train.epochs); },
         [](RunConfig& c, S k, S v) { c.train.epochs = static_cast<int>(to_int(k, v)); }},
        {"train.steps", [](const RunConfig& c) { return std::to_string(c.train.steps); },
         [](RunConfig& c, S k, S v) { c.train.steps = static_cast<int>(to_int(k, v)); }},
        {"train.seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
         [](RunConfig& c, S k, S v) { c.train.seed = to_u64(k, v); }},
        {"train.dataset", [](const RunConfig& c) { return c.train.dataset; },
         [](RunConfig& c, S, S v) { c.train.dataset = v; }},
        {"train.run_dir", [](const RunConfig& c) { return c.train.run_dir; },
         [](RunConfig& c, S, S v) { c.train.run_dir = v; }},
        {"train.checkpoint_interval", [](const RunConfig& c) { return std::to_string(c.train.checkpoint_interval); },
         [](RunConfig& c, S k, S v) { c.train.checkpoint_interval = static_cast<int>(to_int(k, v)); }},
        {"train.adam_beta1", [](const RunConfig& c) { return fmt(c.train.adam_beta1); },
         [](RunConfig& c, S k, S v) { c.train.adam_beta1 = to_double(k, v); }},
        {"train.adam_beta2", [](const RunConfig& c) { return fmt(c.train.adam_beta2); },
         [](RunConfig& c, S k, S v) { c.train.adam_beta2 = to_double(k, v); }},
        {"train.adam_eps", [](const RunConfig& c) { return fmt(c.train.adam_eps); },
         [](RunConfig& c, S k, S v) { c.train.adam_eps = to_double(k, v); }},
        {"train.vae_pretrain_steps", [](const RunConfig& c) { return std::to_string(c.train.vae_pretrain_steps); },
         [](RunConfig& c, S k, S v) { c.train.vae_pretrain_steps = static_cast<int>(to_int(k, v)); }},
        {"train.vae_learning_rate", [](const RunConfig& c) { return fmt(c.train.vae_learning_rate); },
         [](RunConfig& c, S k, S v) { c.train.vae_learning_rate = to_double(k, v); }},
        {"train.vae_kl_weight", [](const RunConfig& c) { return fmt(c.train.vae_kl_weight); },
         [](RunConfig& c, S k, S v) { c.train.vae_kl_weight = to_double(k, v); }},

        {"ablation.preset", [](const RunConfig& c) { return preset_name(c.ablation); },
         [](RunConfig& c, S, S v) {
             try {
                 c.ablation = apply_ablation(v);
             } catch (const UnknownPreset& e) {
                 throw ConfigError(e.what());
             }
         }},
        {"ablation.depth_latent", [](const RunConfig& c) { return b2s(c.ablation.depth_latent_on); },
         [](RunConfig& c, S k, S v) { c.ablation.depth_latent_on = to_bool(k, v); }},
        {"ablation.derain_latent", [](const RunConfig& c) { return b2s(c.ablation.derain_latent_on); },
         [](RunConfig& c, S k, S v) { c.ablation.derain_latent_on = to_bool(k, v); }},
        {"ablation.gt_depth", [](const RunConfig& c) { return b2s(c.ablation.gt_depth_on); },
         [](RunConfig& c, S k, S v) { c.ablation.gt_depth_on = to_bool(k, v); }},
        {"ablation.concatenation", [](const RunConfig& c) { return b2s(c.ablation.concatenation_on); },
         [](RunConfig& c, S k, S v) { c.ablation.concatenation_on = to_bool(k, v); }},

        {"loss.perceptual", [](const RunConfig& c) { return fmt(c.weights.perceptual); },
         [](RunConfig& c, S k, S v) { c.weights.perceptual = to_double(k, v); }},
        {"loss.depth_consist", [](const RunConfig& c) { return fmt(c.weights.depth_consist); },
         [](RunConfig& c, S k, S v) { c.weights.depth_consist = to_double(k, v); }},
        {"loss.derain_consist", [](const RunConfig& c) { return fmt(c.weights.derain_consist); },
         [](RunConfig& c, S k, S v) { c.weights.derain_consist = to_double(k, v); }},
        {"loss.derain_mse", [](const RunConfig& c) { return fmt(c.weights.derain_mse); },
         [](RunConfig& c, S k, S v) { c.weights.derain_mse = to_double(k, v); }},
        {"loss.depth_mse", [](const RunConfig& c) { return fmt(c.weights.depth_mse); },
         [](RunConfig& c, S k, S v) { c.weights.depth_mse = to_double(k, v); }},

        {"model.height", [](const RunConfig& c) { return std::to_string(c.model.derain.height); },
         [](RunConfig& c, S k, S v) { c.model.derain.height = static_cast<int>(to_int(k, v)); }},
        {"model.width", [](const RunConfig& c) { return std::to_string(c.model.derain.width); },
         [](RunConfig& c, S k, S v) { c.model.derain.width = static_cast<int>(to_int(k, v)); }},
        {"model.derain_widths", [](const RunConfig& c) { return join(c.model.derain.widths); },
         [](RunConfig& c, S k, S v) { to_array(c.model.derain.widths, k, v); }},
        {"model.latent_length", [](const RunConfig& c) { return std::to_string(c.model.derain.latent_length); },
         [](RunConfig& c, S k, S v) { c.model.derain.latent_length = static_cast<int>(to_int(k, v)); }},
        {"model.depth_widths", [](const RunConfig& c) { return join(c.model.depth.widths); },
         [](RunConfig& c, S k, S v) { to_array(c.model.depth.widths, k, v); }},
        {"model.disparity_heads", [](const RunConfig& c) { return std::to_string(c.model.depth.disparity_heads); },
         [](RunConfig& c, S k, S v) { c.model.depth.disparity_heads = static_cast<int>(to_int(k, v)); }},
        {"model.depth_upsample",
         [](const RunConfig& c) {
             return std::string(c.model.depth.upsample == nn::UpsampleMode::nearest ? "nearest" : "transposed");
         },
         [](RunConfig& c, S k, S v) {
             if (v == "transposed")
                 c.model.depth.upsample = nn::UpsampleMode::transposed;
             else if (v == "nearest")
                 c.model.depth.upsample = nn::UpsampleMode::nearest;
             else
                 bad(k, v, "transposed or nearest");
         }},
        {"model.feature_widths", [](const RunConfig& c) { return join(c.model.features.widths); },
         [](RunConfig& c, S k, S v) { c.model.features.widths = to_list<int>(k, v, to_int); }},
        {"model.feature_tap_weights", [](const RunConfig& c) { return join(c.model.features.tap_weights); },
         [](RunConfig& c, S k, S v) { c.model.features.tap_weights = to_list<double>(k, v, to_double); }},
        {"model.latent_supervisor_widths", [](const RunConfig& c) { return join(c.model.latent.widths); },
         [](RunConfig& c, S k, S v) { to_array(c.model.latent.widths, k, v); }},
    };
    return table;
}

const Key* find_key(std::string_view name) {
    for (const auto& k : keys())
        if (name == k.name) return &k;
    return nullptr;
}

}  // namespace

void RunConfig::validate() const {
    try {
        model.validate();
        weights.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (model.derain.concatenate_depth != ablation.concatenation_on)
        throw ConfigError("model concatenation flag disagrees with ablation.concatenation");
    const auto& t = train;
    if (t.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(t.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
    if (t.decay_factor < 0.0) throw ConfigError("train.decay_factor must be >= 0");
    if (t.decay_mode == DecayMode::lr_schedule && t.decay_factor <= 0.0)
        throw ConfigError("train.decay_factor must be > 0 in lr_schedule mode");
    if (t.decay_every_epochs < 1) throw ConfigError("train.decay_every_epochs must be >= 1");
    if (t.epochs < 1 && t.steps < 1) throw ConfigError("train.epochs or train.steps must be >= 1");
    if (t.steps < 0) throw ConfigError("train.steps must be >= 0");
    if (t.checkpoint_interval < 0) throw ConfigError("train.checkpoint_interval must be >= 0");
    if (!(t.adam_beta1 >= 0.0 && t.adam_beta1 < 1.0 && t.adam_beta2 >= 0.0 && t.adam_beta2 < 1.0))
        throw ConfigError("Adam betas must be in [0, 1)");
    if (!(t.adam_eps > 0.0)) throw ConfigError("train.adam_eps must be > 0");
    if (t.vae_pretrain_steps < 0) throw ConfigError("train.vae_pretrain_steps must be >= 0");
    if (!(t.vae_learning_rate > 0.0)) throw ConfigError("train.vae_learning_rate must be > 0");
    if (t.vae_kl_weight < 0.0) throw ConfigError("train.vae_kl_weight must be >= 0");
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
    const Key* k = find_key(key);
    if (!k) throw ConfigError("unknown config key '" + key + "'");
    k->set(config, key, value);
    config.model.derain.concatenate_depth = config.ablation.concatenation_on;
}

void apply_text(RunConfig& config, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        try {
            apply_setting(config, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void apply_file(RunConfig& config, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_text(config, ss.str(), path.string());
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
        apply_setting(config, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
}

std::string to_text(const RunConfig& config) {
    std::string out;
    for (const auto& k : keys()) {
        const std::string value = k.get(config);
        if (value == "custom") out += "# ";
        out += k.name;
        out += " = ";
        out += value;
        out += '\n';
    }
    return out;
}

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    apply_text(c, text, "<config>");
    return c;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.emplace_back(k.name);
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace derain
