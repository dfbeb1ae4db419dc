// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// derain: synthesize -> train -> infer -> evaluate -> ablate, plus bench.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include "derain/checkpoint.hpp"
#include "derain/config.hpp"
#include "derain/dataset.hpp"
#include "derain/evalkit.hpp"
#include "derain/image.hpp"
#include "derain/log.hpp"
#include "derain/rainsynth.hpp"
#include "derain/trainpipe.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace derain;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigArgs {
    std::string config;
    std::vector<std::string> overrides;
    std::string preset;

    void add_to(CLI::App* app) {
        app->add_option("--config", config, "key=value config file (default: $DERAIN_CONFIG)");
        app->add_option("--set", overrides, "override, key=value (repeatable)")->type_name("KEY=VALUE");
        app->add_option("--preset", preset, "ablation preset: Full, A, B, C, D, E");
    }

    RunConfig resolve() const {
        RunConfig c;
        std::string path = config;
        if (path.empty())
            if (const char* env = std::getenv(kConfigEnvVar)) path = env;
        if (!path.empty()) apply_file(c, path);
        apply_overrides(c, overrides);
        if (!preset.empty()) apply_setting(c, "ablation.preset", preset);
        return c;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

// synthesize ---------------------------------------------------------------

struct SynthArgs {
    int n = 8;
    int size = -1;  // unset
    int height = 64;
    int width = 64;
    std::uint64_t seed = 1;
    std::string out;
    synth::StreakParams streak;
    synth::FogParams fog;
};

int run_synthesize(const SynthArgs& a) {
    const int h = a.size >= 0 ? a.size : a.height;
    const int w = a.size >= 0 ? a.size : a.width;
    if (a.n < 1) throw UsageError("--n must be >= 1");
    if (h < 16 || w < 16) throw UsageError("image size must be at least 16x16");
    if (a.fog.beta < 0.0) throw UsageError("--beta must be >= 0");
    if (a.fog.atmospheric_light < 0.0 || a.fog.atmospheric_light > 1.0) throw UsageError("--f0 must be in [0,1]");
    if (a.streak.density < 0.0 || a.streak.length < 0.0 || a.streak.intensity < 0.0 || a.streak.intensity > 1.0)
        throw UsageError("streak density/length must be >= 0 and intensity in [0,1]");
    const auto m = synth::make_toy_dataset(a.n, h, w, a.streak, a.fog, a.seed, a.out);
    log_info("wrote " + std::to_string(m.entries.size()) + " samples to " + a.out);
    return 0;
}

// train --------------------------------------------------------------------

struct TrainArgs {
    ConfigArgs cfg;
    std::string dataset;
    std::string run_dir;
    std::string resume;
    std::optional<std::uint64_t> stop_after;
};

int run_train(const TrainArgs& a) {
    TrainOptions opts;
    opts.stop_after = a.stop_after;
    TrainResult r;
    if (!a.resume.empty()) {
        if (!a.cfg.config.empty() || !a.cfg.preset.empty())
            throw UsageError("--resume takes its configuration from the checkpoint; use --set for allowed changes");
        std::vector<std::string> overrides = a.cfg.overrides;
        if (!a.dataset.empty()) overrides.push_back("train.dataset=" + a.dataset);
        if (!a.run_dir.empty()) overrides.push_back("train.run_dir=" + a.run_dir);
        r = resume(a.resume, overrides, opts);
    } else {
        RunConfig c = a.cfg.resolve();
        if (!a.dataset.empty()) c.train.dataset = a.dataset;
        if (!a.run_dir.empty()) c.train.run_dir = a.run_dir;
        c.validate();
        r = train(c, opts);
    }
    if (!r.final_checkpoint.empty())
        std::cout << "final checkpoint: " << r.final_checkpoint.string() << "\n";
    else
        std::cout << "stopped early; last checkpoint: "
                  << (r.last_checkpoint.empty() ? std::string("none") : r.last_checkpoint.string()) << "\n";
    std::cout << "training log: " << r.log_path.string() << "\n";
    return 0;
}

// infer --------------------------------------------------------------------

struct InferArgs {
    std::string checkpoint;
    std::string input;
    std::string out;
    std::string config;
};

int run_infer(const InferArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const std::string config_path = !a.config.empty() ? a.config : (std::getenv(kConfigEnvVar) ? std::getenv(kConfigEnvVar) : "");
    if (!config_path.empty()) {
        RunConfig c;
        apply_file(c, config_path);
        if (!(c.model == ckpt.config.model))
            throw nn::ConfigMismatch("model section of " + config_path + " does not match checkpoint " +
                                     a.checkpoint);
    }
    const nn::ModelBundle bundle = restore_bundle(ckpt);

    std::vector<fs::path> inputs;
    if (fs::is_directory(a.input)) {
        for (const auto& e : fs::directory_iterator(a.input))
            if (e.is_regular_file() && e.path().extension() == ".png") inputs.push_back(e.path());
        std::sort(inputs.begin(), inputs.end());
        if (inputs.empty()) throw std::runtime_error("no .png images in " + a.input);
    } else {
        inputs.emplace_back(a.input);
    }
    fs::create_directories(a.out);
    for (const auto& in : inputs) {
        const Image rainy = load_image(in);
        const Image out = nn::infer(rainy, bundle);
        save_image(out, fs::path(a.out) / in.filename());
    }
    log_info("derained " + std::to_string(inputs.size()) + " image(s) into " + a.out);
    return 0;
}

// evaluate -----------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint;
    std::string dataset;
    std::string out;
};

int run_evaluate(const EvalArgs& a) {
    const eval::EvalRun run = eval::evaluate_dataset(a.checkpoint, a.dataset);
    eval::write_report(run, a.out);
    std::cout << eval::format_report(run, false);
    return 0;
}

// ablate -------------------------------------------------------------------

struct AblateArgs {
    ConfigArgs cfg;
    std::vector<std::string> presets{"Full", "A", "B", "C", "D", "E"};
    std::string dataset;
    std::string run_dir = "runs/ablation";
};

int run_ablate(const AblateArgs& a) {
    if (!a.cfg.preset.empty()) throw UsageError("use --presets with ablate");
    if (a.presets.size() < 2) throw UsageError("--presets needs at least two presets");
    const RunConfig base = a.cfg.resolve();
    std::vector<RunConfig> configs;
    for (const auto& p : a.presets) {
        RunConfig c = base;
        apply_setting(c, "ablation.preset", p);
        if (!a.dataset.empty()) c.train.dataset = a.dataset;
        c.train.run_dir = (fs::path(a.run_dir) / p).string();
        c.validate();
        configs.push_back(std::move(c));
    }
    std::vector<eval::EvalRun> runs;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        log_info("ablation run " + a.presets[i]);
        const TrainResult r = train(configs[i]);
        eval::EvalRun run = eval::evaluate_dataset(r.final_checkpoint, configs[i].train.dataset);
        eval::write_report(run, fs::path(configs[i].train.run_dir) / "report.csv");
        runs.push_back(std::move(run));
    }
    const eval::ComparisonTable table = eval::compare_runs(runs, a.presets);
    write_text(fs::path(a.run_dir) / "comparison.csv", eval::comparison_csv(table));
    const std::string text = eval::comparison_text(table);
    write_text(fs::path(a.run_dir) / "comparison.txt", text);
    std::cout << text;
    return 0;
}

// bench --------------------------------------------------------------------

struct BenchArgs {
    std::string checkpoint;
    int size = 512;
    int warmup = 3;
    int iters = 10;
    std::string out;
    ConfigArgs cfg;
};

int run_bench(const BenchArgs& a) {
    if (a.iters < 10) throw UsageError("--iters must be >= 10");
    if (a.warmup < 0) throw UsageError("--warmup must be >= 0");
    RunConfig c;
    std::optional<Checkpoint> ckpt;
    if (!a.checkpoint.empty()) {
        ckpt = load_checkpoint(a.checkpoint);
        c = ckpt->config;
    } else {
        c = a.cfg.resolve();
    }
    c.model.derain.height = a.size;
    c.model.derain.width = a.size;
    try {
        c.model.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("--size incompatible with the model strides: ") + e.what());
    }
    nn::ModelBundle bundle;
    if (ckpt && ckpt->config.model == c.model) {
        bundle = restore_bundle(*ckpt);
    } else {
        if (ckpt) log_info("checkpoint resolution differs from --size; timing freshly initialised weights");
        bundle = nn::build_models(c.model, c.train.seed);
    }
    const eval::TimingReport r = eval::benchmark_inference(bundle, a.warmup, a.iters);
    const std::string text = eval::format_timing(r);
    if (!a.out.empty()) write_text(a.out, text);
    std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Depth-guided single-image deraining toolkit"};
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");
    app.add_flag("-q,--quiet", quiet, "warnings and errors only");

    SynthArgs sa;
    auto* synth_cmd = app.add_subcommand("synthesize", "generate a paired toy dataset");
    synth_cmd->add_option("--n", sa.n, "number of samples");
    synth_cmd->add_option("--size", sa.size, "square image size (overrides --height/--width)");
    synth_cmd->add_option("--height", sa.height, "image height");
    synth_cmd->add_option("--width", sa.width, "image width");
    synth_cmd->add_option("--seed", sa.seed, "base seed; sample i uses seed + i");
    synth_cmd->add_option("--out", sa.out, "output directory")->required();
    synth_cmd->add_option("--beta", sa.fog.beta, "fog attenuation per unit depth");
    synth_cmd->add_option("--f0", sa.fog.atmospheric_light, "atmospheric light");
    synth_cmd->add_option("--density", sa.streak.density, "streaks per megapixel");
    synth_cmd->add_option("--length", sa.streak.length, "streak length in pixels");
    synth_cmd->add_option("--angle", sa.streak.angle_deg, "streak angle from vertical, degrees");
    synth_cmd->add_option("--jitter", sa.streak.angle_jitter_deg, "per-streak angle jitter, degrees");
    synth_cmd->add_option("--intensity", sa.streak.intensity, "peak streak intensity");

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train the deraining models");
    ta.cfg.add_to(train_cmd);
    train_cmd->add_option("--dataset", ta.dataset, "dataset root (train.dataset)");
    train_cmd->add_option("--run-dir", ta.run_dir, "output directory (train.run_dir)");
    train_cmd->add_option("--resume", ta.resume, "continue from a checkpoint");
    train_cmd->add_option("--stop-after", ta.stop_after, "stop after N completed steps");

    InferArgs ia;
    auto* infer_cmd = app.add_subcommand("infer", "derain image(s) with a checkpoint");
    infer_cmd->add_option("--checkpoint", ia.checkpoint, "checkpoint file")->required();
    infer_cmd->add_option("--input", ia.input, "rainy image or directory of .png images")->required();
    infer_cmd->add_option("--out", ia.out, "output directory")->required();
    infer_cmd->add_option("--config", ia.config, "config whose model section must match the checkpoint");

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("evaluate", "PSNR/SSIM report over a dataset");
    eval_cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--dataset", ea.dataset, "dataset root")->required();
    eval_cmd->add_option("--out", ea.out, "report CSV path")->required();

    AblateArgs aa;
    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare ablation presets");
    aa.cfg.add_to(ablate_cmd);
    ablate_cmd->add_option("--presets", aa.presets, "comma-separated presets")->delimiter(',');
    ablate_cmd->add_option("--dataset", aa.dataset, "dataset root");
    ablate_cmd->add_option("--run-dir", aa.run_dir, "output directory");

    BenchArgs ba;
    auto* bench_cmd = app.add_subcommand("bench", "time the inference forward pass");
    bench_cmd->add_option("--checkpoint", ba.checkpoint, "checkpoint (weights used when its resolution matches)");
    bench_cmd->add_option("--size", ba.size, "square input size");
    bench_cmd->add_option("--warmup", ba.warmup, "untimed warmup passes");
    bench_cmd->add_option("--iters", ba.iters, "timed passes (>= 10)");
    bench_cmd->add_option("--out", ba.out, "timing report path");
    ba.cfg.add_to(bench_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsage;
    }
    set_log_level(verbose ? LogLevel::debug : quiet ? LogLevel::warning : LogLevel::info);

    try {
        if (*synth_cmd) return run_synthesize(sa);
        if (*train_cmd) return run_train(ta);
        if (*infer_cmd) return run_infer(ia);
        if (*eval_cmd) return run_evaluate(ea);
        if (*ablate_cmd) return run_ablate(aa);
        if (*bench_cmd) return run_bench(ba);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        CLI::App* sub = app.get_subcommands().front();
        std::cerr << sub->help();
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
