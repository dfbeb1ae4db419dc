// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/evalkit.hpp"

#include "derain/checkpoint.hpp"
#include "derain/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace derain::eval {

namespace fs = std::filesystem;

namespace {

std::string num(double v, bool full) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, full ? "%.17g" : "%.5f", v);
    return buf;
}

double parse_num(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw EvalError("report: malformed number '" + s + "'");
    }
    if (used != s.size()) throw EvalError("report: malformed number '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(line);
    while (std::getline(in, item, ',')) out.push_back(item);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool same_value(double a, double b, bool full) {
    if (std::isinf(a) || std::isinf(b)) return a == b;
    return full ? a == b : std::abs(a - b) <= 5.01e-6;
}

}  // namespace

EvalRun evaluate_samples(std::span<const Sample> samples, const Predictor& predictor, std::string dataset,
                         std::string checkpoint_label) {
    if (samples.empty()) throw EvalError("evaluation set is empty");
    std::set<std::string> seen;
    std::vector<ImageScore> scores;
    for (const Sample& s : samples) {
        if (!seen.insert(s.id).second) throw EvalError("duplicate image id " + s.id);
        const Image pred = predictor(s);
        if (!pred.same_shape(s.clear)) throw EvalError("prediction for " + s.id + " has the wrong size");
        scores.push_back({s.id, psnr(pred, s.clear), ssim(pred, s.clear)});
    }
    EvalRun run;
    run.dataset = std::move(dataset);
    run.checkpoint_hash = std::move(checkpoint_label);
    run.report = aggregate_metrics(std::move(scores));
    return run;
}

EvalRun evaluate_dataset(const fs::path& checkpoint, const fs::path& dataset_root) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const nn::ModelBundle bundle = restore_bundle(ckpt);
    const std::vector<Sample> samples = load_samples(read_manifest(dataset_root));
    const auto& m = bundle.config.derain;
    for (const Sample& s : samples)
        if (s.rainy.height() != m.height || s.rainy.width() != m.width)
            throw nn::ConfigMismatch("dataset image " + s.id + " is " + std::to_string(s.rainy.height()) + "x" +
                                     std::to_string(s.rainy.width()) + " but the checkpoint model expects " +
                                     std::to_string(m.height) + "x" + std::to_string(m.width));
    return evaluate_samples(
        samples, [&](const Sample& s) { return nn::infer(s.rainy, bundle); }, dataset_root.string(),
        file_hash(checkpoint));
}

fs::path sidecar_path(const fs::path& report) {
    fs::path p = report;
    p.replace_extension();
    return p.string() + ".full.csv";
}

std::string format_report(const EvalRun& run, bool full) {
    const auto& r = run.report;
    std::string out;
    out += "dataset," + run.dataset + "\n";
    out += "checkpoint," + run.checkpoint_hash + "\n";
    out += "images," + std::to_string(r.per_image.size()) + "\n";
    out += std::string("precision,") + (full ? "full" : "5dp") + "\n";
    out += "metric,ave,max,min\n";
    out += "psnr," + num(r.psnr.ave, full) + "," + num(r.psnr.max, full) + "," + num(r.psnr.min, full) + "\n";
    out += "ssim," + num(r.ssim.ave, full) + "," + num(r.ssim.max, full) + "," + num(r.ssim.min, full) + "\n";
    out += "\nid,psnr,ssim\n";
    for (const auto& s : r.per_image) out += s.id + "," + num(s.psnr, full) + "," + num(s.ssim, full) + "\n";
    return out;
}

void write_report(const EvalRun& run, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    for (const auto& [p, full] : {std::pair{path, false}, std::pair{sidecar_path(path), true}}) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) throw EvalError("cannot write report " + p.string());
        out << format_report(run, full);
        if (!out) throw EvalError("failed writing report " + p.string());
    }
}

EvalRun read_report(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw EvalError("cannot read report " + path.string());
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    auto field = [&](std::size_t i, const char* key) {
        if (i >= lines.size()) throw EvalError("report truncated: " + path.string());
        const auto f = split(lines[i]);
        if (f.size() < 2 || f[0] != key) throw EvalError(std::string("report: expected '") + key + "' row");
        return f;
    };
    EvalRun run;
    run.dataset = lines.empty() ? "" : lines[0].substr(std::min<std::size_t>(8, lines[0].size()));
    field(0, "dataset");
    run.checkpoint_hash = field(1, "checkpoint")[1];
    const std::size_t count = std::stoul(field(2, "images")[1]);
    const bool full = field(3, "precision")[1] == "full";
    field(4, "metric");
    const auto p = field(5, "psnr"), s = field(6, "ssim");
    if (p.size() != 4 || s.size() != 4) throw EvalError("report: malformed aggregate rows");
    if (lines.size() < 9 || !lines[7].empty() || lines[8] != "id,psnr,ssim")
        throw EvalError("report: missing per-image table");
    std::vector<ImageScore> rows;
    for (std::size_t i = 9; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split(lines[i]);
        if (f.size() != 3) throw EvalError("report: malformed row " + std::to_string(i + 1));
        rows.push_back({f[0], parse_num(f[1]), parse_num(f[2])});
    }
    if (rows.size() != count) throw EvalError("report: image count does not match the rows");
    run.report = aggregate_metrics(std::move(rows));
    const std::array<double, 6> header{parse_num(p[1]), parse_num(p[2]), parse_num(p[3]),
                                       parse_num(s[1]), parse_num(s[2]), parse_num(s[3])};
    const auto& a = run.report;
    const std::array<double, 6> recomputed{a.psnr.ave, a.psnr.max, a.psnr.min, a.ssim.ave, a.ssim.max, a.ssim.min};
    for (std::size_t i = 0; i < 6; ++i)
        if (!same_value(header[i], recomputed[i], full))
            throw EvalError(std::string("report: header ") + kComparisonColumns[i] +
                            " does not match the per-image rows");
    return run;
}

ComparisonTable compare_runs(const std::vector<EvalRun>& runs, const std::vector<std::string>& labels) {
    if (labels.empty()) throw EvalError("compare_runs: no labels given");
    if (runs.size() < 2) throw EvalError("compare_runs: need at least two runs");
    if (labels.size() != runs.size()) throw EvalError("compare_runs: one label per run required");
    auto ids = [](const EvalRun& r) {
        std::vector<std::string> out;
        for (const auto& s : r.report.per_image) out.push_back(s.id);
        return out;
    };
    const auto ref_ids = ids(runs[0]);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        if (labels[i].empty()) throw EvalError("compare_runs: empty label");
        if (runs[i].dataset != runs[0].dataset || ids(runs[i]) != ref_ids)
            throw EvalError("compare_runs: run '" + labels[i] + "' was evaluated on a different dataset");
    }
    ComparisonTable t;
    t.dataset = runs[0].dataset;
    auto values = [](const EvalRun& r) {
        const auto& a = r.report;
        return std::array<double, 6>{a.psnr.ave, a.psnr.max, a.psnr.min, a.ssim.ave, a.ssim.max, a.ssim.min};
    };
    std::array<double, 6> best;
    best.fill(-std::numeric_limits<double>::infinity());
    for (const auto& r : runs) {
        const auto v = values(r);
        for (std::size_t c = 0; c < 6; ++c) best[c] = std::max(best[c], v[c]);
    }
    const auto ref = values(runs[0]);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        ComparisonRow row;
        row.label = labels[i];
        row.psnr = runs[i].report.psnr;
        row.ssim = runs[i].report.ssim;
        const auto v = values(runs[i]);
        for (std::size_t c = 0; c < 6; ++c) {
            row.delta[c] = (std::isinf(v[c]) && v[c] == ref[c]) ? 0.0 : v[c] - ref[c];
            row.best[c] = v[c] == best[c];
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

namespace {

std::array<double, 6> row_values(const ComparisonRow& r) {
    return {r.psnr.ave, r.psnr.max, r.psnr.min, r.ssim.ave, r.ssim.max, r.ssim.min};
}

}  // namespace

std::string comparison_csv(const ComparisonTable& t) {
    std::string out = "label";
    for (const char* c : kComparisonColumns) out += std::string(",") + c;
    for (const char* c : kComparisonColumns) out += std::string(",delta_") + c;
    for (const char* c : kComparisonColumns) out += std::string(",best_") + c;
    out += "\n";
    for (const auto& r : t.rows) {
        out += r.label;
        for (double v : row_values(r)) out += "," + num(v, false);
        for (double d : r.delta) out += "," + num(d, false);
        for (bool b : r.best) out += b ? ",1" : ",0";
        out += "\n";
    }
    return out;
}

std::string comparison_text(const ComparisonTable& t) {
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> head{"run"};
    for (const char* c : kComparisonColumns) head.emplace_back(c);
    head.emplace_back("d_psnr_ave");
    head.emplace_back("d_ssim_ave");
    cells.push_back(head);
    for (const auto& r : t.rows) {
        std::vector<std::string> line{r.label};
        const auto v = row_values(r);
        for (std::size_t c = 0; c < 6; ++c) line.push_back(num(v[c], false) + (r.best[c] ? "*" : ""));
        line.push_back(num(r.delta[0], false));
        line.push_back(num(r.delta[3], false));
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& line : cells)
        for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
    std::string out = "dataset: " + t.dataset + "\n";
    for (const auto& line : cells) {
        for (std::size_t c = 0; c < line.size(); ++c) {
            const std::string pad(width[c] - line[c].size(), ' ');
            out += c == 0 ? line[c] + pad : "  " + pad + line[c];
        }
        out += "\n";
    }
    out += "(* = best in column)\n";
    return out;
}

std::string hardware_descriptor() {
    std::ifstream in("/proc/cpuinfo");
    std::string line, model;
    int cpus = 0;
    while (std::getline(in, line)) {
        if (line.starts_with("model name") && model.empty()) {
            const auto colon = line.find(':');
            if (colon != std::string::npos) model = line.substr(colon + 2);
        }
        if (line.starts_with("processor")) ++cpus;
    }
    if (model.empty()) model = "unknown cpu";
    if (cpus == 0) cpus = static_cast<int>(std::thread::hardware_concurrency());
    return model + " (" + std::to_string(cpus) + " logical cpus, single-threaded run)";
}

TimingReport benchmark_inference(const nn::ModelBundle& bundle, int warmup, int iters) {
    if (iters < 10) throw std::invalid_argument("benchmark_inference: need at least 10 timed iterations");
    if (warmup < 0) throw std::invalid_argument("benchmark_inference: warmup must be >= 0");
    const auto& m = bundle.config.derain;
    Image input(m.height, m.width);
    Rng rng(20240917);
    for (float& v : input.data()) v = static_cast<float>(rng.uniform());

    TimingReport r;
    r.height = m.height;
    r.width = m.width;
    r.warmup = warmup;
    r.hardware = hardware_descriptor();
    volatile float sink = 0.0f;
    for (int i = 0; i < warmup; ++i) sink = sink + nn::infer(input, bundle).data()[0];
    using clock = std::chrono::steady_clock;
    for (int i = 0; i < iters; ++i) {
        const auto t0 = clock::now();
        const Image out = nn::infer(input, bundle);
        const auto t1 = clock::now();
        sink = sink + out.data()[0];
        r.samples.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    double sum = 0.0;
    for (double s : r.samples) sum += s;
    r.mean = sum / static_cast<double>(r.samples.size());
    r.min = *std::min_element(r.samples.begin(), r.samples.end());
    r.max = *std::max_element(r.samples.begin(), r.samples.end());
    return r;
}

std::string format_timing(const TimingReport& r) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "image_size,%dx%d\nwarmup,%d\nmeasured,%zu\n", r.height, r.width, r.warmup,
                  r.samples.size());
    out += buf;
    std::snprintf(buf, sizeof buf, "mean_seconds,%.6f\nmin_seconds,%.6f\nmax_seconds,%.6f\n", r.mean, r.min, r.max);
    out += buf;
    out += "hardware," + r.hardware + "\n";
    out += "\niteration,seconds\n";
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i + 1, r.samples[i]);
        out += buf;
    }
    return out;
}

}  // namespace derain::eval
