// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset evaluation reports, run comparison tables and inference timing.
//
// Report CSV (5 decimals):
//
//   dataset,<root>
//   checkpoint,<fnv1a hash>
//   images,<n>
//   precision,5dp          ("full" in the sidecar)
//   metric,ave,max,min
//   psnr,...
//   ssim,...
//
//   id,psnr,ssim
//   0000,...
//
// The sidecar `<stem>.full.csv` has the same layout with %.17g values.
// An identical prediction has PSNR "inf"; such rows are excluded from the
// PSNR average (ave is "inf" only when every row is).

#pragma once

#include "derain/dataset.hpp"
#include "derain/metrics.hpp"
#include "derain/netgraph.hpp"

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace derain::eval {

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EvalRun {
    std::string dataset;          // dataset root as given
    std::string checkpoint_hash;  // or a fixture label
    MetricsReport report;
};

using Predictor = std::function<Image(const Sample&)>;

/// Scores predictor(sample) against sample.clear for every sample.
EvalRun evaluate_samples(std::span<const Sample> samples, const Predictor& predictor, std::string dataset,
                         std::string checkpoint_label);

/// Loads the checkpoint and dataset and scores infer(rainy) against clear.
/// Throws nn::ConfigMismatch when the dataset resolution differs from the model.
EvalRun evaluate_dataset(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset_root);

std::filesystem::path sidecar_path(const std::filesystem::path& report);
std::string format_report(const EvalRun& run, bool full_precision);
/// Writes the report and its full-precision sidecar.
void write_report(const EvalRun& run, const std::filesystem::path& path);
/// Parses either form; aggregates are recomputed from the rows and checked
/// against the header (exactly for full precision, to 5 decimals otherwise).
EvalRun read_report(const std::filesystem::path& path);

struct ComparisonRow {
    std::string label;
    Aggregate psnr;
    Aggregate ssim;
    std::array<double, 6> delta{};  // vs the first row: psnr ave/max/min, ssim ave/max/min
    std::array<bool, 6> best{};     // highest value in the column (ties all flagged)
};

struct ComparisonTable {
    std::string dataset;
    std::vector<ComparisonRow> rows;
};

inline constexpr std::array<const char*, 6> kComparisonColumns{"psnr_ave", "psnr_max", "psnr_min",
                                                               "ssim_ave", "ssim_max", "ssim_min"};

/// Needs >= 2 runs over the same images, one non-empty label per run.
ComparisonTable compare_runs(const std::vector<EvalRun>& runs, const std::vector<std::string>& labels);
std::string comparison_csv(const ComparisonTable& table);
/// Aligned plain text; best values marked with '*'.
std::string comparison_text(const ComparisonTable& table);

struct TimingReport {
    int height = 0;
    int width = 0;
    int warmup = 0;
    std::vector<double> samples;  // seconds per timed forward pass
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::string hardware;
};

/// Times infer() on a fixed random image at the bundle resolution.
/// Throws std::invalid_argument when iters < 10 or warmup < 0.
TimingReport benchmark_inference(const nn::ModelBundle& bundle, int warmup, int iters);
std::string hardware_descriptor();
std::string format_timing(const TimingReport& report);

}  // namespace derain::eval
