// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// Joint training of the DerainAE and the DepthNet decoder.
//
// One step on a batch (O rainy, C clear, D depth):
//   DepthNet(O)            frozen encoder features f_k, trainable decoder -> Disp_j, D_R
//   DerainAE(O, f_k)       C_hat, R_L
//   DepthNet bottleneck(C) D_C            (no gradient)
//   VAE trunk(C)           -> mean projection (trainable) -> C_L
//   FeatureSupervisor      phi_l(C) (no gradient), phi_l(C_hat)
// followed by one Adam update of the trainable parameters.
//
// Batches follow a fixed per-epoch shuffle derived from (seed, epoch), so the
// schedule is a pure function of the step index and resuming is exact.

#pragma once

#include "derain/checkpoint.hpp"
#include "derain/config.hpp"
#include "derain/dataset.hpp"
#include "derain/losses.hpp"
#include "derain/netgraph.hpp"
#include "derain/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace derain {

struct Batch {
    std::vector<std::string> ids;
    nn::Tensor rainy;  // N x 3 x H x W
    nn::Tensor clear;
    nn::Tensor depth;  // N x 1 x H x W
};

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices);

/// Adam over the trainable parameters of a store.
class Adam {
public:
    Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// `l2` > 0 adds l2 * value to each gradient before the moment update.
    void step(nn::ParameterStore& params, double lr, double l2 = 0.0);

    std::uint64_t t() const noexcept { return t_; }
    void export_state(Checkpoint& ckpt) const;
    void import_state(const Checkpoint& ckpt, const nn::ParameterStore& params);

private:
    double beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::map<std::string, nn::Tensor> m_, v_;
};

struct StepRecord {
    std::uint64_t step = 0;  // 1-based
    std::uint64_t epoch = 0;
    double learning_rate = 0.0;
    loss::LossBreakdown loss;
};

/// Graph instrumentation from the most recent train_step.
struct StepStats {
    std::size_t active_edges = 0;
    std::size_t concat_ops = 0;
    std::size_t node_count = 0;
    std::map<std::string, double> grad_norm;  // parameter name -> L2 norm of its gradient
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Offline fit of the latent supervisor (all of its layers) to `images`
/// with MSE reconstruction + kl_weight * KL. With `sample` false the decoder
/// sees the latent mean. Returns the final reconstruction MSE of the mean path.
double pretrain_latent_supervisor(nn::ModelBundle& bundle, std::span<const Image> images, int steps, double lr,
                                  double kl_weight, Rng& rng, bool sample = true);

class Trainer {
public:
    /// Fresh run: builds the models from config.train.seed and pretrains the
    /// latent supervisor on the clear images.
    Trainer(RunConfig config, std::vector<Sample> samples);
    /// Continues from a checkpoint.
    Trainer(const Checkpoint& ckpt, std::vector<Sample> samples);

    const RunConfig& config() const noexcept { return config_; }
    nn::ModelBundle& bundle() noexcept { return bundle_; }
    const nn::ModelBundle& bundle() const noexcept { return bundle_; }
    const std::vector<Sample>& samples() const noexcept { return samples_; }

    std::uint64_t completed_steps() const noexcept { return step_; }
    std::uint64_t total_steps() const noexcept;
    std::uint64_t steps_per_epoch() const noexcept;
    /// Sample indices of the 0-based global step.
    std::vector<std::size_t> batch_indices(std::uint64_t step) const;
    double learning_rate(std::uint64_t step) const;

    /// Runs the next scheduled batch.
    StepRecord step();
    /// One optimizer update on `batch`; returns the pre-update breakdown.
    loss::LossBreakdown train_step(const Batch& batch, double lr);
    /// Loss breakdown without an update.
    loss::LossBreakdown evaluate_loss(const Batch& batch);

    Checkpoint checkpoint() const;
    const StepStats& last_stats() const noexcept { return stats_; }

private:
    struct Graph;
    Graph build_graph(nn::Tape& tape, const Batch& batch);
    void check_samples() const;

    RunConfig config_;
    std::vector<Sample> samples_;
    nn::ModelBundle bundle_;
    Adam adam_;
    Rng rng_;
    std::uint64_t step_ = 0;
    StepStats stats_;
};

struct TrainOptions {
    /// Stop after this many completed steps (simulates an interruption).
    std::optional<std::uint64_t> stop_after;
};

struct TrainResult {
    std::filesystem::path final_checkpoint;  // empty when stopped early
    std::filesystem::path last_checkpoint;
    std::filesystem::path log_path;
    std::vector<StepRecord> log;  // rows written by this invocation
};

/// Column header of the training log CSV.
std::string train_log_header();
std::string format_log_row(const StepRecord& r);

/// Trains per config.train into config.train.run_dir:
///   resolved.cfg, train_log.csv, checkpoints/step_NNNNNN.ckpt, final.ckpt
TrainResult train(const RunConfig& config, const TrainOptions& options = {});

/// Continues a run from `checkpoint`. Only train.steps, train.epochs,
/// train.run_dir, train.dataset and train.checkpoint_interval may be
/// overridden; anything else must match the checkpoint.
TrainResult resume(const std::filesystem::path& checkpoint, const std::vector<std::string>& overrides = {},
                   const TrainOptions& options = {});

}  // namespace derain
