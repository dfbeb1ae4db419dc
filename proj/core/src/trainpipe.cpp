// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/trainpipe.hpp"

#include "derain/log.hpp"
#include "derain/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace derain {

namespace fs = std::filesystem;
using nn::Tape;
using nn::Var;

// ---------------------------------------------------------------------------
// Batches

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
    std::vector<Image> rainy, clear;
    std::vector<Map2D> depth;
    Batch b;
    for (std::size_t i : indices) {
        const Sample& s = samples[i];
        b.ids.push_back(s.id);
        rainy.push_back(s.rainy);
        clear.push_back(s.clear);
        depth.push_back(s.depth);
    }
    b.rainy = nn::images_to_tensor(rainy);
    b.clear = nn::images_to_tensor(clear);
    b.depth = nn::maps_to_tensor(depth);
    return b;
}

// ---------------------------------------------------------------------------
// Adam

void Adam::step(nn::ParameterStore& params, double lr, double l2) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const float step_size = static_cast<float>(lr / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float eps = static_cast<float>(eps_);
    const float decay = static_cast<float>(l2);
    for (auto& ptr : params) {
        nn::Parameter& p = *ptr;
        if (!p.trainable || p.grad.empty()) continue;
        auto [mit, fresh_m] = m_.try_emplace(p.name, p.value.shape());
        auto [vit, fresh_v] = v_.try_emplace(p.name, p.value.shape());
        float* m = mit->second.data();
        float* v = vit->second.data();
        float* w = p.value.data();
        const float* g = p.grad.data();
        const std::size_t n = p.value.numel();
        for (std::size_t i = 0; i < n; ++i) {
            const float gi = decay != 0.0f ? g[i] + decay * w[i] : g[i];
            m[i] = b1 * m[i] + (1.0f - b1) * gi;
            v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
            w[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
        }
    }
}

void Adam::export_state(Checkpoint& ckpt) const {
    ckpt.adam_t = t_;
    for (const auto& [name, t] : m_) ckpt.tensors["adam_m/" + name] = t;
    for (const auto& [name, t] : v_) ckpt.tensors["adam_v/" + name] = t;
}

void Adam::import_state(const Checkpoint& ckpt, const nn::ParameterStore& params) {
    t_ = ckpt.adam_t;
    m_.clear();
    v_.clear();
    for (const auto& [key, t] : ckpt.tensors) {
        const bool is_m = key.starts_with("adam_m/");
        if (!is_m && !key.starts_with("adam_v/")) continue;
        const std::string name = key.substr(7);
        const nn::Parameter* p = params.find(name);
        if (!p || !(p->value.shape() == t.shape()))
            throw CheckpointError("optimizer state for unknown or reshaped parameter " + name);
        (is_m ? m_ : v_).emplace(name, t);
    }
}

// ---------------------------------------------------------------------------
// Latent supervisor pretraining

double pretrain_latent_supervisor(nn::ModelBundle& bundle, std::span<const Image> images, int steps, double lr,
                                  double kl_weight, Rng& rng, bool sample) {
    if (images.empty()) throw std::invalid_argument("pretrain_latent_supervisor: no images");
    std::vector<bool> saved;
    for (auto& p : bundle.params) {
        saved.push_back(p->trainable);
        const auto g = nn::group_of(*p);
        p->trainable = g == nn::ParamGroup::latent_trunk || g == nn::ParamGroup::latent_head;
    }
    const std::size_t batch = std::min<std::size_t>(4, images.size());
    Adam adam(0.9, 0.999, 1e-8);
    for (int s = 0; s < steps; ++s) {
        std::vector<Image> chunk;
        for (std::size_t k = 0; k < batch; ++k) chunk.push_back(images[(s * batch + k) % images.size()]);
        bundle.params.zero_grad();
        Tape tape(true);
        Var x = tape.constant(nn::images_to_tensor(chunk));
        Var trunk = nn::latent_trunk(tape, x, bundle);
        Var mu = nn::latent_mean(tape, trunk, bundle);
        Var z = mu;
        std::vector<Var> terms;
        std::vector<float> w;
        if (sample) {
            Var logvar = nn::latent_log_var(tape, trunk, bundle);
            nn::Tensor eps(mu.shape());
            for (float& e : eps.storage()) e = static_cast<float>(rng.normal());
            z = nn::add(mu, nn::mul(nn::exp(nn::scale(logvar, 0.5f)), tape.constant(std::move(eps))));
            if (kl_weight > 0.0) {
                terms.push_back(nn::kl_gaussian(mu, logvar));
                w.push_back(static_cast<float>(kl_weight));
            }
        }
        terms.push_back(nn::mse_loss(nn::decode_latent(tape, z, bundle), x));
        w.push_back(1.0f);
        Var loss = nn::weighted_sum(terms, w);
        if (!std::isfinite(loss.value()[0])) throw TrainingDiverged("latent supervisor pretraining diverged");
        tape.backward(loss);
        adam.step(bundle.params, lr);
    }
    std::size_t i = 0;
    for (auto& p : bundle.params) p->trainable = saved[i++];
    bundle.params.zero_grad();

    double err = 0.0;
    for (const Image& img : images) {
        const Image r = nn::reconstruct_clear(img, bundle);
        err += mse(r, img);
    }
    return err / static_cast<double>(images.size());
}

// ---------------------------------------------------------------------------
// Trainer

struct Trainer::Graph {
    loss::LossGraph terms;
};

Trainer::Trainer(RunConfig config, std::vector<Sample> samples)
    : config_(std::move(config)),
      samples_(std::move(samples)),
      adam_(config_.train.adam_beta1, config_.train.adam_beta2, config_.train.adam_eps),
      rng_(config_.train.seed, 7) {
    config_.validate();
    check_samples();
    bundle_ = nn::build_models(config_.model, config_.train.seed);
    if (config_.train.vae_pretrain_steps > 0) {
        std::vector<Image> clear;
        for (const Sample& s : samples_) clear.push_back(s.clear);
        const double err = pretrain_latent_supervisor(bundle_, clear, config_.train.vae_pretrain_steps,
                                                      config_.train.vae_learning_rate, config_.train.vae_kl_weight,
                                                      rng_);
        char buf[96];
        std::snprintf(buf, sizeof buf, "latent supervisor pretrained: reconstruction MSE %.6g", err);
        log_info(buf);
    }
}

Trainer::Trainer(const Checkpoint& ckpt, std::vector<Sample> samples)
    : config_(ckpt.config),
      samples_(std::move(samples)),
      bundle_(restore_bundle(ckpt)),
      adam_(config_.train.adam_beta1, config_.train.adam_beta2, config_.train.adam_eps),
      rng_(config_.train.seed, 7),
      step_(ckpt.step) {
    config_.validate();
    check_samples();
    adam_.import_state(ckpt, bundle_.params);
    rng_.set_state(ckpt.rng_state);
}

void Trainer::check_samples() const {
    if (samples_.empty()) throw DatasetError("training set is empty");
    const auto& m = config_.model.derain;
    for (const Sample& s : samples_)
        if (s.rainy.height() != m.height || s.rainy.width() != m.width)
            throw nn::ConfigMismatch("sample " + s.id + " is " + std::to_string(s.rainy.height()) + "x" +
                                     std::to_string(s.rainy.width()) + " but the model expects " +
                                     std::to_string(m.height) + "x" + std::to_string(m.width));
}

std::uint64_t Trainer::steps_per_epoch() const noexcept {
    const std::uint64_t n = samples_.size(), b = static_cast<std::uint64_t>(config_.train.batch_size);
    return (n + b - 1) / b;
}

std::uint64_t Trainer::total_steps() const noexcept {
    if (config_.train.steps > 0) return static_cast<std::uint64_t>(config_.train.steps);
    return static_cast<std::uint64_t>(config_.train.epochs) * steps_per_epoch();
}

std::vector<std::size_t> Trainer::batch_indices(std::uint64_t step) const {
    const std::uint64_t spe = steps_per_epoch();
    const std::uint64_t epoch = step / spe, pos = step % spe;
    std::vector<std::size_t> order(samples_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(config_.train.seed, 0x10000 + epoch);
    shuffle_rng.shuffle(order);
    const std::size_t b = static_cast<std::size_t>(config_.train.batch_size);
    const std::size_t first = static_cast<std::size_t>(pos) * b;
    const std::size_t last = std::min(order.size(), first + b);
    return {order.begin() + static_cast<std::ptrdiff_t>(first), order.begin() + static_cast<std::ptrdiff_t>(last)};
}

double Trainer::learning_rate(std::uint64_t step) const {
    const auto& t = config_.train;
    if (t.decay_mode == DecayMode::l2) return t.learning_rate;
    const std::uint64_t epoch = step / steps_per_epoch();
    return t.learning_rate * std::pow(t.decay_factor, static_cast<double>(epoch / t.decay_every_epochs));
}

Trainer::Graph Trainer::build_graph(Tape& tape, const Batch& batch) {
    const nn::ModelBundle& b = bundle_;
    const AblationConfig& ab = config_.ablation;
    Graph g;
    Var rainy = tape.constant(batch.rainy);
    Var clear = tape.constant(batch.clear);

    nn::DepthEncoding enc = nn::depth_encode(tape, rainy, b);
    Var d_r;
    std::vector<Var> disparities;
    if (ab.gt_depth_on) {
        nn::DepthOutputs out = nn::depth_decode(tape, enc, b);
        d_r = out.latent;
        disparities = std::move(out.disparities);
    } else if (ab.depth_latent_on) {
        d_r = nn::depth_latent(tape, enc, b);
    }
    nn::DerainOutputs der = nn::derain_forward(tape, rainy, ab.concatenation_on ? &enc : nullptr, b, ab);

    std::vector<Var> target_taps;
    {
        nn::NoGradGuard off(tape);
        target_taps = nn::extract_perceptual_features(tape, clear, b);
    }
    const std::vector<Var> pred_taps = nn::extract_perceptual_features(tape, der.derained, b);
    g.terms.terms[0] = loss::perceptual_loss(target_taps, pred_taps, b.config.features.tap_weights);

    if (ab.depth_latent_on) {
        Var d_c;
        {
            nn::NoGradGuard off(tape);
            d_c = nn::depth_latent(tape, nn::depth_encode(tape, clear, b), b);
        }
        g.terms.terms[1] = loss::consistency_loss(d_r, d_c);
    }
    if (ab.derain_latent_on) {
        Var trunk;
        {
            nn::NoGradGuard off(tape);
            trunk = nn::latent_trunk(tape, clear, b);
        }
        g.terms.terms[2] = loss::consistency_loss(der.latent, nn::latent_mean(tape, trunk, b));
    }
    g.terms.terms[3] = loss::mse_loss(der.derained, clear);
    if (ab.gt_depth_on) {
        nn::Tensor target = batch.depth;
        Var sum;
        for (std::size_t j = 0; j < disparities.size(); ++j) {
            if (j > 0) target = nn::area_downsample2(target);
            Var term = loss::mse_loss(disparities[j], tape.constant(target));
            sum = sum ? nn::add(sum, term) : term;
        }
        g.terms.terms[4] = sum;
    }
    return g;
}

loss::LossBreakdown Trainer::train_step(const Batch& batch, double lr) {
    bundle_.params.zero_grad();
    Tape tape(true);
    Graph g = build_graph(tape, batch);
    loss::CompositeResult r = loss::composite_loss(tape, g.terms, config_.weights, config_.ablation);
    tape.backward(r.total);

    stats_ = StepStats{};
    stats_.active_edges = tape.active_count();
    stats_.concat_ops = tape.op_count("concat_channels");
    stats_.node_count = tape.node_count();
    for (const auto& p : bundle_.params) {
        double s = 0.0;
        for (float v : p->grad.storage()) s += static_cast<double>(v) * v;
        stats_.grad_norm[p->name] = std::sqrt(s);
    }
    const double l2 = config_.train.decay_mode == DecayMode::l2 ? config_.train.decay_factor : 0.0;
    adam_.step(bundle_.params, lr, l2);
    return r.breakdown;
}

loss::LossBreakdown Trainer::evaluate_loss(const Batch& batch) {
    Tape tape(false);
    Graph g = build_graph(tape, batch);
    return loss::composite_loss(tape, g.terms, config_.weights, config_.ablation).breakdown;
}

StepRecord Trainer::step() {
    if (step_ >= total_steps()) throw std::logic_error("training schedule already complete");
    const auto idx = batch_indices(step_);
    const Batch batch = make_batch(samples_, idx);
    StepRecord rec;
    rec.epoch = step_ / steps_per_epoch();
    rec.learning_rate = learning_rate(step_);
    rec.loss = train_step(batch, rec.learning_rate);
    rec.step = ++step_;
    return rec;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint c;
    c.config = config_;
    c.step = step_;
    c.rng_state = rng_.state();
    store_parameters(c, bundle_);
    adam_.export_state(c);
    return c;
}

// ---------------------------------------------------------------------------
// Runs

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

fs::path checkpoint_path(const fs::path& run_dir, std::uint64_t step) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%06llu.ckpt", static_cast<unsigned long long>(step));
    return run_dir / "checkpoints" / name;
}

void echo_config(const RunConfig& config, const fs::path& run_dir) {
    const std::string text = to_text(config);
    std::ofstream(run_dir / "resolved.cfg") << text;
    std::istringstream in(text);
    std::string line;
    log_info("resolved config:");
    while (std::getline(in, line)) log_info("  " + line);
    log_info(std::string("depth-feature concatenation: ") +
             (config.ablation.concatenation_on ? "enabled" : "disabled"));
}

TrainResult run_loop(Trainer& trainer, const TrainOptions& options, std::ofstream& log_file, const fs::path& run_dir,
                     fs::path last_checkpoint) {
    TrainResult result;
    result.log_path = run_dir / "train_log.csv";
    result.last_checkpoint = last_checkpoint;
    const auto& cfg = trainer.config().train;
    const std::uint64_t total = trainer.total_steps();
    while (trainer.completed_steps() < total) {
        if (options.stop_after && trainer.completed_steps() >= *options.stop_after) break;
        StepRecord rec;
        try {
            rec = trainer.step();
        } catch (const loss::NonFiniteLoss& e) {
            throw TrainingDiverged(std::string(e.what()) + " at step " +
                                   std::to_string(trainer.completed_steps() + 1) + "; last good checkpoint: " +
                                   (result.last_checkpoint.empty() ? "none" : result.last_checkpoint.string()));
        }
        log_file << format_log_row(rec) << '\n';
        log_file.flush();
        result.log.push_back(rec);
        if (rec.step == 1 || rec.step % 25 == 0 || rec.step == total) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "step %llu/%llu  lr %.3g  total %.6f  derain_mse %.6f",
                          static_cast<unsigned long long>(rec.step), static_cast<unsigned long long>(total),
                          rec.learning_rate, rec.loss.total, rec.loss.derain_mse);
            log_info(buf);
        }
        if (cfg.checkpoint_interval > 0 && rec.step % static_cast<std::uint64_t>(cfg.checkpoint_interval) == 0) {
            result.last_checkpoint = checkpoint_path(run_dir, rec.step);
            save_checkpoint(trainer.checkpoint(), result.last_checkpoint);
        }
    }
    if (trainer.completed_steps() == total) {
        result.final_checkpoint = run_dir / "final.ckpt";
        save_checkpoint(trainer.checkpoint(), result.final_checkpoint);
        result.last_checkpoint = result.final_checkpoint;
    }
    return result;
}

std::vector<Sample> load_training_set(const RunConfig& config) {
    if (config.train.dataset.empty()) throw ConfigError("train.dataset is not set");
    return load_samples(read_manifest(config.train.dataset));
}

}  // namespace

std::string train_log_header() {
    std::string h = "step,epoch,lr";
    for (const char* n : loss::kTermNames) h += std::string(",") + n;
    return h + ",total";
}

std::string format_log_row(const StepRecord& r) {
    std::string row = std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + fmt17(r.learning_rate);
    for (double t : r.loss.terms()) row += "," + fmt17(t);
    return row + "," + fmt17(r.loss.total);
}

TrainResult train(const RunConfig& config, const TrainOptions& options) {
    config.validate();
    std::vector<Sample> samples = load_training_set(config);
    const fs::path run_dir = config.train.run_dir;
    fs::create_directories(run_dir);
    echo_config(config, run_dir);
    Trainer trainer(config, std::move(samples));
    std::ofstream log_file(run_dir / "train_log.csv", std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot write " + (run_dir / "train_log.csv").string());
    log_file << train_log_header() << '\n';
    return run_loop(trainer, options, log_file, run_dir, {});
}

TrainResult resume(const fs::path& checkpoint, const std::vector<std::string>& overrides,
                   const TrainOptions& options) {
    Checkpoint ckpt = load_checkpoint(checkpoint);
    RunConfig config = ckpt.config;
    apply_overrides(config, overrides);
    RunConfig fixed = config;
    fixed.train.steps = ckpt.config.train.steps;
    fixed.train.epochs = ckpt.config.train.epochs;
    fixed.train.run_dir = ckpt.config.train.run_dir;
    fixed.train.dataset = ckpt.config.train.dataset;
    fixed.train.checkpoint_interval = ckpt.config.train.checkpoint_interval;
    if (!(fixed == ckpt.config))
        throw ConfigError("resume overrides may only change train.steps, train.epochs, train.run_dir, "
                          "train.dataset and train.checkpoint_interval");
    config.validate();
    ckpt.config = config;

    std::vector<Sample> samples = load_training_set(config);
    const fs::path run_dir = config.train.run_dir;
    fs::create_directories(run_dir);
    echo_config(config, run_dir);
    log_info("resuming from " + checkpoint.string() + " at step " + std::to_string(ckpt.step));
    Trainer trainer(ckpt, std::move(samples));

    // Keep log rows up to the checkpoint step; later rows are recomputed.
    const fs::path log_path = run_dir / "train_log.csv";
    std::vector<std::string> kept;
    {
        std::ifstream in(log_path);
        std::string line;
        bool header = true;
        while (std::getline(in, line)) {
            if (header) {
                header = false;
                continue;
            }
            if (line.empty()) continue;
            const std::uint64_t step = std::stoull(line.substr(0, line.find(',')));
            if (step <= ckpt.step) kept.push_back(line);
        }
    }
    std::ofstream log_file(log_path, std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot write " + log_path.string());
    log_file << train_log_header() << '\n';
    for (const auto& l : kept) log_file << l << '\n';
    return run_loop(trainer, options, log_file, run_dir, checkpoint);
}

}  // namespace derain
