// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/netgraph.hpp"

#include "derain/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace derain::nn {

namespace {

constexpr int kLevels = 4;

void check(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("model config: " + what);
}

class Builder {
public:
    Builder(ParameterStore& store, std::uint64_t seed) : store_(store), rng_(seed, 0x6e6574ULL) {}

    Conv conv(const std::string& name, int cin, int cout, int k, int stride, int pad, bool trainable) {
        Conv c;
        c.weight = &store_.add(name + ".weight", Shape{cout, cin, k, k}, trainable);
        c.bias = &store_.add(name + ".bias", Shape{cout, 1, 1, 1}, trainable);
        c.stride = stride;
        c.pad = pad;
        he_init(*c.weight, static_cast<double>(cin) * k * k);
        return c;
    }

    Deconv deconv(const std::string& name, int cin, int cout, int k, int stride, bool trainable) {
        Deconv d;
        d.weight = &store_.add(name + ".weight", Shape{cin, cout, k, k}, trainable);
        d.bias = &store_.add(name + ".bias", Shape{cout, 1, 1, 1}, trainable);
        d.stride = stride;
        d.pad = 0;
        // Non-overlapping 2x2 stride-2 kernels: each output sees cin inputs.
        he_init(*d.weight, static_cast<double>(cin) * (k / stride) * (k / stride));
        return d;
    }

    Dense dense(const std::string& name, int in, int out, bool trainable, double gain = 1.0) {
        Dense d;
        d.weight = &store_.add(name + ".weight", Shape{out, in, 1, 1}, trainable);
        d.bias = &store_.add(name + ".bias", Shape{out, 1, 1, 1}, trainable);
        const double std = gain * std::sqrt(1.0 / in);
        for (float& v : d.weight->value.storage()) v = static_cast<float>(std * rng_.normal());
        return d;
    }

private:
    void he_init(Parameter& p, double fan_in) {
        const double std = std::sqrt(2.0 / fan_in);
        for (float& v : p.value.storage()) v = static_cast<float>(std * rng_.normal());
    }

    ParameterStore& store_;
    Rng rng_;
};

Var apply(Tape& t, const Conv& c, Var x) {
    return conv2d(x, t.param(*c.weight), t.param(*c.bias), c.stride, c.pad);
}
Var apply(Tape& t, const Deconv& d, Var x) {
    return conv_transpose2d(x, t.param(*d.weight), t.param(*d.bias), d.stride, d.pad);
}
Var apply(Tape& t, const Dense& d, Var x) { return linear(x, t.param(*d.weight), t.param(*d.bias)); }

int derain_skip_channels(const DerainAEConfig& c, int level) {
    // Decoder output width at level k (1-based, full resolution is k = 1).
    return level >= 2 ? c.widths[level - 2] : c.widths[0];
}

int bottleneck_features(const ModelConfig& c) {
    return c.derain.widths[3] * (c.derain.height / 16) * (c.derain.width / 16);
}

int latent_trunk_features(const ModelConfig& c) {
    return c.latent.widths[2] * (c.derain.height / 8) * (c.derain.width / 8);
}

std::string level_name(const char* prefix, int k) { return std::string(prefix) + std::to_string(k); }

}  // namespace

void ModelConfig::validate() const {
    check(derain.height >= 16 && derain.width >= 16, "resolution must be at least 16x16");
    check(derain.height % 16 == 0 && derain.width % 16 == 0, "resolution must be divisible by 2^4 = 16");
    for (int w : derain.widths) check(w > 0, "DerainAE widths must be positive");
    for (int w : depth.widths) check(w > 0, "DepthNet widths must be positive");
    check(derain.latent_length > 0, "latent length must be positive");
    check(depth.disparity_heads >= 2 && depth.disparity_heads <= kLevels, "disparity heads must be in [2, 4]");
    check(!features.widths.empty(), "feature supervisor needs at least one tap");
    check(features.tap_weights.size() == features.widths.size(), "one perceptual weight per feature tap");
    for (int w : features.widths) check(w > 0, "feature supervisor widths must be positive");
    for (double w : features.tap_weights) check(std::isfinite(w) && w >= 0.0, "perceptual weights must be >= 0");
    const int stages = static_cast<int>(features.widths.size());
    check(stages < 31 && (derain.height >> stages) >= 1 && (derain.width >> stages) >= 1 &&
              derain.height % (1 << stages) == 0 && derain.width % (1 << stages) == 0,
          "resolution too small for the deepest feature tap");
    for (int w : latent.widths) check(w > 0, "latent supervisor widths must be positive");
}

ParamGroup group_of(const Parameter& p) {
    const std::string_view n = p.name;
    if (n.starts_with("derain_ae.")) return ParamGroup::derain_ae;
    if (n.starts_with("depth_net.encoder.")) return ParamGroup::depth_encoder;
    if (n.starts_with("depth_net.decoder.")) return ParamGroup::depth_decoder;
    if (n.starts_with("feature_supervisor.")) return ParamGroup::feature_supervisor;
    if (n.starts_with("latent_supervisor.mean.")) return ParamGroup::latent_head;
    if (n.starts_with("latent_supervisor.")) return ParamGroup::latent_trunk;
    throw std::logic_error("parameter outside every group: " + p.name);
}

std::string_view group_name(ParamGroup g) {
    switch (g) {
        case ParamGroup::derain_ae: return "derain_ae";
        case ParamGroup::depth_encoder: return "depth_encoder";
        case ParamGroup::depth_decoder: return "depth_decoder";
        case ParamGroup::feature_supervisor: return "feature_supervisor";
        case ParamGroup::latent_trunk: return "latent_trunk";
        case ParamGroup::latent_head: return "latent_head";
    }
    return "?";
}

std::vector<Parameter*> ModelBundle::group(ParamGroup g) {
    std::vector<Parameter*> out;
    for (auto& p : params)
        if (group_of(*p) == g) out.push_back(p.get());
    return out;
}

ModelBundle build_models(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelBundle b;
    b.config = config;
    Builder make(b.params, seed);
    const auto& dc = config.derain;
    const auto& pc = config.depth;

    // DepthNet encoder (frozen) and decoder (trainable).
    for (int k = 1; k <= kLevels; ++k) {
        const int cin = k == 1 ? 3 : pc.widths[k - 2];
        const std::string base = level_name("depth_net.encoder.block", k);
        b.depth.encoder[k - 1][0] = make.conv(base + ".conv1", cin, pc.widths[k - 1], 3, 1, 1, false);
        b.depth.encoder[k - 1][1] = make.conv(base + ".conv2", pc.widths[k - 1], pc.widths[k - 1], 3, 1, 1, false);
    }
    b.depth.bottleneck = make.conv("depth_net.decoder.bottleneck", pc.widths[3], pc.widths[3], 3, 1, 1, true);
    for (int k = kLevels; k >= 1; --k) {
        const int cin = k == kLevels ? pc.widths[3] : pc.widths[k];
        const int cout = pc.widths[k - 1];
        const std::string base = level_name("depth_net.decoder.stage", k);
        if (pc.upsample == UpsampleMode::transposed)
            b.depth.up[k - 1] = make.deconv(base + ".up", cin, cout, 2, 2, true);
        else
            b.depth.up_conv[k - 1] = make.conv(base + ".up", cin, cout, 3, 1, 1, true);
        b.depth.fuse[k - 1] = make.conv(base + ".fuse", 2 * cout, cout, 3, 1, 1, true);
    }
    for (int j = 0; j < pc.disparity_heads; ++j)
        b.depth.heads.push_back(make.conv(level_name("depth_net.decoder.disp", j), pc.widths[j], 1, 3, 1, 1, true));

    // DerainAE (trainable).
    for (int k = 1; k <= kLevels; ++k) {
        const int prev = k == 1 ? 3 : dc.widths[k - 2];
        const int cin = prev + (dc.concatenate_depth ? pc.widths[k - 1] : 0);
        b.derain.down[k - 1] = make.conv(level_name("derain_ae.down", k), cin, dc.widths[k - 1], 3, 2, 1, true);
        b.derain.refine[k - 1] =
            make.conv(level_name("derain_ae.refine", k), dc.widths[k - 1], dc.widths[k - 1], 3, 1, 1, true);
    }
    const int flat = bottleneck_features(config);
    b.derain.to_latent = make.dense("derain_ae.to_latent", flat, dc.latent_length, true);
    b.derain.from_latent = make.dense("derain_ae.from_latent", dc.latent_length, flat, true, std::sqrt(2.0));
    for (int k = kLevels; k >= 1; --k) {
        const int cin = k == kLevels ? dc.widths[3] : derain_skip_channels(dc, k + 1);
        const int cout = derain_skip_channels(dc, k);
        const int skip = k == 1 ? 3 : dc.widths[k - 2];
        b.derain.up[k - 1] = make.deconv(level_name("derain_ae.up", k), cin, cout, 2, 2, true);
        b.derain.fuse[k - 1] = make.conv(level_name("derain_ae.fuse", k), cout + skip, cout, 3, 1, 1, true);
    }
    b.derain.head = make.conv("derain_ae.head", dc.widths[0], 3, 3, 1, 1, true);

    // Feature supervisor (frozen).
    for (std::size_t s = 0; s < config.features.widths.size(); ++s) {
        const int cin = s == 0 ? 3 : config.features.widths[s - 1];
        b.features.stages.push_back(make.conv("feature_supervisor.stage" + std::to_string(s + 1), cin,
                                              config.features.widths[s], 3, 1, 1, false));
    }

    // Latent supervisor: frozen trunk, trainable mean projection.
    const auto& lw = config.latent.widths;
    for (int i = 0; i < 3; ++i)
        b.latent.encoder[i] = make.conv("latent_supervisor.encoder" + std::to_string(i + 1), i == 0 ? 3 : lw[i - 1],
                                        lw[i], 3, 2, 1, false);
    const int trunk = latent_trunk_features(config);
    b.latent.mean = make.dense("latent_supervisor.mean", trunk, dc.latent_length, true);
    b.latent.log_var = make.dense("latent_supervisor.log_var", trunk, dc.latent_length, false, 0.1);
    b.latent.decode_in = make.dense("latent_supervisor.decode_in", dc.latent_length, trunk, false, std::sqrt(2.0));
    const std::array<int, 3> dec_out{lw[1], lw[0], 3};
    const std::array<int, 3> dec_in{lw[2], lw[1], lw[0]};
    for (int i = 0; i < 3; ++i)
        b.latent.decoder[i] =
            make.deconv("latent_supervisor.decoder" + std::to_string(i + 1), dec_in[i], dec_out[i], 2, 2, false);
    return b;
}

void check_input(const ModelBundle& bundle, const Shape& x) {
    const auto& c = bundle.config.derain;
    if (x.c != 3 || x.h != c.height || x.w != c.width)
        throw ConfigMismatch("input " + x.str() + " does not match model resolution " + std::to_string(c.height) +
                             "x" + std::to_string(c.width));
}

DepthEncoding depth_encode(Tape& tape, Var image, const ModelBundle& bundle) {
    check_input(bundle, image.shape());
    DepthEncoding enc;
    Var x = image;
    for (int k = 0; k < kLevels; ++k) {
        x = relu(apply(tape, bundle.depth.encoder[k][0], x));
        x = relu(apply(tape, bundle.depth.encoder[k][1], x));
        enc.features.push_back(x);
        x = max_pool2(x);
    }
    enc.deepest = x;
    return enc;
}

Var depth_latent(Tape& tape, const DepthEncoding& encoding, const ModelBundle& bundle, Var* bottleneck) {
    Var b = relu(apply(tape, bundle.depth.bottleneck, encoding.deepest));
    if (bottleneck) *bottleneck = b;
    return global_avg_pool(b);
}

DepthOutputs depth_decode(Tape& tape, DepthEncoding encoding, const ModelBundle& bundle) {
    DepthOutputs out;
    Var x;
    out.latent = depth_latent(tape, encoding, bundle, &x);
    std::array<Var, kLevels> stage{};
    for (int k = kLevels; k >= 1; --k) {
        Var up = bundle.config.depth.upsample == UpsampleMode::transposed
                     ? apply(tape, bundle.depth.up[k - 1], x)
                     : apply(tape, bundle.depth.up_conv[k - 1], upsample_nearest2(x));
        up = relu(up);
        x = relu(apply(tape, bundle.depth.fuse[k - 1], concat_channels(up, encoding.features[k - 1])));
        stage[k - 1] = x;
    }
    for (std::size_t j = 0; j < bundle.depth.heads.size(); ++j)
        out.disparities.push_back(sigmoid(apply(tape, bundle.depth.heads[j], stage[j])));
    out.encoding = std::move(encoding);
    return out;
}

DepthOutputs depth_forward(Tape& tape, Var image, const ModelBundle& bundle) {
    return depth_decode(tape, depth_encode(tape, image, bundle), bundle);
}

DerainOutputs derain_forward(Tape& tape, Var rainy, const DepthEncoding* depth, const ModelBundle& bundle,
                             const AblationConfig& ablation) {
    check_input(bundle, rainy.shape());
    const auto& c = bundle.config.derain;
    if (ablation.concatenation_on != c.concatenate_depth)
        throw ConfigMismatch(std::string("DerainAE was built ") + (c.concatenate_depth ? "with" : "without") +
                             " depth concatenation but the ablation asks for the opposite");
    if (c.concatenate_depth && (!depth || depth->features.size() != kLevels))
        throw ConfigMismatch("depth concatenation enabled but no DepthNet features supplied");

    const int n = rainy.shape().n;
    std::array<Var, kLevels + 1> skips{};
    skips[0] = rainy;
    Var x = rainy;
    for (int k = 1; k <= kLevels; ++k) {
        if (c.concatenate_depth) x = concat_channels(x, depth->features[k - 1]);
        x = relu(apply(tape, bundle.derain.down[k - 1], x));
        x = relu(apply(tape, bundle.derain.refine[k - 1], x));
        skips[k] = x;
    }
    const Shape deepest = x.shape();
    DerainOutputs out;
    out.latent = apply(tape, bundle.derain.to_latent, x);
    x = relu(apply(tape, bundle.derain.from_latent, out.latent));
    x = reshape(x, Shape{n, deepest.c, deepest.h, deepest.w});
    for (int k = kLevels; k >= 1; --k) {
        Var up = relu(apply(tape, bundle.derain.up[k - 1], x));
        x = relu(apply(tape, bundle.derain.fuse[k - 1], concat_channels(up, skips[k - 1])));
    }
    out.derained = sigmoid(apply(tape, bundle.derain.head, x));
    return out;
}

std::vector<Var> extract_perceptual_features(Tape& tape, Var image, const ModelBundle& bundle) {
    check_input(bundle, image.shape());
    std::vector<Var> taps;
    Var x = image;
    for (const Conv& stage : bundle.features.stages) {
        x = max_pool2(relu(apply(tape, stage, x)));
        taps.push_back(x);
    }
    return taps;
}

Var latent_trunk(Tape& tape, Var image, const ModelBundle& bundle) {
    check_input(bundle, image.shape());
    Var x = image;
    for (const Conv& c : bundle.latent.encoder) x = relu(apply(tape, c, x));
    const Shape s = x.shape();
    return reshape(x, Shape{s.n, s.c * s.h * s.w, 1, 1});
}

Var latent_mean(Tape& tape, Var trunk, const ModelBundle& bundle) { return apply(tape, bundle.latent.mean, trunk); }

Var latent_log_var(Tape& tape, Var trunk, const ModelBundle& bundle) {
    return apply(tape, bundle.latent.log_var, trunk);
}

Var decode_latent(Tape& tape, Var z, const ModelBundle& bundle) {
    const auto& cfg = bundle.config;
    Var x = relu(apply(tape, bundle.latent.decode_in, z));
    x = reshape(x, Shape{z.shape().n, cfg.latent.widths[2], cfg.derain.height / 8, cfg.derain.width / 8});
    x = relu(apply(tape, bundle.latent.decoder[0], x));
    x = relu(apply(tape, bundle.latent.decoder[1], x));
    return sigmoid(apply(tape, bundle.latent.decoder[2], x));
}

Image infer(const Image& rainy, const ModelBundle& bundle) {
    Tape tape(false);
    Var x = tape.constant(image_to_tensor(rainy));
    const AblationConfig ablation{.concatenation_on = bundle.config.derain.concatenate_depth};
    DerainOutputs out;
    if (bundle.config.derain.concatenate_depth) {
        const DepthEncoding enc = depth_encode(tape, x, bundle);
        out = derain_forward(tape, x, &enc, bundle, ablation);
    } else {
        out = derain_forward(tape, x, nullptr, bundle, ablation);
    }
    return tensor_to_image(out.derained.value());
}

FeaturePyramid extract_perceptual_features(const Image& image, const ModelBundle& bundle) {
    Tape tape(false);
    FeaturePyramid out;
    for (Var v : extract_perceptual_features(tape, tape.constant(image_to_tensor(image)), bundle))
        out.push_back(v.value());
    return out;
}

std::vector<float> encode_clear_latent(const Image& clear, const ModelBundle& bundle) {
    Tape tape(false);
    Var mu = latent_mean(tape, latent_trunk(tape, tape.constant(image_to_tensor(clear)), bundle), bundle);
    const auto& v = mu.value().storage();
    return {v.begin(), v.end()};
}

Image reconstruct_clear(const Image& image, const ModelBundle& bundle) {
    Tape tape(false);
    Var mu = latent_mean(tape, latent_trunk(tape, tape.constant(image_to_tensor(image)), bundle), bundle);
    return tensor_to_image(decode_latent(tape, mu, bundle).value());
}

}  // namespace derain::nn
