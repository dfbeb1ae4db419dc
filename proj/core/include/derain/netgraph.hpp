// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// The four networks of the deraining framework and their forward passes.
//
//   DerainAE           4-level strided-conv encoder, fully connected latent
//                      bottleneck, mirrored decoder with skip connections.
//                      Level k consumes the previous level concatenated with
//                      DepthNet encoder block k (same resolution) when
//                      concatenation is enabled.
//   DepthNet           frozen VGG-style encoder (two 3x3 convs per block,
//                      max-pool) and a trainable U-Net decoder with sigmoid
//                      disparity heads; head j predicts at 1/2^j resolution.
//   FeatureSupervisor  frozen conv stack; one tap per stage (stride 2 each).
//   LatentSupervisor   small VAE; frozen except its mean projection, which is
//                      the layer producing the clear-image latent.
//
// Parameter names are hierarchical: derain_ae.*, depth_net.encoder.*,
// depth_net.decoder.*, feature_supervisor.*, latent_supervisor.*.

#pragma once

#include "derain/ablation.hpp"
#include "derain/autograd.hpp"
#include "derain/image.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace derain::nn {

enum class UpsampleMode { transposed, nearest };

struct DerainAEConfig {
    std::array<int, 4> widths{32, 64, 128, 256};
    int latent_length = 150;
    int height = 64;
    int width = 64;
    bool concatenate_depth = true;

    friend bool operator==(const DerainAEConfig&, const DerainAEConfig&) = default;
};

struct DepthNetConfig {
    std::array<int, 4> widths{16, 32, 64, 128};
    int disparity_heads = 2;
    UpsampleMode upsample = UpsampleMode::transposed;

    friend bool operator==(const DepthNetConfig&, const DepthNetConfig&) = default;
};

struct FeatureSupervisorConfig {
    std::vector<int> widths{16, 32, 64};  // one tap per entry
    std::vector<double> tap_weights{1.0, 1.0, 1.0};

    friend bool operator==(const FeatureSupervisorConfig&, const FeatureSupervisorConfig&) = default;
};

struct LatentSupervisorConfig {
    std::array<int, 3> widths{16, 32, 64};

    friend bool operator==(const LatentSupervisorConfig&, const LatentSupervisorConfig&) = default;
};

struct ModelConfig {
    DerainAEConfig derain;
    DepthNetConfig depth;
    FeatureSupervisorConfig features;
    LatentSupervisorConfig latent;

    /// Throws std::invalid_argument describing the first violated constraint.
    void validate() const;
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class ConfigMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Conv {
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;
    int stride = 1;
    int pad = 1;
    int in_channels() const { return weight->value.shape().c; }
    int out_channels() const { return weight->value.shape().n; }
};

struct Deconv {
    Parameter* weight = nullptr;  // [cin, cout, k, k]
    Parameter* bias = nullptr;
    int stride = 2;
    int pad = 0;
};

struct Dense {
    Parameter* weight = nullptr;  // [out, in]
    Parameter* bias = nullptr;
};

struct DerainAE {
    std::array<Conv, 4> down;   // stride-2 level convs
    std::array<Conv, 4> refine; // stride-1 convs after each level
    Dense to_latent;
    Dense from_latent;
    std::array<Deconv, 4> up;   // index k-1 upsamples into level k-1 resolution
    std::array<Conv, 4> fuse;   // after concatenating the skip
    Conv head;
};

struct DepthNet {
    std::array<std::array<Conv, 2>, 4> encoder;
    Conv bottleneck;
    std::array<Deconv, 4> up;
    std::array<Conv, 4> up_conv;  // used in nearest mode instead of a transposed conv
    std::array<Conv, 4> fuse;
    std::vector<Conv> heads;      // heads[j] at 1/2^j resolution
};

struct FeatureSupervisor {
    std::vector<Conv> stages;
};

struct LatentSupervisor {
    std::array<Conv, 3> encoder;
    Dense mean;     // trainable "final output layer"
    Dense log_var;
    Dense decode_in;
    std::array<Deconv, 3> decoder;
};

/// Parameter groups used by the freeze policy and instrumentation.
enum class ParamGroup { derain_ae, depth_encoder, depth_decoder, feature_supervisor, latent_trunk, latent_head };
ParamGroup group_of(const Parameter& p);
std::string_view group_name(ParamGroup g);

class ModelBundle {
public:
    ModelBundle() = default;
    ModelBundle(ModelBundle&&) noexcept = default;
    ModelBundle& operator=(ModelBundle&&) noexcept = default;

    ModelConfig config;
    ParameterStore params;
    DerainAE derain;
    DepthNet depth;
    FeatureSupervisor features;
    LatentSupervisor latent;

    /// Parameters of the given group, in registration order.
    std::vector<Parameter*> group(ParamGroup g);
};

/// Builds all four networks with He-normal weights drawn from `seed`.
/// Frozen flags: DepthNet encoder, feature supervisor and the latent
/// supervisor trunk are frozen; DerainAE, DepthNet decoder and the latent
/// mean projection are trainable.
ModelBundle build_models(const ModelConfig& config, std::uint64_t seed);

/// Activation maps tapped from a network, ordered shallow to deep.
using FeaturePyramid = std::vector<Tensor>;

struct DepthEncoding {
    std::vector<Var> features;  // encoder block outputs at H, H/2, H/4, H/8
    Var deepest;                // pooled last block, H/16
};

struct DepthOutputs {
    DepthEncoding encoding;
    std::vector<Var> disparities;  // disparities[j] at H/2^j, values in (0,1)
    Var latent;                    // global average of the bottleneck block
};

struct DerainOutputs {
    Var derained;  // N x 3 x H x W in (0,1)
    Var latent;    // N x latent_length
};

/// Throws ConfigMismatch unless `x` is N x 3 x height x width of the config.
void check_input(const ModelBundle& bundle, const Shape& x);

DepthEncoding depth_encode(Tape& tape, Var image, const ModelBundle& bundle);
/// Bottleneck block and its global average, on top of an encoding.
Var depth_latent(Tape& tape, const DepthEncoding& encoding, const ModelBundle& bundle, Var* bottleneck = nullptr);
DepthOutputs depth_decode(Tape& tape, DepthEncoding encoding, const ModelBundle& bundle);
DepthOutputs depth_forward(Tape& tape, Var image, const ModelBundle& bundle);

/// `depth` may be null only when concatenation is disabled. Throws
/// ConfigMismatch when the ablation disagrees with how the DerainAE was built.
DerainOutputs derain_forward(Tape& tape, Var rainy, const DepthEncoding* depth, const ModelBundle& bundle,
                             const AblationConfig& ablation);

std::vector<Var> extract_perceptual_features(Tape& tape, Var image, const ModelBundle& bundle);

/// Flattened latent-supervisor features feeding the mean/log-variance heads.
Var latent_trunk(Tape& tape, Var image, const ModelBundle& bundle);
/// Mean of the latent distribution (no sampling).
Var latent_mean(Tape& tape, Var trunk, const ModelBundle& bundle);
Var latent_log_var(Tape& tape, Var trunk, const ModelBundle& bundle);
Var decode_latent(Tape& tape, Var z, const ModelBundle& bundle);

// Value-level conveniences; each runs on a private gradient-free tape.

/// Rainy image in, derained image out. Touches only the DerainAE and the
/// DepthNet encoder.
Image infer(const Image& rainy, const ModelBundle& bundle);
FeaturePyramid extract_perceptual_features(const Image& image, const ModelBundle& bundle);
std::vector<float> encode_clear_latent(const Image& clear, const ModelBundle& bundle);
/// Decodes the latent mean of `image` back to an image.
Image reconstruct_clear(const Image& image, const ModelBundle& bundle);

}  // namespace derain::nn
