// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/netgraph.hpp"
#include "derain/rng.hpp"
#include "derain/trainpipe.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace derain;
using namespace derain::nn;

namespace {

ModelConfig small_model(int size = 32) {
    ModelConfig c = fixture::small_config("", "").model;
    c.derain.height = size;
    c.derain.width = size;
    return c;
}

Tensor random_batch(int n, int h, int w, std::uint64_t seed) {
    std::vector<Image> imgs;
    for (int i = 0; i < n; ++i) imgs.push_back(fixture::random_image(h, w, seed + i));
    return images_to_tensor(imgs);
}

/// Closed-form parameter count from the configuration alone.
long expected_parameters(const ModelConfig& c) {
    using oracle::conv_params;
    using oracle::dense_params;
    const auto& d = c.derain.widths;
    const auto& p = c.depth.widths;
    long n = 0;
    // DepthNet encoder: two 3x3 convs per block.
    for (int k = 0; k < 4; ++k) n += conv_params(k == 0 ? 3 : p[k - 1], p[k], 3) + conv_params(p[k], p[k], 3);
    // Decoder: bottleneck, per stage an upsampler and a fuse conv, then heads.
    n += conv_params(p[3], p[3], 3);
    for (int k = 3; k >= 0; --k) {
        const int cin = k == 3 ? p[3] : p[k + 1];
        n += c.depth.upsample == UpsampleMode::transposed ? conv_params(cin, p[k], 2) : conv_params(cin, p[k], 3);
        n += conv_params(2 * p[k], p[k], 3);
    }
    for (int j = 0; j < c.depth.disparity_heads; ++j) n += conv_params(p[j], 1, 3);
    // DerainAE.
    for (int k = 0; k < 4; ++k) {
        const int cin = (k == 0 ? 3 : d[k - 1]) + (c.derain.concatenate_depth ? p[k] : 0);
        n += conv_params(cin, d[k], 3) + conv_params(d[k], d[k], 3);
    }
    const long flat = long(d[3]) * (c.derain.height / 16) * (c.derain.width / 16);
    n += dense_params(flat, c.derain.latent_length) + dense_params(c.derain.latent_length, flat);
    // Up path: level k+1 -> k; level widths d[k-1] (k >= 1), d[0] at full resolution.
    const int out_w[4] = {d[0], d[0], d[1], d[2]};
    const int skip_w[4] = {3, d[0], d[1], d[2]};
    for (int k = 3; k >= 0; --k) {
        const int cin = k == 3 ? d[3] : out_w[k + 1];
        n += conv_params(cin, out_w[k], 2) + conv_params(out_w[k] + skip_w[k], out_w[k], 3);
    }
    n += conv_params(d[0], 3, 3);
    // Feature supervisor.
    for (std::size_t s = 0; s < c.features.widths.size(); ++s)
        n += conv_params(s == 0 ? 3 : c.features.widths[s - 1], c.features.widths[s], 3);
    // Latent supervisor.
    const auto& l = c.latent.widths;
    n += conv_params(3, l[0], 3) + conv_params(l[0], l[1], 3) + conv_params(l[1], l[2], 3);
    const long trunk = long(l[2]) * (c.derain.height / 8) * (c.derain.width / 8);
    n += 2 * dense_params(trunk, c.derain.latent_length) + dense_params(c.derain.latent_length, trunk);
    n += conv_params(l[2], l[1], 2) + conv_params(l[1], l[0], 2) + conv_params(l[0], 3, 2);
    return n;
}

Parameter& param(ModelBundle& b, const std::string& name) {
    Parameter* p = b.params.find(name);
    REQUIRE_MESSAGE(p != nullptr, name);
    return *p;
}

}  // namespace

TEST_SUITE("netgraph") {
    TEST_CASE("default configuration") {
        const ModelConfig c;
        CHECK(c.derain.latent_length == 150);
        CHECK(c.depth.disparity_heads >= 2);
        CHECK_NOTHROW(c.validate());
        CHECK(c.features.widths.size() == 3);
    }

    TEST_CASE("config validation") {
        ModelConfig c = small_model();
        c.derain.height = 40;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
        c = small_model();
        c.derain.height = c.derain.width = 8;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
        c = small_model();
        c.depth.disparity_heads = 1;
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
        c = small_model();
        c.features.tap_weights.pop_back();
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
        c = small_model(16);
        c.features.widths = {4, 4, 4, 4, 4};
        c.features.tap_weights.assign(5, 1.0);
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    }

    TEST_CASE("parameter count matches the closed form") {
        for (bool concat : {true, false})
            for (auto mode : {UpsampleMode::transposed, UpsampleMode::nearest}) {
                ModelConfig c = small_model(32);
                c.derain.concatenate_depth = concat;
                c.depth.upsample = mode;
                c.depth.disparity_heads = 3;
                const ModelBundle b = build_models(c, 1);
                CHECK(static_cast<long>(b.params.scalar_count()) == expected_parameters(c));
            }
        const ModelBundle def = build_models(ModelConfig{}, 1);
        CHECK(static_cast<long>(def.params.scalar_count()) == expected_parameters(ModelConfig{}));
    }

    TEST_CASE("same seed gives identical initial parameters") {
        const ModelBundle a = build_models(small_model(), 5), b = build_models(small_model(), 5);
        const ModelBundle c = build_models(small_model(), 6);
        REQUIRE(a.params.size() == b.params.size());
        bool differs = false;
        for (std::size_t i = 0; i < a.params.size(); ++i) {
            CHECK(a.params[i].name == b.params[i].name);
            CHECK(a.params[i].value == b.params[i].value);
            differs = differs || !(a.params[i].value == c.params[i].value);
        }
        CHECK(differs);
    }

    TEST_CASE("freeze policy") {
        ModelBundle b = build_models(small_model(), 1);
        for (const auto& p : b.params) {
            const ParamGroup g = group_of(*p);
            const bool trainable = g == ParamGroup::derain_ae || g == ParamGroup::depth_decoder ||
                                   g == ParamGroup::latent_head;
            CHECK_MESSAGE(p->trainable == trainable, p->name);
        }
        CHECK(b.group(ParamGroup::latent_head).size() == 2);
        CHECK(b.group(ParamGroup::latent_head)[0]->name == "latent_supervisor.mean.weight");
    }

    TEST_CASE("shape preservation at 32, 64 and 96 px") {
        for (int size : {32, 64, 96}) {
            CAPTURE(size);
            ModelConfig c = small_model(size);
            const ModelBundle b = build_models(c, 2);
            Tape t(false);
            Var x = t.constant(random_batch(2, size, size, 3));
            DepthOutputs d = depth_forward(t, x, b);
            DerainOutputs o = derain_forward(t, x, &d.encoding, b, {});
            CHECK(o.derained.shape() == Shape{2, 3, size, size});
            CHECK(o.latent.shape() == Shape{2, c.derain.latent_length, 1, 1});
            REQUIRE(d.disparities.size() == static_cast<std::size_t>(c.depth.disparity_heads));
            for (std::size_t j = 0; j < d.disparities.size(); ++j)
                CHECK(d.disparities[j].shape() == Shape{2, 1, size >> j, size >> j});
            CHECK(d.latent.shape() == Shape{2, c.depth.widths[3], 1, 1});
            for (float v : o.derained.value().span()) CHECK((v >= 0.0f && v <= 1.0f));
            const Image out = infer(fixture::random_image(size, size, 4), b);
            CHECK(out.height() == size);
            CHECK(out.width() == size);
        }
    }

    TEST_CASE("default model: 64x64 in, 64x64 out, latent length 150") {
        const ModelBundle b = build_models(ModelConfig{}, 1);
        Tape t(false);
        Var x = t.constant(random_batch(1, 64, 64, 9));
        DepthOutputs d = depth_forward(t, x, b);
        DerainOutputs o = derain_forward(t, x, &d.encoding, b, {});
        CHECK(o.derained.shape() == Shape{1, 3, 64, 64});
        CHECK(o.latent.shape().c == 150);
        CHECK(d.disparities[0].shape() == Shape{1, 1, 64, 64});
        CHECK(d.disparities[1].shape() == Shape{1, 1, 32, 32});
        CHECK(encode_clear_latent(fixture::random_image(64, 64, 1), b).size() == 150);
        const FeaturePyramid f = extract_perceptual_features(fixture::random_image(64, 64, 1), b);
        REQUIRE(f.size() == 3);
        for (std::size_t l = 0; l < 3; ++l) {
            CHECK(f[l].shape().h == (32 >> l));
            CHECK(f[l].shape().w == (32 >> l));
            CHECK(f[l].shape().c == b.config.features.widths[l]);
        }
    }

    TEST_CASE("disparities lie strictly inside (0, 1)") {
        ModelConfig c = small_model();
        c.depth.disparity_heads = 4;
        const ModelBundle b = build_models(c, 3);
        Tape t(false);
        // Include extreme inputs to push the sigmoid.
        Tensor x = random_batch(2, 32, 32, 5);
        for (std::size_t i = 0; i < x.numel(); i += 2) x[i] = i % 4 ? 1.0f : 0.0f;
        DepthOutputs d = depth_forward(t, t.constant(x), b);
        for (const Var& disp : d.disparities)
            for (float v : disp.value().span()) CHECK((v > 0.0f && v < 1.0f));
    }

    TEST_CASE("concatenation channel arithmetic") {
        ModelConfig on = small_model();
        ModelConfig off = on;
        off.derain.concatenate_depth = false;
        ModelBundle a = build_models(on, 1), b = build_models(off, 1);
        for (int k = 1; k <= 4; ++k) {
            const std::string name = "derain_ae.down" + std::to_string(k) + ".weight";
            const int prev = k == 1 ? 3 : on.derain.widths[k - 2];
            CHECK(param(a, name).value.shape().c == prev + on.depth.widths[k - 1]);
            CHECK(param(b, name).value.shape().c == prev);
            CHECK(param(a, name).value.shape().n == on.derain.widths[k - 1]);
        }

        // Setting D runs without depth features and records four fewer concats.
        Tape ta(false), tb(false);
        Tensor x = random_batch(1, 32, 32, 2);
        Var xa = ta.constant(x), xb = tb.constant(x);
        DepthEncoding enc = depth_encode(ta, xa, a);
        const std::size_t before = ta.op_count("concat_channels");
        derain_forward(ta, xa, &enc, a, {});
        const std::size_t full = ta.op_count("concat_channels") - before;
        derain_forward(tb, xb, nullptr, b, apply_ablation("D"));
        CHECK(full - tb.op_count("concat_channels") == 4);

        CHECK_THROWS_AS(derain_forward(tb, xb, nullptr, b, {}), ConfigMismatch);
        CHECK_THROWS_AS(derain_forward(ta, xa, nullptr, a, {}), ConfigMismatch);
    }

    TEST_CASE("resolution mismatch is rejected") {
        const ModelBundle b = build_models(small_model(32), 1);
        CHECK_THROWS_AS(infer(fixture::random_image(64, 64, 1), b), ConfigMismatch);
        CHECK_THROWS_AS(encode_clear_latent(fixture::random_image(32, 48, 1), b), ConfigMismatch);
        CHECK_THROWS_AS(extract_perceptual_features(fixture::random_image(16, 16, 1), b), ConfigMismatch);
    }

    TEST_CASE("inference touches only the DerainAE and the DepthNet encoder") {
        ModelBundle b = build_models(small_model(), 1);
        b.params.reset_reads();
        const Image x = fixture::random_image(32, 32, 7);
        const Image y1 = infer(x, b);
        for (const auto& p : b.params) {
            const ParamGroup g = group_of(*p);
            if (g == ParamGroup::derain_ae || g == ParamGroup::depth_encoder)
                CHECK_MESSAGE(p->reads == 1, p->name);
            else
                CHECK_MESSAGE(p->reads == 0, p->name);
        }
        CHECK(infer(x, b) == y1);
    }

    TEST_CASE("frozen networks are deterministic") {
        const ModelBundle b = build_models(small_model(), 1);
        const Image x = fixture::random_image(32, 32, 8);
        CHECK(extract_perceptual_features(x, b) == extract_perceptual_features(x, b));
        CHECK(encode_clear_latent(x, b) == encode_clear_latent(x, b));
        Tape t1(false), t2(false);
        const auto e1 = depth_encode(t1, t1.constant(image_to_tensor(x)), b);
        const auto e2 = depth_encode(t2, t2.constant(image_to_tensor(x)), b);
        for (std::size_t k = 0; k < e1.features.size(); ++k) CHECK(e1.features[k].value() == e2.features[k].value());
    }

    TEST_CASE("latent supervisor reconstructs constant images after a toy fit") {
        ModelConfig c = small_model();
        ModelBundle b = build_models(c, 4);
        std::vector<Image> imgs;
        for (float v : {0.2f, 0.4f, 0.6f, 0.8f}) imgs.emplace_back(32, 32, v);
        Rng rng(1);
        // Step-decayed learning rate; each stage restarts the optimizer.
        double mse = 0.0;
        for (double lr : {3e-3, 1e-3, 3e-4, 1e-4}) mse = pretrain_latent_supervisor(b, imgs, 1000, lr, 0.0, rng, false);
        MESSAGE("final reconstruction mse " << mse);
        // Per image: RMS pixel error and error of the mean level, both under 1e-3.
        for (const Image& img : imgs) {
            const Image r = reconstruct_clear(img, b);
            double sq = 0.0, level = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) {
                const double e = double(r.data()[i]) - img.data()[i];
                sq += e * e;
                level += r.data()[i];
            }
            CAPTURE(img.data()[0]);
            CHECK(std::sqrt(sq / r.size()) < 1e-3);
            CHECK(std::abs(level / r.size() - img.data()[0]) < 1e-3);
        }
        // Trainability flags are restored afterwards.
        for (const auto& p : b.params)
            if (group_of(*p) == ParamGroup::latent_trunk) CHECK_FALSE(p->trainable);
    }
}
