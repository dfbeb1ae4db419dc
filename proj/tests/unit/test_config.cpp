// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/checkpoint.hpp"
#include "derain/config.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <fstream>

using namespace derain;

TEST_SUITE("config") {
    TEST_CASE("defaults") {
        const RunConfig c;
        CHECK(c.train.batch_size == 4);
        CHECK(c.train.learning_rate == 5e-3);
        CHECK(c.train.decay_factor == 0.9);
        CHECK(c.train.epochs == 150);
        CHECK(c.weights.as_array() == std::array<double, 5>{1.0, 0.5, 0.5, 10.0, 2.0});
        CHECK(c.model.derain.latent_length == 150);
        CHECK_NOTHROW(c.validate());
    }

    TEST_CASE("text round trip is exact") {
        RunConfig c;
        apply_overrides(c, {"train.learning_rate=0.0012345678901234567", "ablation.preset=E", "model.height=96",
                            "loss.depth_mse=2.5", "model.derain_widths=8,16,32,64", "train.decay_mode=l2"});
        const RunConfig back = parse_config(to_text(c));
        CHECK(back == c);
        CHECK(to_text(back) == to_text(c));
        CHECK(back.ablation == apply_ablation("E"));
        CHECK_FALSE(back.model.derain.concatenate_depth);
    }

    TEST_CASE("later sources win and presets apply where they appear") {
        RunConfig c;
        apply_text(c, "ablation.preset = D\nablation.concatenation = true\n# comment\n\ntrain.seed = 3 # trailing\n",
                   "test");
        CHECK(c.ablation.concatenation_on);
        CHECK(c.train.seed == 3);
        apply_overrides(c, {"ablation.preset=Full", "train.seed=4"});
        CHECK(c.ablation == AblationConfig{});
        CHECK(c.train.seed == 4);
    }

    TEST_CASE("errors name the key and origin") {
        RunConfig c;
        try {
            apply_text(c, "train.seed = 1\ntrain.nonsense = 2\n", "my.cfg");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("my.cfg:2") != std::string::npos);
            CHECK(msg.find("train.nonsense") != std::string::npos);
        }
        CHECK_THROWS_AS(apply_overrides(c, {"train.batch_size=four"}), ConfigError);
        CHECK_THROWS_AS(apply_overrides(c, {"train.batch_size"}), ConfigError);
        CHECK_THROWS_AS(apply_overrides(c, {"ablation.preset=Q"}), ConfigError);
        CHECK_THROWS_AS(apply_overrides(c, {"model.derain_widths=1,2,3"}), ConfigError);
        CHECK_THROWS_AS(apply_overrides(c, {"train.decay_mode=sometimes"}), ConfigError);
        CHECK_THROWS_AS(apply_file(c, "/nonexistent/x.cfg"), ConfigError);
    }

    TEST_CASE("validation") {
        RunConfig c;
        c.train.batch_size = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = RunConfig{};
        c.model.derain.height = 50;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = RunConfig{};
        c.model.derain.concatenate_depth = false;  // disagrees with ablation
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = RunConfig{};
        c.weights.derain_mse = -1;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }

    TEST_CASE("key list is sorted and complete") {
        const auto keys = config_keys();
        CHECK(std::is_sorted(keys.begin(), keys.end()));
        for (const char* k : {"train.batch_size", "train.learning_rate", "ablation.preset", "loss.perceptual",
                              "model.latent_length", "model.disparity_heads"})
            CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
        // Every emitted key parses back.
        const std::string text = to_text(RunConfig{});
        for (const auto& k : keys)
            if (k != "ablation.preset") CHECK_MESSAGE(text.find(k + " = ") != std::string::npos, k);
    }
}

TEST_SUITE("checkpoint") {
    TEST_CASE("save/load round trip") {
        fixture::TempDir dir("ckpt");
        Checkpoint c;
        c.config = fixture::small_config("data", "run");
        c.step = 12;
        c.adam_t = 12;
        c.rng_state = "123 456";
        c.tensors["param/a"] = nn::Tensor(nn::Shape{2, 3, 1, 1}, {1, 2, 3, 4, 5, 6});
        c.tensors["adam_m/a"] = nn::Tensor(nn::Shape{2, 3, 1, 1}, -0.5f);
        save_checkpoint(c, dir / "x.ckpt");
        const Checkpoint back = load_checkpoint(dir / "x.ckpt");
        CHECK(back == c);
        save_checkpoint(back, dir / "y.ckpt");
        CHECK(file_hash(dir / "x.ckpt") == file_hash(dir / "y.ckpt"));
        CHECK(file_hash(dir / "x.ckpt").size() == 16);
        CHECK_FALSE(std::filesystem::exists(dir / "x.ckpt.tmp"));
    }

    TEST_CASE("corrupt archives are rejected") {
        fixture::TempDir dir("ckptbad");
        CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
        std::ofstream(dir / "junk.ckpt") << "NOTACKPT";
        CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), CheckpointError);
        Checkpoint c;
        c.config = fixture::small_config("d", "r");
        c.tensors["param/a"] = nn::Tensor(nn::Shape{1, 8, 1, 1}, 1.0f);
        save_checkpoint(c, dir / "ok.ckpt");
        std::ifstream in(dir / "ok.ckpt", std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 4);
        CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), CheckpointError);
        std::ofstream(dir / "long.ckpt", std::ios::binary) << bytes << "xx";
        CHECK_THROWS_AS(load_checkpoint(dir / "long.ckpt"), CheckpointError);
    }

    TEST_CASE("bundles restore exactly and mismatches are reported") {
        Checkpoint c;
        c.config = fixture::small_config("d", "r");
        nn::ModelBundle b = nn::build_models(c.config.model, 99);  // different seed from config
        store_parameters(c, b);
        nn::ModelBundle r = restore_bundle(c);
        REQUIRE(r.params.size() == b.params.size());
        for (std::size_t i = 0; i < b.params.size(); ++i) CHECK(r.params[i].value == b.params[i].value);

        Checkpoint missing = c;
        missing.tensors.erase("param/derain_ae.head.weight");
        CHECK_THROWS_AS(restore_bundle(missing), nn::ConfigMismatch);
        Checkpoint reshaped = c;
        reshaped.tensors["param/derain_ae.head.bias"] = nn::Tensor(nn::Shape{4, 1, 1, 1});
        CHECK_THROWS_AS(restore_bundle(reshaped), nn::ConfigMismatch);
        Checkpoint other = c;
        other.config.model.derain.widths[0] = 12;
        CHECK_THROWS_AS(restore_bundle(other), nn::ConfigMismatch);
    }
}
