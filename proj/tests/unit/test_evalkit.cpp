// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/evalkit.hpp"
#include "derain/log.hpp"
#include "derain/trainpipe.hpp"

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace derain;
using namespace derain::eval;

namespace {

std::vector<Sample> fixture_samples(int n, int size = 24) {
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
        Sample s;
        s.id = format_sample_id(i);
        s.clear = Image(size, size, 0.5f);
        s.rainy = fixture::random_image(size, size, 50 + i);
        s.depth = Map2D(size, size, 0.5f);
        out.push_back(std::move(s));
    }
    return out;
}

/// Prediction at a planted PSNR: +-delta checkerboard around the clear image,
/// with delta^2 = 10^(-psnr/10) so the MSE is exactly delta^2.
Image planted(const Image& clear, double target_psnr) {
    const double delta = std::sqrt(std::pow(10.0, -target_psnr / 10.0));
    Image p = clear;
    for (int y = 0; y < p.height(); ++y)
        for (int x = 0; x < p.width(); ++x)
            for (int c = 0; c < 3; ++c) p.at(y, x, c) += static_cast<float>((x + y + c) % 2 ? delta : -delta);
    return p;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("evalkit") {
    TEST_CASE("identity fixture gives perfect scores") {
        const auto samples = fixture_samples(3);
        const EvalRun r = evaluate_samples(samples, [](const Sample& s) { return s.clear; }, "fixture", "identity");
        CHECK(r.report.ssim.ave == 1.0);
        CHECK(r.report.ssim.max == 1.0);
        CHECK(r.report.ssim.min == 1.0);
        CHECK(std::isinf(r.report.psnr.ave));
        const std::string text = format_report(r, false);
        CHECK(text.find("0000,inf,1.00000") != std::string::npos);
    }

    TEST_CASE("planted PSNRs 20, 25 and 30 dB") {
        const auto samples = fixture_samples(3);
        const double targets[3] = {20.0, 25.0, 30.0};
        for (int i = 0; i < 3; ++i)
            CHECK(oracle::psnr(planted(samples[i].clear, targets[i]), samples[i].clear) ==
                  doctest::Approx(targets[i]).epsilon(1e-6));
        const EvalRun r = evaluate_samples(
            samples, [&](const Sample& s) { return planted(s.clear, targets[std::stoi(s.id)]); }, "fixture", "planted");
        CHECK(r.report.psnr.ave == doctest::Approx(25.0).epsilon(1e-6));
        CHECK(r.report.psnr.max == doctest::Approx(30.0).epsilon(1e-6));
        CHECK(r.report.psnr.min == doctest::Approx(20.0).epsilon(1e-6));
        const std::string text = format_report(r, false);
        CHECK(text.find("psnr,25.00000,30.00000,20.00000") != std::string::npos);
    }

    TEST_CASE("reports are deterministic and recompute from their rows") {
        fixture::TempDir dir("report");
        const auto samples = fixture_samples(4);
        auto pred = [](const Sample& s) { return s.rainy; };
        const EvalRun r = evaluate_samples(samples, pred, "fixture", "abc");
        write_report(r, dir / "a.csv");
        write_report(evaluate_samples(samples, pred, "fixture", "abc"), dir / "b.csv");
        CHECK(read_file(dir / "a.csv") == read_file(dir / "b.csv"));
        CHECK(read_file(dir / "a.full.csv") == read_file(dir / "b.full.csv"));
        CHECK(sidecar_path(dir / "a.csv") == dir / "a.full.csv");

        const EvalRun full = read_report(dir / "a.full.csv");
        CHECK(full.report.psnr.ave == r.report.psnr.ave);
        CHECK(full.report.ssim.min == r.report.ssim.min);
        CHECK(full.report.per_image.size() == 4);
        CHECK(full.dataset == "fixture");
        CHECK(full.checkpoint_hash == "abc");
        const EvalRun rounded = read_report(dir / "a.csv");
        CHECK(std::abs(rounded.report.psnr.ave - r.report.psnr.ave) < 1e-5);

        // Tampering with a row breaks the recomputation.
        std::string text = read_file(dir / "a.full.csv");
        const auto pos = text.rfind("\n0003,");
        text[pos + 7] = text[pos + 7] == '1' ? '2' : '1';
        std::ofstream(dir / "bad.csv") << text;
        CHECK_THROWS_AS(read_report(dir / "bad.csv"), EvalError);
    }

    TEST_CASE("evaluation errors") {
        auto samples = fixture_samples(2);
        auto id = [](const Sample& s) { return s.clear; };
        CHECK_THROWS_AS(evaluate_samples({}, id, "x", "y"), EvalError);
        samples[1].id = samples[0].id;
        CHECK_THROWS_AS(evaluate_samples(samples, id, "x", "y"), EvalError);
        CHECK_THROWS_AS(evaluate_samples(fixture_samples(2), [](const Sample&) { return Image(16, 16); }, "x", "y"),
                        EvalError);
    }

    TEST_CASE("comparison tables") {
        const auto samples = fixture_samples(3);
        const EvalRun a = evaluate_samples(samples, [](const Sample& s) { return planted(s.clear, 22.0); }, "d", "a");
        const EvalRun b = evaluate_samples(samples, [](const Sample& s) { return planted(s.clear, 27.0); }, "d", "b");

        const ComparisonTable self = compare_runs({a, a}, {"x", "y"});
        REQUIRE(self.rows.size() == 2);
        CHECK(self.rows[0].psnr.ave == self.rows[1].psnr.ave);
        for (int k = 0; k < 6; ++k) {
            CHECK(self.rows[0].best[k]);
            CHECK(self.rows[1].best[k]);
            CHECK(self.rows[1].delta[k] == 0.0);
        }

        const ComparisonTable t = compare_runs({a, b}, {"Full", "D"});
        CHECK(t.rows[1].delta[0] == doctest::Approx(5.0).epsilon(1e-5));
        CHECK(t.rows[1].best[0]);
        CHECK_FALSE(t.rows[0].best[0]);
        const std::string csv = comparison_csv(t);
        CHECK(csv.find("Full") != std::string::npos);
        CHECK(comparison_text(t).find('*') != std::string::npos);

        CHECK_THROWS_AS(compare_runs({a, b}, {}), EvalError);
        CHECK_THROWS_AS(compare_runs({a}, {"a"}), EvalError);
        CHECK_THROWS_AS(compare_runs({a, b}, {"a", ""}), EvalError);
        EvalRun other = b;
        other.dataset = "elsewhere";
        CHECK_THROWS_AS(compare_runs({a, other}, {"a", "b"}), EvalError);
        EvalRun fewer = b;
        fewer.report.per_image.pop_back();
        CHECK_THROWS_AS(compare_runs({a, fewer}, {"a", "b"}), EvalError);
    }

    TEST_CASE("Full vs Setting D toy runs compare with deltas") {
        set_log_level(LogLevel::warning);
        fixture::TempDir dir("cmp");
        synth::make_toy_dataset(4, 32, 32, {}, {}, 5, dir / "data");
        std::vector<EvalRun> runs;
        for (const char* preset : {"Full", "D"}) {
            RunConfig c = fixture::small_config(dir / "data", dir / preset);
            apply_overrides(c, {std::string("ablation.preset=") + preset});
            runs.push_back(evaluate_dataset(train(c).final_checkpoint, dir / "data"));
        }
        set_log_level(LogLevel::info);
        const ComparisonTable t = compare_runs(runs, {"Full", "D"});
        REQUIRE(t.rows.size() == 2);
        CHECK(t.rows[1].delta[0] == doctest::Approx(t.rows[1].psnr.ave - t.rows[0].psnr.ave).epsilon(1e-12));
        CHECK(t.rows[0].delta[3] == 0.0);
        CHECK(runs[0].checkpoint_hash != runs[1].checkpoint_hash);
    }

    TEST_CASE("dataset resolution must match the checkpoint") {
        set_log_level(LogLevel::warning);
        fixture::TempDir dir("evalres");
        synth::make_toy_dataset(2, 32, 32, {}, {}, 5, dir / "d32");
        synth::make_toy_dataset(2, 48, 48, {}, {}, 5, dir / "d48");
        RunConfig c = fixture::small_config(dir / "d32", dir / "run");
        c.train.steps = 1;
        const auto ckpt = train(c).final_checkpoint;
        set_log_level(LogLevel::info);
        CHECK_NOTHROW(evaluate_dataset(ckpt, dir / "d32"));
        CHECK_THROWS_AS(evaluate_dataset(ckpt, dir / "d48"), nn::ConfigMismatch);
    }

    TEST_CASE("inference timing") {
        const nn::ModelBundle b = nn::build_models(fixture::small_config("", "").model, 1);
        const TimingReport r = benchmark_inference(b, 3, 10);
        CHECK(r.samples.size() == 10);
        CHECK(r.warmup == 3);
        CHECK(r.min <= r.mean);
        CHECK(r.mean <= r.max);
        CHECK(r.height == 32);
        CHECK_FALSE(r.hardware.empty());
        CHECK(format_timing(r).find("mean") != std::string::npos);
        CHECK_THROWS_AS(benchmark_inference(b, 3, 9), std::invalid_argument);
        CHECK_THROWS_AS(benchmark_inference(b, -1, 10), std::invalid_argument);
    }
}
