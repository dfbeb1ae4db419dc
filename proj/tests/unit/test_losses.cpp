// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/log.hpp"
#include "derain/losses.hpp"
#include "derain/rng.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace derain;
using namespace derain::loss;
using derain::nn::Shape;
using derain::nn::Tape;
using derain::nn::Tensor;
using derain::nn::Var;

namespace {

std::vector<double> randv(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

LossTerms ones() { return {1, 1, 1, 1, 1}; }

struct WarningCapture {
    std::vector<std::string> lines;
    WarningCapture() {
        set_log_sink([this](LogLevel l, std::string_view m) {
            if (l == LogLevel::warning) lines.emplace_back(m);
        });
    }
    ~WarningCapture() { set_log_sink({}); }
};

}  // namespace

TEST_SUITE("losses") {
    TEST_CASE("composite total under default weights") {
        CHECK(composite_loss(ones(), {}, {}).total == 14.0);
        CHECK(composite_loss(ones(), {}, apply_ablation("A")).total == 13.5);
        CHECK(composite_loss(ones(), {}, apply_ablation("B")).total == 13.5);
        CHECK(composite_loss(ones(), {}, apply_ablation("C")).total == 12.0);
        CHECK(composite_loss(ones(), {}, apply_ablation("D")).total == 14.0);
        CHECK(composite_loss(ones(), {}, apply_ablation("E")).total == 12.0);
        const LossBreakdown a = composite_loss(ones(), {}, apply_ablation("A"));
        CHECK(a.depth_consist == 0.0);
        CHECK(a.derain_mse == 1.0);
    }

    TEST_CASE("doubling one weight doubles exactly its contribution") {
        const LossTerms t{0.3, 0.7, 0.11, 0.042, 0.9};
        LossWeights w;
        const LossBreakdown base = composite_loss(t, w, {});
        w.derain_mse *= 2.0;
        const LossBreakdown twice = composite_loss(t, w, {});
        // Contributions are weight * term; every other term is untouched.
        CHECK(twice.terms() == base.terms());
        CHECK(w.derain_mse * twice.derain_mse == 2.0 * (LossWeights{}.derain_mse * base.derain_mse));
        CHECK(twice.total - base.total == doctest::Approx(LossWeights{}.derain_mse * t.derain_mse).epsilon(1e-13));
    }

    TEST_CASE("composite errors") {
        LossTerms t = ones();
        t.depth_mse = std::numeric_limits<double>::quiet_NaN();
        try {
            composite_loss(t, {}, {});
            FAIL("expected NonFiniteLoss");
        } catch (const NonFiniteLoss& e) {
            CHECK(e.term() == "depth_mse");
        }
        // A disabled term may be anything.
        CHECK(composite_loss(t, {}, apply_ablation("C")).total == 12.0);
        t = ones();
        t.perceptual = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(composite_loss(t, {}, {}), NonFiniteLoss);
        LossWeights bad;
        bad.perceptual = -1.0;
        CHECK_THROWS_AS(composite_loss(ones(), bad, {}), std::invalid_argument);
    }

    TEST_CASE("consistency loss closed forms") {
        const std::vector<double> a11{1, 1}, a10{1, 0}, a01{0, 1};
        CHECK(consistency_loss(std::span<const double>(a11), std::span<const double>(a10)) ==
              doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-15));
        CHECK(consistency_loss(std::span<const double>(a10), std::span<const double>(a01)) == 1.0);
        CHECK(consistency_loss(std::span<const double>(a11), std::span<const double>(a11)) ==
              doctest::Approx(0.0).epsilon(1e-15));
        const std::vector<float> f11{1, 1}, f10{1, 0};
        CHECK(std::abs(consistency_loss(f11, f10) - 0.29289) < 1e-5);
        const std::vector<double> three{1, 2, 3};
        CHECK_THROWS_AS(consistency_loss(std::span<const double>(a11), std::span<const double>(three)),
                        std::invalid_argument);
    }

    TEST_CASE("zero vectors warn instead of producing NaN") {
        WarningCapture cap;
        const std::vector<double> z{0, 0, 0}, v{1, 2, 3};
        const double l = consistency_loss(std::span<const double>(z), std::span<const double>(v));
        CHECK(std::isfinite(l));
        REQUIRE(cap.lines.size() == 1);

        Tape t;
        Var a = t.constant(Tensor(Shape{2, 3, 1, 1}));
        Var b = t.constant(Tensor(Shape{2, 3, 1, 1}, 1.0f));
        CHECK(std::isfinite(consistency_loss(a, b).value()[0]));
        CHECK(cap.lines.size() == 2);
    }

    TEST_CASE("mse closed forms and oracle") {
        const std::vector<double> p{0.2, 0.4, 0.6}, q{0.3, 0.5, 0.7};
        CHECK(mse_loss<double>(p, p) == 0.0);
        CHECK(mse_loss<double>(p, q) == doctest::Approx(0.01).epsilon(1e-12));
        const auto a = randv(257, 1), b = randv(257, 2);
        CHECK(std::abs(mse_loss<double>(a, b) - oracle::mse(a, b)) < 1e-9);
        CHECK_THROWS_AS(mse_loss<double>(a, p), LossShapeError);
    }

    TEST_CASE("perceptual loss closed forms and oracle") {
        const std::vector<double> x(24, 0.5), y(24, 2.5);
        const TapView<double> tx{x, Shape{1, 2, 3, 4}}, ty{y, Shape{1, 2, 3, 4}};
        const std::vector<double> w1{1.0};
        CHECK(perceptual_loss<double>(std::span(&tx, 1), std::span(&tx, 1), w1) == 0.0);
        CHECK(perceptual_loss<double>(std::span(&tx, 1), std::span(&ty, 1), w1) == 4.0);

        const std::vector<Shape> shapes{{2, 3, 8, 8}, {2, 5, 4, 4}, {2, 7, 2, 2}};
        std::vector<std::vector<double>> tv, pv;
        std::vector<TapView<double>> tgt, prd;
        const std::vector<double> lw{1.0, 0.5, 2.0};
        for (std::size_t l = 0; l < shapes.size(); ++l) {
            tv.push_back(randv(shapes[l].numel(), 10 + l));
            pv.push_back(randv(shapes[l].numel(), 20 + l));
        }
        double ref = 0.0;
        for (std::size_t l = 0; l < shapes.size(); ++l) {
            tgt.push_back({tv[l], shapes[l]});
            prd.push_back({pv[l], shapes[l]});
            ref += lw[l] * oracle::mse(pv[l], tv[l]);
        }
        CHECK(std::abs(perceptual_loss<double>(tgt, prd, lw) - ref) < 1e-6);

        std::vector<TapView<double>> shorter(prd.begin(), prd.begin() + 2);
        CHECK_THROWS_AS(perceptual_loss<double>(tgt, shorter, lw), LossShapeError);
        auto bad = prd;
        bad[1].shape = Shape{2, 5, 2, 8};
        CHECK_THROWS_AS(perceptual_loss<double>(tgt, bad, lw), LossShapeError);
    }

    TEST_CASE("finite-difference gradient checks on 10-element inputs") {
        const auto a = randv(10, 31), b = randv(10, 32);

        std::vector<double> g(10);
        mse_loss_grad<double>(a, b, g);
        auto num = oracle::numeric_gradient([&](std::span<const double> x) { return mse_loss<double>(x, b); }, a);
        CHECK(oracle::relative_error(g, num) < 1e-4);

        std::fill(g.begin(), g.end(), 0.0);
        consistency_loss_grad<double>(a, b, g);
        num = oracle::numeric_gradient(
            [&](std::span<const double> x) { return oracle::one_minus_cos(x, b); }, a);
        CHECK(oracle::relative_error(g, num) < 1e-4);

        // Two taps of 10 elements total (4 + 6).
        const std::vector<double> lw{1.0, 0.5};
        auto perc = [&](std::span<const double> x) {
            const TapView<double> t[2]{{std::span(b).first(4), Shape{1, 1, 2, 2}}, {std::span(b).subspan(4), Shape{1, 1, 2, 3}}};
            const TapView<double> p[2]{{x.first(4), Shape{1, 1, 2, 2}}, {x.subspan(4), Shape{1, 1, 2, 3}}};
            return perceptual_loss<double>(t, p, lw);
        };
        std::fill(g.begin(), g.end(), 0.0);
        {
            const TapView<double> t[2]{{std::span(b).first(4), Shape{1, 1, 2, 2}}, {std::span(b).subspan(4), Shape{1, 1, 2, 3}}};
            const TapView<double> p[2]{{std::span(a).first(4), Shape{1, 1, 2, 2}}, {std::span(a).subspan(4), Shape{1, 1, 2, 3}}};
            const std::span<double> grads[2]{std::span(g).first(4), std::span(g).subspan(4)};
            perceptual_loss_grad<double>(t, p, lw, grads);
        }
        num = oracle::numeric_gradient(perc, a);
        CHECK(oracle::relative_error(g, num) < 1e-4);

        // Composite: linear in the terms, so its gradient is the weight vector.
        const LossWeights w;
        auto total = [&](std::span<const double> x) {
            return composite_loss(LossTerms{x[0], x[1], x[2], x[3], x[4]}, w, {}).total;
        };
        const std::vector<double> at{0.3, 0.2, 0.5, 0.05, 0.1};
        const auto cg = oracle::numeric_gradient(total, at);
        const auto wa = w.as_array();
        CHECK(oracle::relative_error(cg, std::vector<double>(wa.begin(), wa.end())) < 1e-4);
    }

    TEST_CASE("tape losses agree with the value-level functions") {
        const auto a = randv(20, 41), b = randv(20, 42);
        std::vector<float> af(a.begin(), a.end()), bf(b.begin(), b.end());
        Tape t;
        Var va = t.constant(Tensor(Shape{2, 10, 1, 1}, af));
        Var vb = t.constant(Tensor(Shape{2, 10, 1, 1}, bf));
        CHECK(loss::mse_loss(va, vb).value()[0] == doctest::Approx(mse_loss<float>(af, bf)).epsilon(1e-6));
        const double c0 = consistency_loss(std::span<const float>(af).first(10), std::span<const float>(bf).first(10));
        const double c1 = consistency_loss(std::span<const float>(af).subspan(10), std::span<const float>(bf).subspan(10));
        CHECK(consistency_loss(va, vb).value()[0] == doctest::Approx(0.5 * (c0 + c1)).epsilon(1e-6));

        LossGraph g;
        for (auto& v : g.terms) v = t.constant(Tensor(Shape{1, 1, 1, 1}, 1.0f));
        const CompositeResult r = composite_loss(t, g, {}, {});
        CHECK(r.total.value()[0] == 14.0f);
        CHECK(r.breakdown.total == 14.0);
        g.terms[1] = Var{};
        const CompositeResult skipped = composite_loss(t, g, {}, apply_ablation("A"));
        CHECK(skipped.breakdown.total == 13.5);
    }

    TEST_CASE("enabled terms follow the ablation switches") {
        using A = std::array<bool, 5>;
        CHECK(enabled_terms(apply_ablation("Full")) == A{true, true, true, true, true});
        CHECK(enabled_terms(apply_ablation("A")) == A{true, false, true, true, true});
        CHECK(enabled_terms(apply_ablation("B")) == A{true, true, false, true, true});
        CHECK(enabled_terms(apply_ablation("C")) == A{true, true, true, true, false});
        CHECK(enabled_terms(apply_ablation("E")) == A{true, true, true, true, false});
        CHECK_THROWS_AS(apply_ablation("Z"), UnknownPreset);
        CHECK(preset_name(apply_ablation("D")) == "D");
    }
}
