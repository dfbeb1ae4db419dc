// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/losses.hpp"

#include "derain/log.hpp"

#include <cmath>

namespace derain::loss {

namespace {

template <class T>
double consistency_impl(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size())
        throw LossShapeError("consistency_loss: lengths " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    bool degenerate = false;
    const double v = nn::kernels::cosine_consistency(a, b, &degenerate);
    if (degenerate) log_warning("consistency_loss: zero latent vector, loss defined as 1");
    return v;
}

}  // namespace

void LossWeights::validate() const {
    const auto w = as_array();
    for (std::size_t i = 0; i < w.size(); ++i)
        if (!std::isfinite(w[i]) || w[i] < 0.0)
            throw std::invalid_argument(std::string("loss weight ") + kTermNames[i] + " must be finite and >= 0");
}

std::array<bool, 5> enabled_terms(const AblationConfig& a) {
    return {true, a.depth_latent_on, a.derain_latent_on, true, a.gt_depth_on};
}

NonFiniteLoss::NonFiniteLoss(std::string term, double value)
    : std::runtime_error("non-finite loss term '" + term + "' = " + std::to_string(value)),
      term_(std::move(term)),
      value_(value) {}

LossBreakdown composite_loss(const LossTerms& terms, const LossWeights& weights, const AblationConfig& ablation) {
    weights.validate();
    const auto on = enabled_terms(ablation);
    const auto t = terms.as_array();
    const auto w = weights.as_array();
    std::array<double, 5> kept{};
    double total = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        if (!on[i]) continue;
        if (!std::isfinite(t[i])) throw NonFiniteLoss(kTermNames[i], t[i]);
        kept[i] = t[i];
        total += w[i] * t[i];
    }
    if (!std::isfinite(total)) throw NonFiniteLoss("total", total);
    return LossBreakdown{kept[0], kept[1], kept[2], kept[3], kept[4], total};
}

double consistency_loss(std::span<const float> a, std::span<const float> b) { return consistency_impl(a, b); }
double consistency_loss(std::span<const double> a, std::span<const double> b) { return consistency_impl(a, b); }

double perceptual_loss(const nn::FeaturePyramid& target, const nn::FeaturePyramid& pred,
                       std::span<const double> layer_weights) {
    std::vector<TapView<float>> t, p;
    for (const auto& x : target) t.push_back({x.span(), x.shape()});
    for (const auto& x : pred) p.push_back({x.span(), x.shape()});
    return perceptual_loss<float>(t, p, layer_weights);
}

nn::Var perceptual_loss(std::span<const nn::Var> target, std::span<const nn::Var> pred,
                        std::span<const double> layer_weights) {
    if (target.size() != pred.size() || layer_weights.size() != target.size() || target.empty())
        throw LossShapeError("perceptual_loss: pyramid/weight count mismatch");
    std::vector<nn::Var> taps;
    std::vector<float> w;
    for (std::size_t l = 0; l < target.size(); ++l) {
        if (!(target[l].shape() == pred[l].shape()))
            throw LossShapeError("perceptual_loss: tap " + std::to_string(l) + " shape " + target[l].shape().str() +
                                 " vs " + pred[l].shape().str());
        taps.push_back(nn::mse_loss(pred[l], target[l]));
        w.push_back(static_cast<float>(layer_weights[l]));
    }
    return nn::weighted_sum(taps, w);
}

nn::Var consistency_loss(nn::Var a, nn::Var b) {
    if (!(a.shape() == b.shape()))
        throw LossShapeError("consistency_loss: " + a.shape().str() + " vs " + b.shape().str());
    const std::size_t len = a.shape().per_sample();
    for (int n = 0; n < a.shape().n; ++n) {
        bool degenerate = false;
        nn::kernels::cosine_consistency<float>(a.value().span().subspan(n * len, len),
                                               b.value().span().subspan(n * len, len), &degenerate);
        if (degenerate) {
            log_warning("consistency_loss: zero latent vector, loss defined as 1");
            break;
        }
    }
    return nn::cosine_consistency_loss(a, b);
}

nn::Var mse_loss(nn::Var pred, nn::Var target) {
    if (!(pred.shape() == target.shape()))
        throw LossShapeError("mse_loss: " + pred.shape().str() + " vs " + target.shape().str());
    return nn::mse_loss(pred, target);
}

CompositeResult composite_loss(nn::Tape& tape, const LossGraph& graph, const LossWeights& weights,
                               const AblationConfig& ablation) {
    const auto on = enabled_terms(ablation);
    const auto w = weights.as_array();
    LossTerms values;
    std::array<double*, 5> slots{&values.perceptual, &values.depth_consist, &values.derain_consist,
                                 &values.derain_mse, &values.depth_mse};
    std::vector<nn::Var> terms;
    std::vector<float> tw;
    for (std::size_t i = 0; i < 5; ++i) {
        if (!on[i] || !graph.terms[i]) continue;
        *slots[i] = graph.terms[i].value()[0];
        terms.push_back(graph.terms[i]);
        tw.push_back(static_cast<float>(w[i]));
    }
    CompositeResult r;
    r.breakdown = composite_loss(values, weights, ablation);
    r.total = terms.empty() ? tape.constant(nn::Tensor(nn::Shape{1, 1, 1, 1}, 0.0f)) : nn::weighted_sum(terms, tw);
    return r;
}

}  // namespace derain::loss
