// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// The five training loss terms and their weighted total.
//
//   perceptual      sum_l lambda_l * mean((phi_l(C) - phi_l(C_hat))^2)
//   depth_consist   1 - cos(D_R, D_C)
//   derain_consist  1 - cos(R_L, C_L)
//   derain_mse      mean((C - C_hat)^2)
//   depth_mse       mean((D - D_hat)^2), summed over the disparity heads
//
// Value-level functions are templated on the scalar type so gradients can be
// verified in double; the tape versions drive training in float.

#pragma once

#include "derain/ablation.hpp"
#include "derain/autograd.hpp"
#include "derain/kernels.hpp"
#include "derain/netgraph.hpp"

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace derain::loss {

struct LossWeights {
    double perceptual = 1.0;
    double depth_consist = 0.5;
    double derain_consist = 0.5;
    double derain_mse = 10.0;
    double depth_mse = 2.0;

    /// Throws std::invalid_argument on a negative or non-finite weight.
    void validate() const;
    std::array<double, 5> as_array() const {
        return {perceptual, depth_consist, derain_consist, derain_mse, depth_mse};
    }
    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Raw (unweighted) term values.
struct LossTerms {
    double perceptual = 0.0;
    double depth_consist = 0.0;
    double derain_consist = 0.0;
    double derain_mse = 0.0;
    double depth_mse = 0.0;

    std::array<double, 5> as_array() const {
        return {perceptual, depth_consist, derain_consist, derain_mse, depth_mse};
    }
};

struct LossBreakdown {
    double perceptual = 0.0;
    double depth_consist = 0.0;
    double derain_consist = 0.0;
    double derain_mse = 0.0;
    double depth_mse = 0.0;
    double total = 0.0;

    std::array<double, 5> terms() const {
        return {perceptual, depth_consist, derain_consist, derain_mse, depth_mse};
    }
};

inline constexpr std::array<const char*, 5> kTermNames{"perceptual", "depth_consist", "derain_consist", "derain_mse",
                                                      "depth_mse"};

/// Which of the five terms an ablation keeps.
std::array<bool, 5> enabled_terms(const AblationConfig& ablation);

class NonFiniteLoss : public std::runtime_error {
public:
    NonFiniteLoss(std::string term, double value);
    const std::string& term() const noexcept { return term_; }
    double value() const noexcept { return value_; }

private:
    std::string term_;
    double value_;
};

class LossShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Sum of lambda_i * term_i over enabled terms, accumulated in double in the
/// fixed term order. Disabled terms are recorded as 0. Throws NonFiniteLoss
/// if an enabled term or the total is not finite.
LossBreakdown composite_loss(const LossTerms& terms, const LossWeights& weights, const AblationConfig& ablation);

// Value level --------------------------------------------------------------

template <class T>
double mse_loss(std::span<const T> pred, std::span<const T> target) {
    if (pred.size() != target.size())
        throw LossShapeError("mse_loss: " + std::to_string(pred.size()) + " vs " + std::to_string(target.size()) +
                             " elements");
    return nn::kernels::mse(pred, target);
}

template <class T>
void mse_loss_grad(std::span<const T> pred, std::span<const T> target, std::span<T> grad_pred) {
    nn::kernels::mse_backward<T>(pred, target, 1.0, grad_pred, {});
}

/// 1 - cos(a, b); a zero vector yields 1 and logs a warning.
double consistency_loss(std::span<const float> a, std::span<const float> b);
double consistency_loss(std::span<const double> a, std::span<const double> b);

template <class T>
void consistency_loss_grad(std::span<const T> a, std::span<const T> b, std::span<T> grad_a) {
    nn::kernels::cosine_consistency_backward<T>(a, b, 1.0, grad_a, {});
}

/// One tapped activation map, flattened.
template <class T>
struct TapView {
    std::span<const T> values;
    nn::Shape shape;
};

template <class T>
void check_pyramids(std::span<const TapView<T>> target, std::span<const TapView<T>> pred,
                    std::span<const double> layer_weights) {
    if (target.size() != pred.size())
        throw LossShapeError("perceptual_loss: pyramid lengths " + std::to_string(target.size()) + " vs " +
                             std::to_string(pred.size()));
    if (layer_weights.size() != target.size())
        throw LossShapeError("perceptual_loss: " + std::to_string(layer_weights.size()) + " layer weights for " +
                             std::to_string(target.size()) + " taps");
    for (std::size_t l = 0; l < target.size(); ++l)
        if (!(target[l].shape == pred[l].shape) || target[l].values.size() != pred[l].values.size())
            throw LossShapeError("perceptual_loss: tap " + std::to_string(l) + " shape " + target[l].shape.str() +
                                 " vs " + pred[l].shape.str());
}

template <class T>
double perceptual_loss(std::span<const TapView<T>> target, std::span<const TapView<T>> pred,
                       std::span<const double> layer_weights) {
    check_pyramids(target, pred, layer_weights);
    double acc = 0.0;
    for (std::size_t l = 0; l < target.size(); ++l)
        acc += layer_weights[l] * nn::kernels::mse(pred[l].values, target[l].values);
    return acc;
}

/// Gradient with respect to the predicted taps; grad_pred[l] is added into.
template <class T>
void perceptual_loss_grad(std::span<const TapView<T>> target, std::span<const TapView<T>> pred,
                          std::span<const double> layer_weights, std::span<const std::span<T>> grad_pred) {
    check_pyramids(target, pred, layer_weights);
    for (std::size_t l = 0; l < target.size(); ++l)
        nn::kernels::mse_backward<T>(pred[l].values, target[l].values, layer_weights[l], grad_pred[l], {});
}

double perceptual_loss(const nn::FeaturePyramid& target, const nn::FeaturePyramid& pred,
                       std::span<const double> layer_weights);

// Tape level ---------------------------------------------------------------

nn::Var perceptual_loss(std::span<const nn::Var> target, std::span<const nn::Var> pred,
                        std::span<const double> layer_weights);
/// Batch mean of 1 - cos; logs a warning when any sample is degenerate.
nn::Var consistency_loss(nn::Var a, nn::Var b);
nn::Var mse_loss(nn::Var pred, nn::Var target);

/// Terms as tape variables; a null Var marks a skipped term.
struct LossGraph {
    std::array<nn::Var, 5> terms{};
};

/// Builds the weighted total on the tape over enabled, present terms and the
/// matching breakdown. The breakdown total equals composite_loss() of the
/// term values.
struct CompositeResult {
    nn::Var total;
    LossBreakdown breakdown;
};
CompositeResult composite_loss(nn::Tape& tape, const LossGraph& graph, const LossWeights& weights,
                               const AblationConfig& ablation);

}  // namespace derain::loss
