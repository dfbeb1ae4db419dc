// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff over a per-forward tape.
//
// A Tape records every op of one forward pass. Parameters enter the tape as
// leaves; frozen parameters and leaves recorded under NoGradGuard never
// require gradients, so no backward work is scheduled for them. backward()
// accumulates into Parameter::grad.

#pragma once

#include "derain/tensor.hpp"

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace derain::nn {

struct Parameter {
    std::string name;  // hierarchical, e.g. "derain_ae.enc1.conv.weight"
    Tensor value;
    Tensor grad;
    bool trainable = true;
    /// Number of times the parameter entered a tape. Instrumentation only.
    std::size_t reads = 0;
};

/// Owns parameters in registration order.
class ParameterStore {
public:
    Parameter& add(std::string name, Shape shape, bool trainable);
    Parameter* find(std::string_view name) noexcept;
    const Parameter* find(std::string_view name) const noexcept;

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t scalar_count() const noexcept;
    Parameter& operator[](std::size_t i) { return *params_[i]; }
    const Parameter& operator[](std::size_t i) const { return *params_[i]; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad();
    void reset_reads();

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    std::map<std::string, Parameter*, std::less<>> index_;
};

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    const Shape& shape() const;
    bool requires_grad() const;
    explicit operator bool() const noexcept { return tape != nullptr && id >= 0; }
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var param(Parameter& p);

    /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one element.
    void backward(Var loss);

    bool grad_enabled() const noexcept { return grad_enabled_; }
    void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }

    const Tensor& value(int id) const {
        const Node& n = nodes_[id];
        return n.external ? *n.external : n.value;
    }
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    /// Gradient buffer of node `id`, allocated (zeroed) on first use.
    Tensor& grad(int id);
    bool has_grad(int id) const { return !nodes_[id].grad.empty(); }

    /// Appends a node. `inputs` decide requires_grad; fn runs during backward.
    Var record(Tensor value, std::string_view op, std::span<const Var> inputs, BackwardFn fn);
    Var record(Tensor value, std::string_view op, std::initializer_list<Var> inputs, BackwardFn fn) {
        return record(std::move(value), op, std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
    }

    std::size_t node_count() const noexcept { return nodes_.size(); }
    /// Number of recorded nodes with the given op tag.
    std::size_t op_count(std::string_view op) const;
    /// Number of nodes whose output carries gradient (active graph edges).
    std::size_t active_count() const;

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::string_view op;
        BackwardFn backward;
        Parameter* param = nullptr;
        const Tensor* external = nullptr;  // parameter leaves alias Parameter::value
    };
    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
};

/// Disables gradient recording on a tape for the guard's lifetime.
class NoGradGuard {
public:
    explicit NoGradGuard(Tape& tape) : tape_(tape), previous_(tape.grad_enabled()) { tape.set_grad_enabled(false); }
    ~NoGradGuard() { tape_.set_grad_enabled(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape& tape_;
    bool previous_;
};

// Ops. Weight layouts: conv2d [cout, cin, k, k]; conv_transpose2d [cin, cout, k, k];
// linear [out, in] acting on the flattened per-sample features.

Var conv2d(Var x, Var weight, Var bias, int stride, int pad);
Var conv_transpose2d(Var x, Var weight, Var bias, int stride, int pad);
Var linear(Var x, Var weight, Var bias);
Var relu(Var x);
Var leaky_relu(Var x, float slope);
Var sigmoid(Var x);
Var max_pool2(Var x);
Var upsample_nearest2(Var x);
Var concat_channels(Var a, Var b);
Var reshape(Var x, Shape shape);
Var global_avg_pool(Var x);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, float s);
Var exp(Var x);

// Scalar-valued losses (output shape {1,1,1,1}).
Var mse_loss(Var pred, Var target);
/// Batch mean of 1 - cos(a_n, b_n) over flattened samples.
Var cosine_consistency_loss(Var a, Var b);
/// KL(N(mu, exp(logvar)) || N(0, I)), averaged over batch.
Var kl_gaussian(Var mu, Var logvar);
/// sum_i weights[i] * terms[i].
Var weighted_sum(std::span<const Var> terms, std::span<const float> weights);

}  // namespace derain::nn
