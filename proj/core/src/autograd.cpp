// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/autograd.hpp"

#include "derain/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace derain::nn {

// ---------------------------------------------------------------------------
// ParameterStore

Parameter& ParameterStore::add(std::string name, Shape shape, bool trainable) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = std::move(name);
    p->value = Tensor(shape);
    p->trainable = trainable;
    Parameter& ref = *p;
    index_.emplace(ref.name, &ref);
    params_.push_back(std::move(p));
    return ref;
}

Parameter* ParameterStore::find(std::string_view name) noexcept {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
}

const Parameter* ParameterStore::find(std::string_view name) const noexcept {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
}

std::size_t ParameterStore::scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p->grad = Tensor();
}

void ParameterStore::reset_reads() {
    for (auto& p : params_) p->reads = 0;
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape->value(id); }
const Shape& Var::shape() const { return tape->value(id).shape(); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.op = "constant";
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
    ++p.reads;
    Node n;
    n.external = &p.value;
    n.op = "param";
    n.param = &p;
    n.requires_grad = grad_enabled_ && p.trainable;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(value(id).shape());
    return n.grad;
}

Var Tape::record(Tensor value, std::string_view op, std::span<const Var> inputs, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    if (grad_enabled_)
        for (const Var& v : inputs) {
            if (v.tape != this) throw std::invalid_argument("op input belongs to a different tape");
            n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
        }
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to a different tape");
    if (value(loss.id).numel() != 1) throw std::invalid_argument("backward: loss must be a scalar");
    if (!nodes_[loss.id].requires_grad) return;
    grad(loss.id)[0] = 1.0f;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) n.backward(*this, i);
        if (n.param) {
            Parameter& p = *n.param;
            if (p.grad.empty()) p.grad = Tensor(p.value.shape());
            for (std::size_t k = 0; k < p.grad.numel(); ++k) p.grad[k] += n.grad[k];
        }
    }
}

std::size_t Tape::op_count(std::string_view op) const {
    return static_cast<std::size_t>(std::ranges::count_if(nodes_, [&](const Node& n) { return n.op == op; }));
}

std::size_t Tape::active_count() const {
    return static_cast<std::size_t>(std::ranges::count_if(nodes_, [](const Node& n) { return n.requires_grad; }));
}

// ---------------------------------------------------------------------------
// Ops

namespace {

Tape& tape_of(Var v) {
    if (!v) throw std::invalid_argument("op applied to an empty Var");
    return *v.tape;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

Tensor scalar_tensor(double v) { return Tensor(Shape{1, 1, 1, 1}, static_cast<float>(v)); }

}  // namespace

Var conv2d(Var x, Var weight, Var bias, int stride, int pad) {
    Tape& t = tape_of(x);
    const Shape xs = x.shape(), ws = weight.shape();
    require(ws.h == ws.w && ws.c == xs.c, "conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
    require(!bias || bias.value().numel() == static_cast<std::size_t>(ws.n), "conv2d: bias size mismatch");
    kernels::ConvGeometry g{xs.c, xs.h, xs.w, ws.h, stride, pad};
    require(g.out_height() > 0 && g.out_width() > 0, "conv2d: input " + xs.str() + " too small");
    Tensor out(Shape{xs.n, ws.n, g.out_height(), g.out_width()});
    kernels::conv2d_forward(x.value().data(), xs.n, g, weight.value().data(), bias ? bias.value().data() : nullptr,
                            ws.n, out.data());
    const int xi = x.id, wi = weight.id, bi = bias ? bias.id : -1;
    return t.record(std::move(out), "conv2d", {x, weight, bias ? bias : x}, [=](Tape& tp, int self) {
        const Tensor& dout = tp.grad(self);
        float* dx = tp.requires_grad(xi) ? tp.grad(xi).data() : nullptr;
        float* dw = tp.requires_grad(wi) ? tp.grad(wi).data() : nullptr;
        float* db = (bi >= 0 && tp.requires_grad(bi)) ? tp.grad(bi).data() : nullptr;
        kernels::conv2d_backward(tp.value(xi).data(), xs.n, g, tp.value(wi).data(), ws.n, dout.data(), dx, dw, db);
    });
}

Var conv_transpose2d(Var x, Var weight, Var bias, int stride, int pad) {
    Tape& t = tape_of(x);
    const Shape xs = x.shape(), ws = weight.shape();
    require(ws.h == ws.w && ws.n == xs.c,
            "conv_transpose2d: weight " + ws.str() + " incompatible with input " + xs.str());
    require(!bias || bias.value().numel() == static_cast<std::size_t>(ws.c), "conv_transpose2d: bias size mismatch");
    const auto og = kernels::transposed_geometry(ws.c, xs.h, xs.w, ws.h, stride, pad);
    require(og.height > 0 && og.width > 0 && og.out_height() == xs.h && og.out_width() == xs.w,
            "conv_transpose2d: inconsistent geometry for " + xs.str());
    Tensor out(Shape{xs.n, ws.c, og.height, og.width});
    kernels::conv_transpose2d_forward(x.value().data(), xs.n, xs.c, og, weight.value().data(),
                                      bias ? bias.value().data() : nullptr, out.data());
    const int xi = x.id, wi = weight.id, bi = bias ? bias.id : -1;
    return t.record(std::move(out), "conv_transpose2d", {x, weight, bias ? bias : x}, [=](Tape& tp, int self) {
        const Tensor& dout = tp.grad(self);
        float* dx = tp.requires_grad(xi) ? tp.grad(xi).data() : nullptr;
        float* dw = tp.requires_grad(wi) ? tp.grad(wi).data() : nullptr;
        float* db = (bi >= 0 && tp.requires_grad(bi)) ? tp.grad(bi).data() : nullptr;
        kernels::conv_transpose2d_backward(tp.value(xi).data(), xs.n, xs.c, og, tp.value(wi).data(), dout.data(), dx,
                                           dw, db);
    });
}

Var linear(Var x, Var weight, Var bias) {
    Tape& t = tape_of(x);
    const Shape xs = x.shape(), ws = weight.shape();
    const auto in = static_cast<Eigen::Index>(xs.per_sample());
    require(static_cast<Eigen::Index>(ws.c) == in && ws.h == 1 && ws.w == 1,
            "linear: weight " + ws.str() + " incompatible with input " + xs.str());
    require(!bias || bias.value().numel() == static_cast<std::size_t>(ws.n), "linear: bias size mismatch");
    Tensor out(Shape{xs.n, ws.n, 1, 1});
    using kernels::ConstMatMap;
    using kernels::MatMap;
    ConstMatMap<float> xm(x.value().data(), xs.n, in);
    ConstMatMap<float> wm(weight.value().data(), ws.n, in);
    MatMap<float> om(out.data(), xs.n, ws.n);
    om.noalias() = xm * wm.transpose();
    if (bias)
        for (int n = 0; n < xs.n; ++n)
            for (int o = 0; o < ws.n; ++o) om(n, o) += bias.value()[o];
    const int xi = x.id, wi = weight.id, bi = bias ? bias.id : -1;
    return t.record(std::move(out), "linear", {x, weight, bias ? bias : x}, [=](Tape& tp, int self) {
        ConstMatMap<float> dom(tp.grad(self).data(), xs.n, ws.n);
        if (tp.requires_grad(xi)) {
            MatMap<float> dxm(tp.grad(xi).data(), xs.n, in);
            dxm.noalias() += dom * ConstMatMap<float>(tp.value(wi).data(), ws.n, in);
        }
        if (tp.requires_grad(wi)) {
            MatMap<float> dwm(tp.grad(wi).data(), ws.n, in);
            dwm.noalias() += dom.transpose() * ConstMatMap<float>(tp.value(xi).data(), xs.n, in);
        }
        if (bi >= 0 && tp.requires_grad(bi)) {
            float* db = tp.grad(bi).data();
            for (int n = 0; n < xs.n; ++n)
                for (int o = 0; o < ws.n; ++o) db[o] += dom(n, o);
        }
    });
}

Var leaky_relu(Var x, float slope) {
    Tape& t = tape_of(x);
    Tensor out = x.value();
    for (float& v : out.storage()) v = v > 0.0f ? v : v * slope;
    const int xi = x.id;
    return t.record(std::move(out), slope == 0.0f ? "relu" : "leaky_relu", {x}, [=](Tape& tp, int self) {
        const Tensor& in = tp.value(xi);
        const Tensor& dout = tp.grad(self);
        Tensor& dx = tp.grad(xi);
        for (std::size_t i = 0; i < in.numel(); ++i) dx[i] += in[i] > 0.0f ? dout[i] : dout[i] * slope;
    });
}

Var relu(Var x) { return leaky_relu(x, 0.0f); }

Var sigmoid(Var x) {
    Tape& t = tape_of(x);
    Tensor out = x.value();
    for (float& v : out.storage()) v = 1.0f / (1.0f + std::exp(-v));
    const int xi = x.id;
    return t.record(std::move(out), "sigmoid", {x}, [=](Tape& tp, int self) {
        const Tensor& y = tp.value(self);
        const Tensor& dout = tp.grad(self);
        Tensor& dx = tp.grad(xi);
        for (std::size_t i = 0; i < y.numel(); ++i) dx[i] += dout[i] * y[i] * (1.0f - y[i]);
    });
}

Var max_pool2(Var x) {
    Tape& t = tape_of(x);
    const Shape s = x.shape();
    require(s.h % 2 == 0 && s.w % 2 == 0, "max_pool2: odd extent " + s.str());
    const Shape os{s.n, s.c, s.h / 2, s.w / 2};
    Tensor out(os);
    std::vector<std::uint32_t> argmax(os.numel());
    const Tensor& in = x.value();
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int xx = 0; xx < os.w; ++xx, ++o) {
                    std::size_t best = ((static_cast<std::size_t>(n) * s.c + c) * s.h + 2 * y) * s.w + 2 * xx;
                    const std::size_t cand[3] = {best + 1, best + s.w, best + s.w + 1};
                    for (std::size_t k : cand)
                        if (in[k] > in[best]) best = k;
                    out[o] = in[best];
                    argmax[o] = static_cast<std::uint32_t>(best);
                }
    const int xi = x.id;
    return t.record(std::move(out), "max_pool2", {x}, [=, argmax = std::move(argmax)](Tape& tp, int self) {
        const Tensor& dout = tp.grad(self);
        Tensor& dx = tp.grad(xi);
        for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += dout[i];
    });
}

Var upsample_nearest2(Var x) {
    Tape& t = tape_of(x);
    const Shape s = x.shape();
    Tensor out(Shape{s.n, s.c, s.h * 2, s.w * 2});
    const Tensor& in = x.value();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < 2 * s.h; ++y)
                for (int xx = 0; xx < 2 * s.w; ++xx) out.at(n, c, y, xx) = in.at(n, c, y / 2, xx / 2);
    const int xi = x.id;
    return t.record(std::move(out), "upsample_nearest2", {x}, [=](Tape& tp, int self) {
        const Tensor& dout = tp.grad(self);
        Tensor& dx = tp.grad(xi);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < 2 * s.h; ++y)
                    for (int xx = 0; xx < 2 * s.w; ++xx) dx.at(n, c, y / 2, xx / 2) += dout.at(n, c, y, xx);
    });
}

Var concat_channels(Var a, Var b) {
    Tape& t = tape_of(a);
    const Shape as = a.shape(), bs = b.shape();
    require(as.n == bs.n && as.h == bs.h && as.w == bs.w,
            "concat_channels: " + as.str() + " and " + bs.str() + " differ outside the channel axis");
    const Shape os{as.n, as.c + bs.c, as.h, as.w};
    Tensor out(os);
    const std::size_t na = as.per_sample(), nb = bs.per_sample();
    for (int n = 0; n < as.n; ++n) {
        std::copy_n(a.value().data() + n * na, na, out.data() + n * (na + nb));
        std::copy_n(b.value().data() + n * nb, nb, out.data() + n * (na + nb) + na);
    }
    const int ai = a.id, bi = b.id;
    return t.record(std::move(out), "concat_channels", {a, b}, [=](Tape& tp, int self) {
        const Tensor& dout = tp.grad(self);
        if (tp.requires_grad(ai)) {
            Tensor& da = tp.grad(ai);
            for (int n = 0; n < as.n; ++n)
                for (std::size_t i = 0; i < na; ++i) da[n * na + i] += dout[n * (na + nb) + i];
        }
        if (tp.requires_grad(bi)) {
            Tensor& db = tp.grad(bi);
            for (int n = 0; n < as.n; ++n)
                for (std::size_t i = 0; i < nb; ++i) db[n * nb + i] += dout[n * (na + nb) + na + i];
        }
    });
}

Var reshape(Var x, Shape shape) {
    Tape& t = tape_of(x);
    Tensor out = x.value().reshaped(shape);
    const int xi = x.id;
    return t.record(std::move(out), "reshape", {x}, [=](Tape& tp, int self) {
        const Tensor& dout = tp.grad(self);
        Tensor& dx = tp.grad(xi);
        for (std::size_t i = 0; i < dout.numel(); ++i) dx[i] += dout[i];
    });
}

Var global_avg_pool(Var x) {
    Tape& t = tape_of(x);
    const Shape s = x.shape();
    const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
    Tensor out(Shape{s.n, s.c, 1, 1});
    const Tensor& in = x.value();
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(s.n) * s.c; ++nc) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += in[nc * plane + i];
        out[nc] = static_cast<float>(acc / static_cast<double>(plane));
    }
    const int xi = x.id;
    return t.record(std::move(out), "global_avg_pool", {x}, [=](Tape& tp, int self) {
        const Tensor& dout = tp.grad(self);
        Tensor& dx = tp.grad(xi);
        const float inv = 1.0f / static_cast<float>(plane);
        for (std::size_t nc = 0; nc < dout.numel(); ++nc)
            for (std::size_t i = 0; i < plane; ++i) dx[nc * plane + i] += dout[nc] * inv;
    });
}

Var add(Var a, Var b) {
    Tape& t = tape_of(a);
    require(a.shape() == b.shape(), "add: " + a.shape().str() + " vs " + b.shape().str());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    const int ai = a.id, bi = b.id;
    return t.record(std::move(out), "add", {a, b}, [=](Tape& tp, int self) {
        const Tensor& dout = tp.grad(self);
        for (int id : {ai, bi}) {
            if (!tp.requires_grad(id)) continue;
            Tensor& d = tp.grad(id);
            for (std::size_t i = 0; i < dout.numel(); ++i) d[i] += dout[i];
        }
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a);
    require(a.shape() == b.shape(), "mul: " + a.shape().str() + " vs " + b.shape().str());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    const int ai = a.id, bi = b.id;
    return t.record(std::move(out), "mul", {a, b}, [=](Tape& tp, int self) {
        const Tensor& dout = tp.grad(self);
        if (tp.requires_grad(ai)) {
            Tensor& d = tp.grad(ai);
            const Tensor& other = tp.value(bi);
            for (std::size_t i = 0; i < dout.numel(); ++i) d[i] += dout[i] * other[i];
        }
        if (tp.requires_grad(bi)) {
            Tensor& d = tp.grad(bi);
            const Tensor& other = tp.value(ai);
            for (std::size_t i = 0; i < dout.numel(); ++i) d[i] += dout[i] * other[i];
        }
    });
}

Var scale(Var x, float s) {
    Tape& t = tape_of(x);
    Tensor out = x.value();
    for (float& v : out.storage()) v *= s;
    const int xi = x.id;
    return t.record(std::move(out), "scale", {x}, [=](Tape& tp, int self) {
        const Tensor& dout = tp.grad(self);
        Tensor& dx = tp.grad(xi);
        for (std::size_t i = 0; i < dout.numel(); ++i) dx[i] += dout[i] * s;
    });
}

Var exp(Var x) {
    Tape& t = tape_of(x);
    Tensor out = x.value();
    for (float& v : out.storage()) v = std::exp(v);
    const int xi = x.id;
    return t.record(std::move(out), "exp", {x}, [=](Tape& tp, int self) {
        const Tensor& y = tp.value(self);
        const Tensor& dout = tp.grad(self);
        Tensor& dx = tp.grad(xi);
        for (std::size_t i = 0; i < dout.numel(); ++i) dx[i] += dout[i] * y[i];
    });
}

Var mse_loss(Var pred, Var target) {
    Tape& t = tape_of(pred);
    require(pred.shape() == target.shape(), "mse_loss: " + pred.shape().str() + " vs " + target.shape().str());
    const double v = kernels::mse<float>(pred.value().span(), target.value().span());
    const int pi = pred.id, ti = target.id;
    return t.record(scalar_tensor(v), "mse_loss", {pred, target}, [=](Tape& tp, int self) {
        const double up = tp.grad(self)[0];
        std::span<float> gp = tp.requires_grad(pi) ? tp.grad(pi).span() : std::span<float>{};
        std::span<float> gt = tp.requires_grad(ti) ? tp.grad(ti).span() : std::span<float>{};
        kernels::mse_backward<float>(tp.value(pi).span(), tp.value(ti).span(), up, gp, gt);
    });
}

Var cosine_consistency_loss(Var a, Var b) {
    Tape& t = tape_of(a);
    const Shape as = a.shape();
    require(as == b.shape(), "cosine_consistency_loss: " + as.str() + " vs " + b.shape().str());
    const std::size_t len = as.per_sample();
    double acc = 0.0;
    for (int n = 0; n < as.n; ++n)
        acc += kernels::cosine_consistency<float>(a.value().span().subspan(n * len, len),
                                                  b.value().span().subspan(n * len, len));
    const int ai = a.id, bi = b.id;
    return t.record(scalar_tensor(acc / as.n), "cosine_consistency", {a, b}, [=](Tape& tp, int self) {
        const double up = tp.grad(self)[0] / as.n;
        std::span<float> ga = tp.requires_grad(ai) ? tp.grad(ai).span() : std::span<float>{};
        std::span<float> gb = tp.requires_grad(bi) ? tp.grad(bi).span() : std::span<float>{};
        for (int n = 0; n < as.n; ++n)
            kernels::cosine_consistency_backward<float>(tp.value(ai).span().subspan(n * len, len),
                                                        tp.value(bi).span().subspan(n * len, len), up,
                                                        ga.empty() ? ga : ga.subspan(n * len, len),
                                                        gb.empty() ? gb : gb.subspan(n * len, len));
    });
}

Var kl_gaussian(Var mu, Var logvar) {
    Tape& t = tape_of(mu);
    require(mu.shape() == logvar.shape(), "kl_gaussian: shape mismatch");
    const Tensor& m = mu.value();
    const Tensor& lv = logvar.value();
    double acc = 0.0;
    for (std::size_t i = 0; i < m.numel(); ++i)
        acc += -0.5 * (1.0 + lv[i] - static_cast<double>(m[i]) * m[i] - std::exp(static_cast<double>(lv[i])));
    const int n = mu.shape().n;
    const int mi = mu.id, li = logvar.id;
    return t.record(scalar_tensor(acc / n), "kl_gaussian", {mu, logvar}, [=](Tape& tp, int self) {
        const float up = tp.grad(self)[0] / static_cast<float>(n);
        const Tensor& mv = tp.value(mi);
        const Tensor& lvv = tp.value(li);
        if (tp.requires_grad(mi)) {
            Tensor& d = tp.grad(mi);
            for (std::size_t i = 0; i < mv.numel(); ++i) d[i] += up * mv[i];
        }
        if (tp.requires_grad(li)) {
            Tensor& d = tp.grad(li);
            for (std::size_t i = 0; i < lvv.numel(); ++i) d[i] += up * 0.5f * (std::exp(lvv[i]) - 1.0f);
        }
    });
}

Var weighted_sum(std::span<const Var> terms, std::span<const float> weights) {
    if (terms.empty() || terms.size() != weights.size())
        throw std::invalid_argument("weighted_sum: need matching, non-empty terms and weights");
    Tape& t = tape_of(terms.front());
    double acc = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        require(terms[i].value().numel() == 1, "weighted_sum: terms must be scalars");
        acc += static_cast<double>(weights[i]) * terms[i].value()[0];
    }
    std::vector<int> ids;
    for (const Var& v : terms) ids.push_back(v.id);
    std::vector<float> w(weights.begin(), weights.end());
    Var out = t.record(scalar_tensor(acc), "weighted_sum", terms, [ids, w](Tape& tp, int self) {
        const float up = tp.grad(self)[0];
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (tp.requires_grad(ids[i])) tp.grad(ids[i])[0] += up * w[i];
    });
    return out;
}

}  // namespace derain::nn
