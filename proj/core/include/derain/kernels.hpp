// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0
//
// Scalar-generic compute kernels behind the autograd ops. Training runs them in
// float; gradient checks instantiate them in double.

#pragma once

#include "derain/aligned.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace derain::nn::kernels {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

/// Geometry of a square-kernel convolution from `in` (c x h x w) to `out`.
struct ConvGeometry {
    int channels = 0;
    int height = 0;
    int width = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;

    int out_height() const noexcept { return (height + 2 * pad - kernel) / stride + 1; }
    int out_width() const noexcept { return (width + 2 * pad - kernel) / stride + 1; }
    std::size_t col_rows() const noexcept { return static_cast<std::size_t>(channels) * kernel * kernel; }
    std::size_t col_cols() const noexcept { return static_cast<std::size_t>(out_height()) * out_width(); }
};

/// col[(c*k + ki)*k + kj][oy*Wo + ox] = x[c][oy*s - p + ki][ox*s - p + kj] (0 outside).
template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
    const int ho = g.out_height(), wo = g.out_width();
    std::size_t row = 0;
    for (int c = 0; c < g.channels; ++c) {
        const T* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj, ++row) {
                T* dst = col + row * g.col_cols();
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    T* d = dst + static_cast<std::size_t>(oy) * wo;
                    if (iy < 0 || iy >= g.height) {
                        std::fill(d, d + wo, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * g.width;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kj;
                        d[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters-adds columns back into x.
template <class T>
void col2im(const T* col, const ConvGeometry& g, T* x) {
    const int ho = g.out_height(), wo = g.out_width();
    std::size_t row = 0;
    for (int c = 0; c < g.channels; ++c) {
        T* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj, ++row) {
                const T* src = col + row * g.col_cols();
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.height) continue;
                    T* d = plane + static_cast<std::size_t>(iy) * g.width;
                    const T* s = src + static_cast<std::size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * g.stride - g.pad + kj;
                        if (ix >= 0 && ix < g.width) d[ix] += s[ox];
                    }
                }
            }
        }
    }
}

/// out[n] = W * im2col(x[n]) + b. W is cout x (cin*k*k), x is batch x cin x h x w.
template <class T>
void conv2d_forward(const T* x, int batch, const ConvGeometry& g, const T* w, const T* b, int cout, T* out) {
    const std::size_t in_size = static_cast<std::size_t>(g.channels) * g.height * g.width;
    const std::size_t out_size = static_cast<std::size_t>(cout) * g.col_cols();
    AlignedVector<T> col(g.col_rows() * g.col_cols());
    ConstMatMap<T> wm(w, cout, static_cast<Eigen::Index>(g.col_rows()));
    for (int n = 0; n < batch; ++n) {
        im2col(x + n * in_size, g, col.data());
        ConstMatMap<T> cm(col.data(), static_cast<Eigen::Index>(g.col_rows()), static_cast<Eigen::Index>(g.col_cols()));
        MatMap<T> om(out + n * out_size, cout, static_cast<Eigen::Index>(g.col_cols()));
        om.noalias() = wm * cm;
        if (b)
            for (int o = 0; o < cout; ++o) om.row(o).array() += b[o];
    }
}

/// Accumulates into whichever of dx, dw, db are non-null.
template <class T>
void conv2d_backward(const T* x, int batch, const ConvGeometry& g, const T* w, int cout, const T* dout, T* dx, T* dw,
                     T* db) {
    const std::size_t in_size = static_cast<std::size_t>(g.channels) * g.height * g.width;
    const std::size_t out_size = static_cast<std::size_t>(cout) * g.col_cols();
    const auto rows = static_cast<Eigen::Index>(g.col_rows());
    const auto cols = static_cast<Eigen::Index>(g.col_cols());
    AlignedVector<T> col(g.col_rows() * g.col_cols());
    AlignedVector<T> dcol(dx ? col.size() : 0);
    ConstMatMap<T> wm(w, cout, rows);
    for (int n = 0; n < batch; ++n) {
        ConstMatMap<T> dom(dout + n * out_size, cout, cols);
        if (dw) {
            im2col(x + n * in_size, g, col.data());
            ConstMatMap<T> cm(col.data(), rows, cols);
            MatMap<T> dwm(dw, cout, rows);
            dwm.noalias() += dom * cm.transpose();
        }
        if (db)
            for (int o = 0; o < cout; ++o) {
                const T* row = dout + n * out_size + static_cast<std::size_t>(o) * cols;
                T acc = 0;
                for (Eigen::Index i = 0; i < cols; ++i) acc += row[i];
                db[o] += acc;
            }
        if (dx) {
            MatMap<T> dcm(dcol.data(), rows, cols);
            dcm.noalias() = wm.transpose() * dom;
            col2im(dcol.data(), g, dx + n * in_size);
        }
    }
}

/// Geometry helper for transposed convolution: the output (cout x ho x wo) is
/// the "image" whose im2col windows line up with the h x w input positions.
inline ConvGeometry transposed_geometry(int cout, int in_h, int in_w, int kernel, int stride, int pad) {
    ConvGeometry g;
    g.channels = cout;
    g.height = (in_h - 1) * stride - 2 * pad + kernel;
    g.width = (in_w - 1) * stride - 2 * pad + kernel;
    g.kernel = kernel;
    g.stride = stride;
    g.pad = pad;
    return g;
}

/// W is cin x (cout*k*k); x is batch x cin x h x w; out is batch x cout x ho x wo.
template <class T>
void conv_transpose2d_forward(const T* x, int batch, int cin, const ConvGeometry& og, const T* w, const T* b, T* out) {
    const auto rows = static_cast<Eigen::Index>(og.col_rows());
    const auto positions = static_cast<Eigen::Index>(og.col_cols());
    const std::size_t in_size = static_cast<std::size_t>(cin) * positions;
    const std::size_t out_size = static_cast<std::size_t>(og.channels) * og.height * og.width;
    AlignedVector<T> col(og.col_rows() * og.col_cols());
    ConstMatMap<T> wm(w, cin, rows);
    for (int n = 0; n < batch; ++n) {
        ConstMatMap<T> xm(x + n * in_size, cin, positions);
        MatMap<T> cm(col.data(), rows, positions);
        cm.noalias() = wm.transpose() * xm;
        T* o = out + n * out_size;
        std::fill(o, o + out_size, T(0));
        col2im(col.data(), og, o);
        if (b) {
            const std::size_t plane = static_cast<std::size_t>(og.height) * og.width;
            for (int c = 0; c < og.channels; ++c)
                for (std::size_t i = 0; i < plane; ++i) o[c * plane + i] += b[c];
        }
    }
}

template <class T>
void conv_transpose2d_backward(const T* x, int batch, int cin, const ConvGeometry& og, const T* w, const T* dout, T* dx,
                               T* dw, T* db) {
    const auto rows = static_cast<Eigen::Index>(og.col_rows());
    const auto positions = static_cast<Eigen::Index>(og.col_cols());
    const std::size_t in_size = static_cast<std::size_t>(cin) * positions;
    const std::size_t plane = static_cast<std::size_t>(og.height) * og.width;
    const std::size_t out_size = static_cast<std::size_t>(og.channels) * plane;
    AlignedVector<T> dcol(og.col_rows() * og.col_cols());
    ConstMatMap<T> wm(w, cin, rows);
    for (int n = 0; n < batch; ++n) {
        const T* dn = dout + n * out_size;
        im2col(dn, og, dcol.data());
        ConstMatMap<T> dcm(dcol.data(), rows, positions);
        if (dx) {
            MatMap<T> dxm(dx + n * in_size, cin, positions);
            dxm.noalias() += wm * dcm;
        }
        if (dw) {
            ConstMatMap<T> xm(x + n * in_size, cin, positions);
            MatMap<T> dwm(dw, cin, rows);
            dwm.noalias() += xm * dcm.transpose();
        }
        if (db)
            for (int c = 0; c < og.channels; ++c)
                for (std::size_t i = 0; i < plane; ++i) db[c] += dn[c * plane + i];
    }
}

/// Mean squared difference, accumulated in double.
template <class T>
double mse(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size()) throw std::invalid_argument("mse: size mismatch");
    if (a.empty()) throw std::invalid_argument("mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

/// d mse / d a, scaled by `upstream`, added into grad_a (and negated into grad_b).
template <class T>
void mse_backward(std::span<const T> a, std::span<const T> b, double upstream, std::span<T> grad_a, std::span<T> grad_b) {
    const double k = 2.0 * upstream / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double g = k * (static_cast<double>(a[i]) - static_cast<double>(b[i]));
        if (!grad_a.empty()) grad_a[i] += static_cast<T>(g);
        if (!grad_b.empty()) grad_b[i] -= static_cast<T>(g);
    }
}

/// 1 - cos(a, b). When either vector is zero the loss is defined as 1 and its
/// gradient as zero; `degenerate` reports that case.
template <class T>
double cosine_consistency(std::span<const T> a, std::span<const T> b, bool* degenerate = nullptr) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_consistency: length mismatch");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += static_cast<double>(a[i]) * b[i];
        aa += static_cast<double>(a[i]) * a[i];
        bb += static_cast<double>(b[i]) * b[i];
    }
    const bool zero = aa == 0.0 || bb == 0.0;
    if (degenerate) *degenerate = zero;
    if (zero) return 1.0;
    return 1.0 - ab / std::sqrt(aa * bb);
}

template <class T>
void cosine_consistency_backward(std::span<const T> a, std::span<const T> b, double upstream, std::span<T> grad_a,
                                 std::span<T> grad_b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += static_cast<double>(a[i]) * b[i];
        aa += static_cast<double>(a[i]) * a[i];
        bb += static_cast<double>(b[i]) * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return;
    const double na = std::sqrt(aa), nb = std::sqrt(bb);
    const double cosv = ab / (na * nb);
    // d(1 - cos)/da = -(b / (|a||b|) - cos * a / |a|^2)
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!grad_a.empty())
            grad_a[i] += static_cast<T>(-upstream * (b[i] / (na * nb) - cosv * a[i] / aa));
        if (!grad_b.empty())
            grad_b[i] += static_cast<T>(-upstream * (a[i] / (na * nb) - cosv * b[i] / bb));
    }
}

}  // namespace derain::nn::kernels
