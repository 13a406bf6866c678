#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "crossfont/core/autograd.hpp"
#include "crossfont/core/tensor.hpp"

namespace crossfont {

namespace detail {

enum class Bcast { Same, Row, Col, Scalar };

/// a must carry the full shape; b may be equal-shaped, a [1,N] row, an [M,1]
/// column, or a scalar.
template <typename T>
Bcast bcast_kind(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() == b.shape()) return Bcast::Same;
    if (b.size() == 1) return Bcast::Scalar;
    require(a.rank() == 2 && b.rank() == 2,
            "broadcast: need rank-2 operands, got " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
    if (b.shape()[0] == 1 && b.shape()[1] == a.shape()[1]) return Bcast::Row;
    if (b.shape()[1] == 1 && b.shape()[0] == a.shape()[0]) return Bcast::Col;
    throw Error("broadcast: incompatible shapes " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
}

template <typename T, typename F>
Tensor<T> bcast_apply(const Tensor<T>& a, const Tensor<T>& b, F f) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    switch (bcast_kind(a, b)) {
        case Bcast::Same:
            for (long i = 0; i < a.size(); ++i) po[i] = f(pa[i], pb[i]);
            break;
        case Bcast::Scalar: {
            T s = pb[0];
            for (long i = 0; i < a.size(); ++i) po[i] = f(pa[i], s);
            break;
        }
        case Bcast::Row: {
            long m = a.shape()[0], n = a.shape()[1];
            for (long r = 0; r < m; ++r)
                for (long c = 0; c < n; ++c) po[r * n + c] = f(pa[r * n + c], pb[c]);
            break;
        }
        case Bcast::Col: {
            long m = a.shape()[0], n = a.shape()[1];
            for (long r = 0; r < m; ++r) {
                T s = pb[r];
                for (long c = 0; c < n; ++c) po[r * n + c] = f(pa[r * n + c], s);
            }
            break;
        }
    }
    return out;
}

}  // namespace detail

// ---- reductions (declared early: broadcast backwards reduce through them) --

template <typename T>
Var<T> sum_all(const Var<T>& a);
template <typename T>
Var<T> sum_rows(const Var<T>& a);
template <typename T>
Var<T> sum_cols(const Var<T>& a);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

namespace detail {

/// Reduce a full-shaped gradient back to the broadcast operand's shape.
template <typename T>
Var<T> reduce_to(const Var<T>& g, Bcast kind) {
    switch (kind) {
        case Bcast::Same: return g;
        case Bcast::Row: return sum_rows(g);
        case Bcast::Col: return sum_cols(g);
        case Bcast::Scalar: return sum_all(g);
    }
    return g;
}

}  // namespace detail

// ---- elementwise binary -----------------------------------------------------

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    auto kind = detail::bcast_kind(a.value(), b.value());
    Tensor<T> out = detail::bcast_apply(a.value(), b.value(), [](T x, T y) { return x + y; });
    return detail::make_op<T>(
        std::move(out), {a, b}, [kind](const Var<T>& g) -> std::vector<Var<T>> {
            return {g, detail::reduce_to(g, kind)};
        });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    auto kind = detail::bcast_kind(a.value(), b.value());
    Tensor<T> out = detail::bcast_apply(a.value(), b.value(), [](T x, T y) { return x - y; });
    return detail::make_op<T>(
        std::move(out), {a, b}, [kind](const Var<T>& g) -> std::vector<Var<T>> {
            Var<T> gb = detail::reduce_to(g, kind);
            return {g, mul(gb, Var<T>::constant(Tensor<T>::full(gb.shape(), T(-1))))};
        });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    auto kind = detail::bcast_kind(a.value(), b.value());
    Tensor<T> out = detail::bcast_apply(a.value(), b.value(), [](T x, T y) { return x * y; });
    return detail::make_op<T>(
        std::move(out), {a, b}, [a, b, kind](const Var<T>& g) -> std::vector<Var<T>> {
            return {mul(g, b), detail::reduce_to(mul(g, a), kind)};
        });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
    auto kind = detail::bcast_kind(a.value(), b.value());
    Tensor<T> out = detail::bcast_apply(a.value(), b.value(), [](T x, T y) { return x / y; });
    return detail::make_op<T>(
        std::move(out), {a, b}, [a, b, kind](const Var<T>& g) -> std::vector<Var<T>> {
            Var<T> ga = div(g, b);
            // gb = -sum_reduce(g * a / b^2)
            Var<T> gb = detail::reduce_to(div(mul(g, a), mul(b, b)), kind);
            gb = mul(gb, Var<T>::constant(Tensor<T>::full(gb.shape(), T(-1))));
            return {ga, gb};
        });
}

// ---- elementwise unary ------------------------------------------------------

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
    Tensor<T> out(a.shape());
    const T* p = a.value().data();
    T* q = out.data();
    for (long i = 0; i < a.size(); ++i) q[i] = p[i] * c;
    return detail::make_op<T>(std::move(out), {a},
                              [c](const Var<T>& g) -> std::vector<Var<T>> { return {scale(g, c)}; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
    Tensor<T> out(a.shape());
    const T* p = a.value().data();
    T* q = out.data();
    for (long i = 0; i < a.size(); ++i) q[i] = p[i] + c;
    return detail::make_op<T>(std::move(out), {a},
                              [](const Var<T>& g) -> std::vector<Var<T>> { return {g}; });
}

template <typename T>
Var<T> neg(const Var<T>& a) {
    return scale(a, T(-1));
}

template <typename T>
Var<T> exp_op(const Var<T>& a) {
    Tensor<T> out(a.shape());
    const T* p = a.value().data();
    T* q = out.data();
    for (long i = 0; i < a.size(); ++i) q[i] = std::exp(p[i]);
    return detail::make_op<T>(std::move(out), {a}, [a](const Var<T>& g) -> std::vector<Var<T>> {
        return {mul(g, exp_op(a))};
    });
}

template <typename T>
Var<T> log_op(const Var<T>& a) {
    Tensor<T> out(a.shape());
    const T* p = a.value().data();
    T* q = out.data();
    for (long i = 0; i < a.size(); ++i) q[i] = std::log(p[i]);
    return detail::make_op<T>(std::move(out), {a}, [a](const Var<T>& g) -> std::vector<Var<T>> {
        return {div(g, a)};
    });
}

template <typename T>
Var<T> sqrt_op(const Var<T>& a) {
    Tensor<T> out(a.shape());
    const T* p = a.value().data();
    T* q = out.data();
    for (long i = 0; i < a.size(); ++i) q[i] = std::sqrt(p[i]);
    return detail::make_op<T>(std::move(out), {a}, [a](const Var<T>& g) -> std::vector<Var<T>> {
        return {div(scale(g, T(0.5)), sqrt_op(a))};
    });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    Tensor<T> out(a.shape());
    const T* p = a.value().data();
    T* q = out.data();
    for (long i = 0; i < a.size(); ++i) q[i] = T(1) / (T(1) + std::exp(-p[i]));
    return detail::make_op<T>(std::move(out), {a}, [a](const Var<T>& g) -> std::vector<Var<T>> {
        Var<T> s = sigmoid(a);
        Var<T> one_minus = add_scalar(neg(s), T(1));
        return {mul(g, mul(s, one_minus))};
    });
}

template <typename T>
Var<T> tanh_op(const Var<T>& a) {
    Tensor<T> out(a.shape());
    const T* p = a.value().data();
    T* q = out.data();
    for (long i = 0; i < a.size(); ++i) q[i] = std::tanh(p[i]);
    return detail::make_op<T>(std::move(out), {a}, [a](const Var<T>& g) -> std::vector<Var<T>> {
        Var<T> t = tanh_op(a);
        return {mul(g, add_scalar(neg(mul(t, t)), T(1)))};
    });
}

/// slope 0 gives plain relu. The gate is constant w.r.t. the input almost
/// everywhere, so the backward treats it as such.
template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0)) {
    Tensor<T> out(a.shape());
    Tensor<T> gate(a.shape());
    const T* p = a.value().data();
    T* q = out.data();
    T* gt = gate.data();
    for (long i = 0; i < a.size(); ++i) {
        bool pos = p[i] > 0;
        gt[i] = pos ? T(1) : slope;
        q[i] = pos ? p[i] : p[i] * slope;
    }
    return detail::make_op<T>(std::move(out), {a},
                              [gate](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {mul(g, Var<T>::constant(gate))};
                              });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    return leaky_relu(a, T(0));
}

template <typename T>
Var<T> abs_op(const Var<T>& a) {
    Tensor<T> out(a.shape());
    Tensor<T> sign(a.shape());
    const T* p = a.value().data();
    T* q = out.data();
    T* s = sign.data();
    for (long i = 0; i < a.size(); ++i) {
        // subgradient 0 at 0: exactly-matched residuals must stop pulling
        s[i] = p[i] > 0 ? T(1) : (p[i] < 0 ? T(-1) : T(0));
        q[i] = std::abs(p[i]);
    }
    return detail::make_op<T>(std::move(out), {a},
                              [sign](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {mul(g, Var<T>::constant(sign))};
                              });
}

// ---- matrix ops -------------------------------------------------------------

namespace detail {

template <typename T>
using EigenRowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Tensor<T> matmul_values(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
            "matmul: shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor<T> out({a.rows(), b.cols()});
    Eigen::Map<const EigenRowMat<T>> ma(a.data(), a.rows(), a.cols());
    Eigen::Map<const EigenRowMat<T>> mb(b.data(), b.rows(), b.cols());
    Eigen::Map<EigenRowMat<T>> mo(out.data(), out.rows(), out.cols());
    mo.noalias() = ma * mb;
    return out;
}

}  // namespace detail

template <typename T>
Var<T> transpose(const Var<T>& a);

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    Tensor<T> out = detail::matmul_values(a.value(), b.value());
    return detail::make_op<T>(std::move(out), {a, b},
                              [a, b](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {matmul(g, transpose(b)), matmul(transpose(a), g)};
                              });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
    const Tensor<T>& v = a.value();
    require(v.rank() == 2, "transpose: rank-2 required");
    Tensor<T> out({v.cols(), v.rows()});
    for (long r = 0; r < v.rows(); ++r)
        for (long c = 0; c < v.cols(); ++c) out.at(c, r) = v.at(r, c);
    return detail::make_op<T>(std::move(out), {a}, [](const Var<T>& g) -> std::vector<Var<T>> {
        return {transpose(g)};
    });
}

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<long> shape) {
    Tensor<T> out = a.value().reshaped(std::move(shape)).clone();
    std::vector<long> orig = a.shape();
    return detail::make_op<T>(std::move(out), {a},
                              [orig](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {reshape(g, orig)};
                              });
}

// ---- slicing / concatenation ------------------------------------------------

template <typename T>
Var<T> pad_rows(const Var<T>& a, long total_rows, long row0);

template <typename T>
Var<T> slice_rows(const Var<T>& a, long row0, long nrows) {
    const Tensor<T>& v = a.value();
    require(v.rank() == 2 && row0 >= 0 && row0 + nrows <= v.rows(), "slice_rows: out of range");
    Tensor<T> out({nrows, v.cols()});
    std::memcpy(out.data(), v.data() + row0 * v.cols(),
                sizeof(T) * static_cast<std::size_t>(nrows * v.cols()));
    long total = v.rows();
    return detail::make_op<T>(std::move(out), {a},
                              [row0, total](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {pad_rows(g, total, row0)};
                              });
}

/// Place `a` into an otherwise-zero matrix of total_rows rows, starting at
/// row0. Inverse of slice_rows for gradient purposes.
template <typename T>
Var<T> pad_rows(const Var<T>& a, long total_rows, long row0) {
    const Tensor<T>& v = a.value();
    require(v.rank() == 2 && row0 >= 0 && row0 + v.rows() <= total_rows, "pad_rows: out of range");
    Tensor<T> out = Tensor<T>::zeros({total_rows, v.cols()});
    std::memcpy(out.data() + row0 * v.cols(), v.data(),
                sizeof(T) * static_cast<std::size_t>(v.rows() * v.cols()));
    long nrows = v.rows();
    return detail::make_op<T>(std::move(out), {a},
                              [row0, nrows](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {slice_rows(g, row0, nrows)};
                              });
}

template <typename T>
Var<T> pad_cols(const Var<T>& a, long total_cols, long col0);

template <typename T>
Var<T> slice_cols(const Var<T>& a, long col0, long ncols) {
    const Tensor<T>& v = a.value();
    require(v.rank() == 2 && col0 >= 0 && col0 + ncols <= v.cols(), "slice_cols: out of range");
    Tensor<T> out({v.rows(), ncols});
    for (long r = 0; r < v.rows(); ++r)
        std::memcpy(out.data() + r * ncols, v.data() + r * v.cols() + col0,
                    sizeof(T) * static_cast<std::size_t>(ncols));
    long total = v.cols();
    return detail::make_op<T>(std::move(out), {a},
                              [col0, total](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {pad_cols(g, total, col0)};
                              });
}

template <typename T>
Var<T> pad_cols(const Var<T>& a, long total_cols, long col0) {
    const Tensor<T>& v = a.value();
    require(v.rank() == 2 && col0 >= 0 && col0 + v.cols() <= total_cols, "pad_cols: out of range");
    Tensor<T> out = Tensor<T>::zeros({v.rows(), total_cols});
    for (long r = 0; r < v.rows(); ++r)
        std::memcpy(out.data() + r * total_cols + col0, v.data() + r * v.cols(),
                    sizeof(T) * static_cast<std::size_t>(v.cols()));
    long ncols = v.cols();
    return detail::make_op<T>(std::move(out), {a},
                              [col0, ncols](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {slice_cols(g, col0, ncols)};
                              });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    require(!parts.empty(), "concat_cols: empty input");
    long rows = parts[0].value().rows();
    long total = 0;
    for (const auto& p : parts) {
        require(p.value().rows() == rows, "concat_cols: row mismatch");
        total += p.value().cols();
    }
    Tensor<T> out({rows, total});
    std::vector<long> offsets;
    long off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const Tensor<T>& v = p.value();
        for (long r = 0; r < rows; ++r)
            std::memcpy(out.data() + r * total + off, v.data() + r * v.cols(),
                        sizeof(T) * static_cast<std::size_t>(v.cols()));
        off += v.cols();
    }
    std::vector<long> widths;
    for (const auto& p : parts) widths.push_back(p.value().cols());
    return detail::make_op<T>(std::move(out), parts,
                              [offsets, widths](const Var<T>& g) -> std::vector<Var<T>> {
                                  std::vector<Var<T>> gs;
                                  for (std::size_t i = 0; i < offsets.size(); ++i)
                                      gs.push_back(slice_cols(g, offsets[i], widths[i]));
                                  return gs;
                              });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    require(!parts.empty(), "concat_rows: empty input");
    long cols = parts[0].value().cols();
    long total = 0;
    for (const auto& p : parts) {
        require(p.value().cols() == cols, "concat_rows: column mismatch");
        total += p.value().rows();
    }
    Tensor<T> out({total, cols});
    std::vector<long> offsets;
    std::vector<long> heights;
    long off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        heights.push_back(p.value().rows());
        std::memcpy(out.data() + off * cols, p.value().data(),
                    sizeof(T) * static_cast<std::size_t>(p.value().size()));
        off += p.value().rows();
    }
    return detail::make_op<T>(std::move(out), parts,
                              [offsets, heights](const Var<T>& g) -> std::vector<Var<T>> {
                                  std::vector<Var<T>> gs;
                                  for (std::size_t i = 0; i < offsets.size(); ++i)
                                      gs.push_back(slice_rows(g, offsets[i], heights[i]));
                                  return gs;
                              });
}

// ---- gather / scatter -------------------------------------------------------

using IndexMap = std::shared_ptr<const std::vector<long>>;

template <typename T>
Var<T> scatter_add_flat(const Var<T>& a, const IndexMap& idx, std::vector<long> out_shape);

/// out.flat[j] = a.flat[idx[j]], with idx[j] == -1 producing 0. Covers
/// embedding lookup, im2col patches and nearest-neighbour upsampling.
template <typename T>
Var<T> gather_flat(const Var<T>& a, const IndexMap& idx, std::vector<long> out_shape) {
    Tensor<T> out(out_shape);
    const T* p = a.value().data();
    T* q = out.data();
    const auto& map = *idx;
    require(static_cast<long>(map.size()) == out.size(), "gather_flat: index map size mismatch");
    for (std::size_t j = 0; j < map.size(); ++j) q[j] = map[j] >= 0 ? p[map[j]] : T(0);
    std::vector<long> in_shape = a.shape();
    return detail::make_op<T>(std::move(out), {a},
                              [idx, in_shape](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {scatter_add_flat(g, idx, in_shape)};
                              });
}

/// out.flat[idx[j]] += a.flat[j]; adjoint of gather_flat.
template <typename T>
Var<T> scatter_add_flat(const Var<T>& a, const IndexMap& idx, std::vector<long> out_shape) {
    Tensor<T> out = Tensor<T>::zeros(out_shape);
    const T* p = a.value().data();
    T* q = out.data();
    const auto& map = *idx;
    require(static_cast<long>(map.size()) == a.size(), "scatter_add_flat: index map size mismatch");
    for (std::size_t j = 0; j < map.size(); ++j)
        if (map[j] >= 0) q[map[j]] += p[j];
    std::vector<long> in_shape = a.shape();
    return detail::make_op<T>(std::move(out), {a},
                              [idx, in_shape](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {gather_flat(g, idx, in_shape)};
                              });
}

template <typename T>
Var<T> scatter_add_rows(const Var<T>& a, const IndexMap& idx, long out_rows);

/// out[i, :] = a[idx[i], :]
template <typename T>
Var<T> gather_rows(const Var<T>& a, const IndexMap& idx) {
    const Tensor<T>& v = a.value();
    require(v.rank() == 2, "gather_rows: rank-2 required");
    long n = static_cast<long>(idx->size());
    Tensor<T> out({n, v.cols()});
    for (long i = 0; i < n; ++i) {
        long r = (*idx)[i];
        require(r >= 0 && r < v.rows(), "gather_rows: index out of range");
        std::memcpy(out.data() + i * v.cols(), v.data() + r * v.cols(),
                    sizeof(T) * static_cast<std::size_t>(v.cols()));
    }
    long rows = v.rows();
    return detail::make_op<T>(std::move(out), {a},
                              [idx, rows](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {scatter_add_rows(g, idx, rows)};
                              });
}

template <typename T>
Var<T> scatter_add_rows(const Var<T>& a, const IndexMap& idx, long out_rows) {
    const Tensor<T>& v = a.value();
    require(v.rank() == 2 && static_cast<long>(idx->size()) == v.rows(),
            "scatter_add_rows: index size mismatch");
    Tensor<T> out = Tensor<T>::zeros({out_rows, v.cols()});
    for (long i = 0; i < v.rows(); ++i) {
        long r = (*idx)[i];
        const T* src = v.data() + i * v.cols();
        T* dst = out.data() + r * v.cols();
        for (long c = 0; c < v.cols(); ++c) dst[c] += src[c];
    }
    return detail::make_op<T>(std::move(out), {a},
                              [idx](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {gather_rows(g, idx)};
                              });
}

// ---- reductions -------------------------------------------------------------

template <typename T>
Var<T> sum_all(const Var<T>& a) {
    T s = 0;
    const T* p = a.value().data();
    for (long i = 0; i < a.size(); ++i) s += p[i];
    std::vector<long> shape = a.shape();
    return detail::make_op<T>(Tensor<T>::scalar(s), {a},
                              [shape](const Var<T>& g) -> std::vector<Var<T>> {
                                  return {mul(Var<T>::constant(Tensor<T>::ones(shape)), g)};
                              });
}

template <typename T>
Var<T> sum_rows(const Var<T>& a) {
    const Tensor<T>& v = a.value();
    require(v.rank() == 2, "sum_rows: rank-2 required");
    Tensor<T> out = Tensor<T>::zeros({1, v.cols()});
    for (long r = 0; r < v.rows(); ++r)
        for (long c = 0; c < v.cols(); ++c) out[c] += v.at(r, c);
    long rows = v.rows(), cols = v.cols();
    return detail::make_op<T>(std::move(out), {a},
                              [rows, cols](const Var<T>& g) -> std::vector<Var<T>> {
                                  auto ones = Var<T>::constant(Tensor<T>::ones({rows, cols}));
                                  return {mul(ones, g)};
                              });
}

template <typename T>
Var<T> sum_cols(const Var<T>& a) {
    const Tensor<T>& v = a.value();
    require(v.rank() == 2, "sum_cols: rank-2 required");
    Tensor<T> out = Tensor<T>::zeros({v.rows(), 1});
    for (long r = 0; r < v.rows(); ++r) {
        T s = 0;
        for (long c = 0; c < v.cols(); ++c) s += v.at(r, c);
        out[r] = s;
    }
    long rows = v.rows(), cols = v.cols();
    return detail::make_op<T>(std::move(out), {a},
                              [rows, cols](const Var<T>& g) -> std::vector<Var<T>> {
                                  auto ones = Var<T>::constant(Tensor<T>::ones({rows, cols}));
                                  return {mul(ones, g)};
                              });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
    return scale(sum_all(a), T(1) / static_cast<T>(a.size()));
}

// ---- non-differentiable helpers ----------------------------------------------

template <typename T>
Tensor<T> row_max_values(const Tensor<T>& v) {
    require(v.rank() == 2, "row_max_values: rank-2 required");
    Tensor<T> out({v.rows(), 1});
    for (long r = 0; r < v.rows(); ++r) {
        T m = v.at(r, 0);
        for (long c = 1; c < v.cols(); ++c) m = std::max(m, v.at(r, c));
        out[r] = m;
    }
    return out;
}

template <typename T>
std::vector<long> argmax_rows(const Tensor<T>& v) {
    require(v.rank() == 2, "argmax_rows: rank-2 required");
    std::vector<long> out(static_cast<std::size_t>(v.rows()));
    for (long r = 0; r < v.rows(); ++r) {
        long best = 0;
        T m = v.at(r, 0);
        for (long c = 1; c < v.cols(); ++c)
            if (v.at(r, c) > m) {
                m = v.at(r, c);
                best = c;
            }
        out[static_cast<std::size_t>(r)] = best;
    }
    return out;
}

// ---- composites ---------------------------------------------------------------

/// Row-wise softmax. The max shift is a detached constant; the value is
/// unchanged by it and its true gradient contribution is identically zero.
template <typename T>
Var<T> softmax_rows(const Var<T>& a) {
    auto shift = Var<T>::constant(row_max_values(a.value()));
    auto e = exp_op(sub(a, shift));
    return div(e, sum_cols(e));
}

template <typename T>
Var<T> log_softmax_rows(const Var<T>& a) {
    auto shift = Var<T>::constant(row_max_values(a.value()));
    auto xm = sub(a, shift);
    auto lse = log_op(sum_cols(exp_op(xm)));
    return sub(xm, lse);
}

/// Mean categorical cross-entropy over rows with weight > 0; `weights` is a
/// per-row mask/weight column.
template <typename T>
Var<T> cross_entropy_rows(const Var<T>& logits, const std::vector<long>& targets,
                          const Tensor<T>& weights) {
    const Tensor<T>& v = logits.value();
    require(v.rank() == 2 && static_cast<long>(targets.size()) == v.rows(),
            "cross_entropy_rows: target count mismatch");
    require(weights.size() == v.rows(), "cross_entropy_rows: weight count mismatch");
    auto logp = log_softmax_rows(logits);
    auto picked_idx = std::make_shared<std::vector<long>>();
    picked_idx->reserve(targets.size());
    T wsum = 0;
    for (long r = 0; r < v.rows(); ++r) {
        require(targets[r] >= 0 && targets[r] < v.cols(), "cross_entropy_rows: bad target");
        picked_idx->push_back(r * v.cols() + targets[r]);
        wsum += weights[r];
    }
    require(wsum > 0, "cross_entropy_rows: no weighted rows");
    auto picked = gather_flat(logp, picked_idx, {v.rows(), 1});
    auto weighted = mul(picked, Var<T>::constant(weights.reshaped({v.rows(), 1})));
    return scale(sum_all(weighted), T(-1) / wsum);
}

/// LayerNorm over the last (column) axis with affine parameters, built from
/// primitives so all derivatives are exact.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
    const Tensor<T>& v = x.value();
    require(v.rank() == 2, "layer_norm: rank-2 required");
    T n = static_cast<T>(v.cols());
    auto mean = scale(sum_cols(x), T(1) / n);
    auto centered = sub(x, mean);
    auto var = scale(sum_cols(mul(centered, centered)), T(1) / n);
    auto denom = sqrt_op(add_scalar(var, eps));
    auto norm = div(centered, denom);
    return add(mul(norm, gamma), beta);
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    return add(matmul(x, w), b);
}

template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
    return mean_all(abs_op(sub(a, b)));
}

/// Euclidean norm of the whole tensor.
template <typename T>
Var<T> l2_norm(const Var<T>& a) {
    return sqrt_op(sum_all(mul(a, a)));
}

}  // namespace crossfont
