// Reverse-mode automatic differentiation on a tape of tensor ops.
//
// A Graph records every operation as it executes (define-by-run), caching
// the values needed for the backward pass. Parameters are named leaves;
// after backward() their gradients are retrievable by name. Any op that
// produces a non-finite value fails fast with the originating node, so a
// NaN can never propagate silently into a training run.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "tensor.hpp"

namespace swinlet {

using NodeId = int;

namespace detail {

inline Dims pad_left(const Dims& d, size_t rank) {
    Dims out(rank, 1);
    std::copy(d.begin(), d.end(), out.begin() + i64(rank - d.size()));
    return out;
}

inline Dims broadcast_dims(const Dims& a, const Dims& b, const char* op) {
    const size_t r = std::max(a.size(), b.size());
    const Dims pa = pad_left(a, r), pb = pad_left(b, r);
    Dims out(r);
    for (size_t i = 0; i < r; ++i) {
        if (pa[i] == pb[i] || pa[i] == 1 || pb[i] == 1) {
            out[i] = std::max(pa[i], pb[i]);
        } else {
            fail(std::string(op) + ": cannot broadcast " + dims_str(a) + " with " + dims_str(b));
        }
    }
    return out;
}

// Strides of `d` viewed under broadcast shape `out` (0 where broadcast).
inline Dims bcast_strides(const Dims& d, const Dims& out) {
    const Dims pd = pad_left(d, out.size());
    Dims st(out.size(), 0);
    i64 acc = 1;
    for (int i = int(out.size()) - 1; i >= 0; --i) {
        st[size_t(i)] = (pd[size_t(i)] == 1) ? 0 : acc;
        acc *= pd[size_t(i)];
    }
    return st;
}

// Walks the broadcast output space, handing (out_index, a_offset, b_offset)
// to the visitor in row-major order.
template <typename F>
void bcast_walk(const Dims& out, const Dims& sa, const Dims& sb, F&& visit) {
    const size_t r = out.size();
    const i64 total = numel_of(out);
    if (r == 0) return;
    Dims idx(r, 0);
    i64 offa = 0, offb = 0;
    for (i64 o = 0; o < total; ++o) {
        visit(o, offa, offb);
        int ax = int(r) - 1;
        while (ax >= 0) {
            idx[size_t(ax)]++;
            offa += sa[size_t(ax)];
            offb += sb[size_t(ax)];
            if (idx[size_t(ax)] < out[size_t(ax)]) break;
            offa -= sa[size_t(ax)] * out[size_t(ax)];
            offb -= sb[size_t(ax)] * out[size_t(ax)];
            idx[size_t(ax)] = 0;
            --ax;
        }
    }
}

template <typename T, typename F>
Tensor<T> bcast_binary(const Tensor<T>& a, const Tensor<T>& b, F f, const char* op) {
    if (a.dims == b.dims) {
        Tensor<T> out(a.dims);
        for (i64 i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    if (b.numel() == 1) {
        Tensor<T> out(a.dims);
        const T bv = b[0];
        for (i64 i = 0; i < a.numel(); ++i) out[i] = f(a[i], bv);
        return out;
    }
    if (a.numel() == 1) {
        Tensor<T> out(b.dims);
        const T av = a[0];
        for (i64 i = 0; i < b.numel(); ++i) out[i] = f(av, b[i]);
        return out;
    }
    const Dims od = broadcast_dims(a.dims, b.dims, op);
    Tensor<T> out(od);
    bcast_walk(od, bcast_strides(a.dims, od), bcast_strides(b.dims, od),
               [&](i64 o, i64 ia, i64 ib) { out[o] = f(a[ia], b[ib]); });
    return out;
}

// Sum `g` down to `target` dims (inverse of broadcasting).
template <typename T>
Tensor<T> reduce_to_shape(const Tensor<T>& g, const Dims& target) {
    if (g.dims == target) return g;
    Tensor<T> out(target);
    const Dims st = bcast_strides(target, g.dims);
    const Dims sg = bcast_strides(g.dims, g.dims);
    bcast_walk(g.dims, st, sg, [&](i64, i64 it, i64 ig) { out[it] += g[ig]; });
    return out;
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    check(dst.dims == src.dims, "gradient accumulation shape mismatch");
    for (i64 i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

// C(M,N) = op(A) * op(B), with stored shapes implied by the flags.
template <typename T>
void gemm(const T* A, const T* B, T* C, i64 M, i64 K, i64 N, bool tA, bool tB, bool acc) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const Mat> a(A, tA ? K : M, tA ? M : K);
    Eigen::Map<const Mat> b(B, tB ? N : K, tB ? K : N);
    Eigen::Map<Mat> c(C, M, N);
    auto emit = [&](const auto& expr) {
        if (acc)
            c.noalias() += expr;
        else
            c.noalias() = expr;
    };
    if (!tA && !tB)
        emit(a * b);
    else if (tA && !tB)
        emit(a.transpose() * b);
    else if (!tA && tB)
        emit(a * b.transpose());
    else
        emit(a.transpose() * b.transpose());
}

inline double gelu_cdf(double x) { return 0.5 * (1.0 + std::erf(x * 0.70710678118654752440)); }
inline double gelu_pdf(double x) { return std::exp(-0.5 * x * x) * 0.39894228040143267794; }

}  // namespace detail

template <typename T>
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // When off, skips the per-op finiteness scan (gradcheck perturbs params
    // billions of times; everything else keeps the check on).
    void set_check_finite(bool v) { check_finite_ = v; }

    // ---- leaves ------------------------------------------------------

    NodeId value(Tensor<T> v) { return make_leaf(std::move(v), "const", false, ""); }

    NodeId param(const std::string& name, const Tensor<T>& v) {
        check(!params_.count(name), "param '" + name + "' registered twice");
        NodeId id = make_leaf(v, "param", true, name);
        params_[name] = id;
        return id;
    }

    // ---- elementwise -------------------------------------------------

    NodeId add(NodeId a, NodeId b) { return binary(a, b, "add", [](T x, T y) { return x + y; }, BinKind::Add); }
    NodeId sub(NodeId a, NodeId b) { return binary(a, b, "sub", [](T x, T y) { return x - y; }, BinKind::Sub); }
    NodeId mul(NodeId a, NodeId b) { return binary(a, b, "mul", [](T x, T y) { return x * y; }, BinKind::Mul); }
    NodeId div(NodeId a, NodeId b) { return binary(a, b, "div", [](T x, T y) { return x / y; }, BinKind::Div); }

    NodeId add_scalar(NodeId a, T s) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v += s;
        return unary(a, "add_scalar", std::move(out), [](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) detail::add_into(*gp, g.grad_of(self));
        });
    }

    NodeId mul_scalar(NodeId a, T s) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v *= s;
        return unary(a, "mul_scalar", std::move(out), [s](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                for (i64 i = 0; i < gr.numel(); ++i) (*gp)[i] += gr[i] * s;
            }
        });
    }

    NodeId neg(NodeId a) { return mul_scalar(a, T(-1)); }

    NodeId exp(NodeId a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = std::exp(v);
        return unary(a, "exp", std::move(out), [](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const Tensor<T>& y = g.val(self);
                for (i64 i = 0; i < gr.numel(); ++i) (*gp)[i] += gr[i] * y[i];
            }
        });
    }

    NodeId log(NodeId a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = std::log(v);
        return unary(a, "log", std::move(out), [](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const Tensor<T>& x = g.val(pa);
                for (i64 i = 0; i < gr.numel(); ++i) (*gp)[i] += gr[i] / x[i];
            }
        });
    }

    NodeId sqrt(NodeId a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = std::sqrt(v);
        return unary(a, "sqrt", std::move(out), [](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const Tensor<T>& y = g.val(self);
                for (i64 i = 0; i < gr.numel(); ++i) (*gp)[i] += gr[i] * T(0.5) / y[i];
            }
        });
    }

    NodeId reciprocal(NodeId a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = T(1) / v;
        return unary(a, "reciprocal", std::move(out), [](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const Tensor<T>& y = g.val(self);
                for (i64 i = 0; i < gr.numel(); ++i) (*gp)[i] -= gr[i] * y[i] * y[i];
            }
        });
    }

    NodeId gelu(NodeId a) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = T(double(v) * detail::gelu_cdf(double(v)));
        return unary(a, "gelu", std::move(out), [](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const Tensor<T>& x = g.val(pa);
                for (i64 i = 0; i < gr.numel(); ++i) {
                    const double xv = double(x[i]);
                    (*gp)[i] += gr[i] * T(detail::gelu_cdf(xv) + xv * detail::gelu_pdf(xv));
                }
            }
        });
    }

    NodeId clamp_min(NodeId a, T floor) {
        Tensor<T> out = val(a);
        for (auto& v : out.data) v = std::max(v, floor);
        return unary(a, "clamp_min", std::move(out), [floor](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const Tensor<T>& x = g.val(pa);
                for (i64 i = 0; i < gr.numel(); ++i)
                    if (x[i] > floor) (*gp)[i] += gr[i];
            }
        });
    }

    // ---- reductions ---------------------------------------------------

    NodeId sum_all(NodeId a) {
        T s = 0;
        for (T v : val(a).data) s += v;
        return unary(a, "sum", Tensor<T>::scalar(s), [](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const T gv = g.grad_of(self)[0];
                for (i64 i = 0; i < gp->numel(); ++i) (*gp)[i] += gv;
            }
        });
    }

    NodeId mean_all(NodeId a) {
        const i64 n = val(a).numel();
        return mul_scalar(sum_all(a), T(1) / T(n));
    }

    NodeId sum_axis(NodeId a, int axis) {
        const Tensor<T>& x = val(a);
        const auto [outer, len, inner] = axis_split(x.dims, axis, "sum_axis");
        Dims od = x.dims;
        od.erase(od.begin() + axis);
        if (od.empty()) od = {1};
        Tensor<T> out(od);
        for (i64 o = 0; o < outer; ++o)
            for (i64 k = 0; k < len; ++k)
                for (i64 in = 0; in < inner; ++in) out[o * inner + in] += x[(o * len + k) * inner + in];
        const i64 ln = len, innr = inner, outr = outer;
        return unary(a, "sum_axis", std::move(out), [ln, innr, outr](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                for (i64 o = 0; o < outr; ++o)
                    for (i64 k = 0; k < ln; ++k)
                        for (i64 in = 0; in < innr; ++in) (*gp)[(o * ln + k) * innr + in] += gr[o * innr + in];
            }
        });
    }

    NodeId mean_axis(NodeId a, int axis) {
        const i64 len = val(a).dims[size_t(axis)];
        return mul_scalar(sum_axis(a, axis), T(1) / T(len));
    }

    // ---- shape ---------------------------------------------------------

    NodeId reshape(NodeId a, Dims dims) {
        Tensor<T> out = val(a).reshaped(dims);
        Dims back = val(a).dims;
        return unary(a, "reshape", std::move(out), [back](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) detail::add_into(*gp, g.grad_of(self).reshaped(back));
        });
    }

    NodeId transpose(NodeId a, std::vector<int> perm) {
        const Tensor<T>& x = val(a);
        check(int(perm.size()) == x.rank(), "transpose: perm rank mismatch");
        Tensor<T> out = permute(x, perm);
        std::vector<int> inv(perm.size());
        for (size_t i = 0; i < perm.size(); ++i) inv[size_t(perm[i])] = int(i);
        return unary(a, "transpose", std::move(out), [inv](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) detail::add_into(*gp, permute(g.grad_of(self), inv));
        });
    }

    NodeId concat(const std::vector<NodeId>& parts, int axis) {
        check(!parts.empty(), "concat: empty input list");
        Dims od = val(parts[0]).dims;
        i64 total = 0;
        for (NodeId p : parts) {
            const Dims& d = val(p).dims;
            check(int(d.size()) > axis, "concat: axis out of range");
            Dims ref = od, cur = d;
            ref[size_t(axis)] = cur[size_t(axis)] = 0;
            check(ref == cur, "concat: shapes differ off-axis");
            total += d[size_t(axis)];
        }
        od[size_t(axis)] = total;
        Tensor<T> out(od);
        const auto [outer, len, inner] = axis_split(od, axis, "concat");
        (void)len;
        i64 pos = 0;
        for (NodeId p : parts) {
            const Tensor<T>& x = val(p);
            const i64 plen = x.dims[size_t(axis)];
            for (i64 o = 0; o < outer; ++o)
                std::copy_n(x.ptr() + o * plen * inner, plen * inner, out.ptr() + (o * total + pos) * inner);
            pos += plen;
        }
        Node n;
        n.value = std::move(out);
        n.op = "concat";
        for (NodeId p : parts) n.needs_grad = n.needs_grad || nodes_[size_t(p)].needs_grad;
        std::vector<NodeId> ps = parts;
        const i64 outr = outer, innr = inner, tot = total;
        n.backward = [ps, outr, innr, tot, axis](Graph& g, NodeId self) {
            const Tensor<T>& gr = g.grad_of(self);
            i64 pos2 = 0;
            for (NodeId p : ps) {
                const i64 plen = g.val(p).dims[size_t(axis)];
                if (auto* gp = g.grad_ptr(p)) {
                    for (i64 o = 0; o < outr; ++o) {
                        const T* src = gr.ptr() + (o * tot + pos2) * innr;
                        T* dst = gp->ptr() + o * plen * innr;
                        for (i64 i = 0; i < plen * innr; ++i) dst[i] += src[i];
                    }
                }
                pos2 += plen;
            }
        };
        return push(std::move(n));
    }

    NodeId slice(NodeId a, int axis, i64 start, i64 len) {
        const Tensor<T>& x = val(a);
        check(axis >= 0 && axis < x.rank(), "slice: axis out of range");
        const i64 full = x.dims[size_t(axis)];
        check(start >= 0 && len > 0 && start + len <= full, "slice: bounds out of range");
        Dims od = x.dims;
        od[size_t(axis)] = len;
        const auto [outer, flen, inner] = axis_split(x.dims, axis, "slice");
        (void)flen;
        Tensor<T> out(od);
        for (i64 o = 0; o < outer; ++o)
            std::copy_n(x.ptr() + (o * full + start) * inner, len * inner, out.ptr() + o * len * inner);
        const i64 outr = outer, innr = inner;
        return unary(a, "slice", std::move(out), [outr, innr, full, start, len](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                for (i64 o = 0; o < outr; ++o) {
                    const T* src = gr.ptr() + o * len * innr;
                    T* dst = gp->ptr() + (o * full + start) * innr;
                    for (i64 i = 0; i < len * innr; ++i) dst[i] += src[i];
                }
            }
        });
    }

    // out[i] = in[map[i]]; must cover each source element at most... note:
    // arbitrary maps are allowed, gradients scatter-add through duplicates.
    NodeId index_map(NodeId a, std::vector<i64> map, Dims out_dims) {
        const Tensor<T>& x = val(a);
        check(i64(map.size()) == numel_of(out_dims), "index_map: map length must match output size");
        Tensor<T> out(out_dims);
        for (size_t i = 0; i < map.size(); ++i) {
            check(map[i] >= 0 && map[i] < x.numel(), "index_map: index out of range");
            out[i64(i)] = x[map[i]];
        }
        auto shared = std::make_shared<std::vector<i64>>(std::move(map));
        return unary(a, "index_map", std::move(out), [shared](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const auto& m = *shared;
                for (size_t i = 0; i < m.size(); ++i) (*gp)[m[i]] += gr[i64(i)];
            }
        });
    }

    // table is (rows, cols); idx picks rows with repetition allowed.
    NodeId gather_rows(NodeId table, std::vector<i64> idx) {
        const Tensor<T>& tb = val(table);
        check(tb.rank() == 2, "gather_rows: table must be rank 2");
        const i64 rows = tb.dims[0], cols = tb.dims[1];
        Tensor<T> out({i64(idx.size()), cols});
        for (size_t i = 0; i < idx.size(); ++i) {
            check(idx[i] >= 0 && idx[i] < rows, "gather_rows: row index out of range");
            std::copy_n(tb.ptr() + idx[i] * cols, cols, out.ptr() + i64(i) * cols);
        }
        auto shared = std::make_shared<std::vector<i64>>(std::move(idx));
        return unary(table, "gather_rows", std::move(out), [shared, cols](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const auto& m = *shared;
                for (size_t i = 0; i < m.size(); ++i) {
                    const T* src = gr.ptr() + i64(i) * cols;
                    T* dst = gp->ptr() + m[i] * cols;
                    for (i64 c = 0; c < cols; ++c) dst[c] += src[c];
                }
            }
        });
    }

    // ---- matrix products ------------------------------------------------

    NodeId matmul(NodeId a, NodeId b) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        check(A.rank() == 2 && B.rank() == 2, "matmul: operands must be rank 2");
        check(A.dims[1] == B.dims[0],
              "matmul: inner dimensions differ, " + dims_str(A.dims) + " * " + dims_str(B.dims));
        const i64 M = A.dims[0], K = A.dims[1], N = B.dims[1];
        Tensor<T> out({M, N});
        detail::gemm(A.ptr(), B.ptr(), out.ptr(), M, K, N, false, false, false);
        Node n;
        n.value = std::move(out);
        n.op = "matmul";
        n.needs_grad = nodes_[size_t(a)].needs_grad || nodes_[size_t(b)].needs_grad;
        n.backward = [a, b, M, K, N](Graph& g, NodeId self) {
            const Tensor<T>& gr = g.grad_of(self);
            if (auto* ga = g.grad_ptr(a))
                detail::gemm(gr.ptr(), g.val(b).ptr(), ga->ptr(), M, N, K, false, true, true);
            if (auto* gb = g.grad_ptr(b))
                detail::gemm(g.val(a).ptr(), gr.ptr(), gb->ptr(), K, M, N, true, false, true);
        };
        return push(std::move(n));
    }

    // Batched matmul over identical leading dims; trans flags apply to the
    // trailing two axes.
    NodeId bmm(NodeId a, NodeId b, bool ta = false, bool tb = false) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        check(A.rank() >= 2 && A.rank() == B.rank(), "bmm: rank mismatch");
        const int r = A.rank();
        Dims lead(A.dims.begin(), A.dims.end() - 2);
        check(std::equal(lead.begin(), lead.end(), B.dims.begin()), "bmm: leading dims differ");
        const i64 batches = numel_of(lead);
        const i64 M = ta ? A.dims[size_t(r - 1)] : A.dims[size_t(r - 2)];
        const i64 K = ta ? A.dims[size_t(r - 2)] : A.dims[size_t(r - 1)];
        const i64 Kb = tb ? B.dims[size_t(r - 1)] : B.dims[size_t(r - 2)];
        const i64 N = tb ? B.dims[size_t(r - 2)] : B.dims[size_t(r - 1)];
        check(K == Kb, "bmm: inner dimensions differ, " + dims_str(A.dims) + " * " + dims_str(B.dims));
        Dims od = lead;
        od.push_back(M);
        od.push_back(N);
        Tensor<T> out(od);
        const i64 sa = A.dims[size_t(r - 2)] * A.dims[size_t(r - 1)];
        const i64 sb = B.dims[size_t(r - 2)] * B.dims[size_t(r - 1)];
        for (i64 i = 0; i < batches; ++i)
            detail::gemm(A.ptr() + i * sa, B.ptr() + i * sb, out.ptr() + i * M * N, M, K, N, ta, tb, false);
        Node n;
        n.value = std::move(out);
        n.op = "bmm";
        n.needs_grad = nodes_[size_t(a)].needs_grad || nodes_[size_t(b)].needs_grad;
        n.backward = [a, b, ta, tb, batches, M, K, N, sa, sb](Graph& g, NodeId self) {
            const Tensor<T>& gr = g.grad_of(self);
            // dA = ta ? op(B) dC^T : dC op(B)^T ; dB = tb ? dC^T op(A) : op(A)^T dC
            if (auto* ga = g.grad_ptr(a)) {
                const Tensor<T>& Bv = g.val(b);
                for (i64 i = 0; i < batches; ++i) {
                    const T* gc = gr.ptr() + i * M * N;
                    const T* bp = Bv.ptr() + i * sb;
                    T* dst = ga->ptr() + i * sa;
                    if (!ta)
                        detail::gemm(gc, bp, dst, M, N, K, false, !tb, true);
                    else
                        detail::gemm(bp, gc, dst, K, N, M, tb, true, true);
                }
            }
            if (auto* gb = g.grad_ptr(b)) {
                const Tensor<T>& Av = g.val(a);
                for (i64 i = 0; i < batches; ++i) {
                    const T* gc = gr.ptr() + i * M * N;
                    const T* ap = Av.ptr() + i * sa;
                    T* dst = gb->ptr() + i * sb;
                    if (!tb)
                        detail::gemm(ap, gc, dst, K, M, N, !ta, false, true);
                    else
                        detail::gemm(gc, ap, dst, N, M, K, true, ta, true);
                }
            }
        };
        return push(std::move(n));
    }

    // ---- row-wise (last axis) ops ---------------------------------------

    NodeId softmax(NodeId a) {
        const Tensor<T>& x = val(a);
        const i64 C = x.dims.back();
        const i64 rows = x.numel() / C;
        Tensor<T> out(x.dims);
        for (i64 r = 0; r < rows; ++r) {
            const T* xr = x.ptr() + r * C;
            T* yr = out.ptr() + r * C;
            T mx = xr[0];
            for (i64 c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
            T s = 0;
            for (i64 c = 0; c < C; ++c) s += (yr[c] = std::exp(xr[c] - mx));
            for (i64 c = 0; c < C; ++c) yr[c] /= s;
        }
        return unary(a, "softmax", std::move(out), [C, rows](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const Tensor<T>& y = g.val(self);
                for (i64 r = 0; r < rows; ++r) {
                    const T* yr = y.ptr() + r * C;
                    const T* grr = gr.ptr() + r * C;
                    T dot = 0;
                    for (i64 c = 0; c < C; ++c) dot += yr[c] * grr[c];
                    T* dst = gp->ptr() + r * C;
                    for (i64 c = 0; c < C; ++c) dst[c] += yr[c] * (grr[c] - dot);
                }
            }
        });
    }

    NodeId log_softmax(NodeId a) {
        const Tensor<T>& x = val(a);
        const i64 C = x.dims.back();
        const i64 rows = x.numel() / C;
        Tensor<T> out(x.dims);
        for (i64 r = 0; r < rows; ++r) {
            const T* xr = x.ptr() + r * C;
            T* yr = out.ptr() + r * C;
            T mx = xr[0];
            for (i64 c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
            T s = 0;
            for (i64 c = 0; c < C; ++c) s += std::exp(xr[c] - mx);
            const T lse = mx + std::log(s);
            for (i64 c = 0; c < C; ++c) yr[c] = xr[c] - lse;
        }
        return unary(a, "log_softmax", std::move(out), [C, rows](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const Tensor<T>& y = g.val(self);
                for (i64 r = 0; r < rows; ++r) {
                    const T* yr = y.ptr() + r * C;
                    const T* grr = gr.ptr() + r * C;
                    T gsum = 0;
                    for (i64 c = 0; c < C; ++c) gsum += grr[c];
                    T* dst = gp->ptr() + r * C;
                    for (i64 c = 0; c < C; ++c) dst[c] += grr[c] - std::exp(yr[c]) * gsum;
                }
            }
        });
    }

    // Normalization over the last axis with learnable gain/shift.
    NodeId layernorm(NodeId x, NodeId gamma, NodeId beta, T eps = T(1e-5)) {
        const Tensor<T>& xv = val(x);
        const i64 C = xv.dims.back();
        check(val(gamma).numel() == C && val(beta).numel() == C, "layernorm: gain/shift must have last-axis length");
        const i64 rows = xv.numel() / C;
        Tensor<T> out(xv.dims);
        auto xhat = std::make_shared<Tensor<T>>(xv.dims);
        auto inv_std = std::make_shared<std::vector<T>>(size_t(rows));
        const Tensor<T>& gv = val(gamma);
        const Tensor<T>& bv = val(beta);
        for (i64 r = 0; r < rows; ++r) {
            const T* xr = xv.ptr() + r * C;
            T mean = 0;
            for (i64 c = 0; c < C; ++c) mean += xr[c];
            mean /= T(C);
            T var = 0;
            for (i64 c = 0; c < C; ++c) {
                const T d = xr[c] - mean;
                var += d * d;
            }
            var /= T(C);
            const T is = T(1) / std::sqrt(var + eps);
            (*inv_std)[size_t(r)] = is;
            T* hr = xhat->ptr() + r * C;
            T* yr = out.ptr() + r * C;
            for (i64 c = 0; c < C; ++c) {
                hr[c] = (xr[c] - mean) * is;
                yr[c] = hr[c] * gv[c] + bv[c];
            }
        }
        Node n;
        n.value = std::move(out);
        n.op = "layernorm";
        n.needs_grad = nodes_[size_t(x)].needs_grad || nodes_[size_t(gamma)].needs_grad ||
                       nodes_[size_t(beta)].needs_grad;
        n.backward = [x, gamma, beta, xhat, inv_std, C, rows](Graph& g, NodeId self) {
            const Tensor<T>& gr = g.grad_of(self);
            const Tensor<T>& gv = g.val(gamma);
            auto* gx = g.grad_ptr(x);
            auto* gg = g.grad_ptr(gamma);
            auto* gb = g.grad_ptr(beta);
            for (i64 r = 0; r < rows; ++r) {
                const T* grr = gr.ptr() + r * C;
                const T* hr = xhat->ptr() + r * C;
                if (gg || gb) {
                    for (i64 c = 0; c < C; ++c) {
                        if (gg) (*gg)[c] += grr[c] * hr[c];
                        if (gb) (*gb)[c] += grr[c];
                    }
                }
                if (gx) {
                    T m1 = 0, m2 = 0;
                    for (i64 c = 0; c < C; ++c) {
                        const T gg2 = grr[c] * gv[c];
                        m1 += gg2;
                        m2 += gg2 * hr[c];
                    }
                    m1 /= T(C);
                    m2 /= T(C);
                    const T is = (*inv_std)[size_t(r)];
                    T* dst = gx->ptr() + r * C;
                    for (i64 c = 0; c < C; ++c) dst[c] += (grr[c] * gv[c] - m1 - hr[c] * m2) * is;
                }
            }
        };
        return push(std::move(n));
    }

    // Unit-normalizes each last-axis row; a zero row has no direction and
    // is an error rather than a silent epsilon.
    NodeId cosine_normalize(NodeId a) {
        const Tensor<T>& x = val(a);
        const i64 C = x.dims.back();
        const i64 rows = x.numel() / C;
        Tensor<T> out(x.dims);
        auto norms = std::make_shared<std::vector<T>>(size_t(rows));
        for (i64 r = 0; r < rows; ++r) {
            const T* xr = x.ptr() + r * C;
            T s = 0;
            for (i64 c = 0; c < C; ++c) s += xr[c] * xr[c];
            if (s == T(0)) fail("cosine_normalize: zero-norm vector at row " + std::to_string(r));
            const T nrm = std::sqrt(s);
            (*norms)[size_t(r)] = nrm;
            T* yr = out.ptr() + r * C;
            for (i64 c = 0; c < C; ++c) yr[c] = xr[c] / nrm;
        }
        return unary(a, "cosine_normalize", std::move(out), [norms, C, rows](Graph& g, NodeId self, NodeId pa) {
            if (auto* gp = g.grad_ptr(pa)) {
                const Tensor<T>& gr = g.grad_of(self);
                const Tensor<T>& y = g.val(self);
                for (i64 r = 0; r < rows; ++r) {
                    const T* yr = y.ptr() + r * C;
                    const T* grr = gr.ptr() + r * C;
                    T dot = 0;
                    for (i64 c = 0; c < C; ++c) dot += yr[c] * grr[c];
                    const T nrm = (*norms)[size_t(r)];
                    T* dst = gp->ptr() + r * C;
                    for (i64 c = 0; c < C; ++c) dst[c] += (grr[c] - yr[c] * dot) / nrm;
                }
            }
        });
    }

    // ---- access ----------------------------------------------------------

    const Tensor<T>& val(NodeId id) const { return nodes_[size_t(id)].value; }

    i64 node_count() const { return i64(nodes_.size()); }
    const std::string& op_name(NodeId id) const { return nodes_[size_t(id)].op; }

    bool needs_grad(NodeId id) const { return nodes_[size_t(id)].needs_grad; }

    // Gradient buffer for accumulation, or nullptr when the node does not
    // require gradients.
    Tensor<T>* grad_ptr(NodeId id) {
        Node& n = nodes_[size_t(id)];
        if (!n.needs_grad) return nullptr;
        if (!n.grad_alloc) {
            n.grad = Tensor<T>(n.value.dims);
            n.grad_alloc = true;
        }
        return &n.grad;
    }

    const Tensor<T>& grad_of(NodeId id) const { return nodes_[size_t(id)].grad; }

    // d(output . output_grad)/d(leaf) for every grad-requiring leaf.
    void backward(NodeId root, const Tensor<T>& output_grad) {
        check(!backward_done_, "backward already run on this graph");
        check(root >= 0 && root < NodeId(nodes_.size()), "backward: bad root node");
        check(output_grad.dims == val(root).dims,
              "backward: output_grad shape " + dims_str(output_grad.dims) + " does not match output " +
                  dims_str(val(root).dims));
        backward_done_ = true;
        if (!nodes_[size_t(root)].needs_grad) return;  // output independent of parameters
        *grad_ptr(root) = output_grad;
        for (NodeId i = root; i >= 0; --i) {
            Node& n = nodes_[size_t(i)];
            if (n.grad_alloc && n.backward) n.backward(*this, i);
        }
    }

    // Scalar-output convenience: seeds with 1.
    void backward(NodeId root) {
        check(val(root).numel() == 1, "backward: output is not scalar; pass an explicit output_grad");
        backward(root, Tensor<T>::scalar(T(1)));
    }

    bool backward_done() const { return backward_done_; }

    const Tensor<T>& grad(const std::string& param_name) {
        check(backward_done_, "gradient requested before backward was run");
        auto it = params_.find(param_name);
        check(it != params_.end(), "unknown param '" + param_name + "'");
        return *grad_ptr(it->second);  // zero tensor when the param is unused
    }

    std::map<std::string, Tensor<T>> param_grads() {
        std::map<std::string, Tensor<T>> out;
        for (auto& [name, id] : params_) out[name] = grad(name);
        return out;
    }

    NodeId param_id(const std::string& name) const {
        auto it = params_.find(name);
        check(it != params_.end(), "unknown param '" + name + "'");
        return it->second;
    }

    static Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
        Dims od(perm.size());
        for (size_t i = 0; i < perm.size(); ++i) od[i] = x.dims[size_t(perm[i])];
        Tensor<T> out(od);
        const Dims xs = x.strides();
        Dims ps(perm.size());
        for (size_t i = 0; i < perm.size(); ++i) ps[i] = xs[size_t(perm[i])];
        const Dims os = out.strides();
        const size_t r = od.size();
        Dims idx(r, 0);
        i64 src = 0;
        for (i64 o = 0; o < out.numel(); ++o) {
            out[o] = x[src];
            int ax = int(r) - 1;
            while (ax >= 0) {
                idx[size_t(ax)]++;
                src += ps[size_t(ax)];
                if (idx[size_t(ax)] < od[size_t(ax)]) break;
                src -= ps[size_t(ax)] * od[size_t(ax)];
                idx[size_t(ax)] = 0;
                --ax;
            }
        }
        (void)os;
        return out;
    }

private:
    enum class BinKind { Add, Sub, Mul, Div };

    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        bool grad_alloc = false;
        bool needs_grad = false;
        std::string op;
        std::string param_name;
        std::function<void(Graph&, NodeId)> backward;
    };

    std::vector<Node> nodes_;
    std::map<std::string, NodeId> params_;
    bool check_finite_ = true;
    bool backward_done_ = false;

    NodeId push(Node n) {
        if (check_finite_ && !n.value.all_finite())
            fail("op '" + n.op + "' produced a non-finite value (node " + std::to_string(nodes_.size()) + ")");
        nodes_.push_back(std::move(n));
        return NodeId(nodes_.size() - 1);
    }

    NodeId make_leaf(Tensor<T> v, const char* op, bool needs_grad, const std::string& pname) {
        Node n;
        n.value = std::move(v);
        n.op = op;
        n.needs_grad = needs_grad;
        n.param_name = pname;
        return push(std::move(n));
    }

    template <typename BW>
    NodeId unary(NodeId a, const char* op, Tensor<T> out, BW bw) {
        Node n;
        n.value = std::move(out);
        n.op = op;
        n.needs_grad = nodes_[size_t(a)].needs_grad;
        n.backward = [a, bw](Graph& g, NodeId self) { bw(g, self, a); };
        return push(std::move(n));
    }

    template <typename F>
    NodeId binary(NodeId a, NodeId b, const char* op, F f, BinKind kind) {
        Tensor<T> out = detail::bcast_binary(val(a), val(b), f, op);
        Node n;
        n.value = std::move(out);
        n.op = op;
        n.needs_grad = nodes_[size_t(a)].needs_grad || nodes_[size_t(b)].needs_grad;
        n.backward = [a, b, kind](Graph& g, NodeId self) {
            const Tensor<T>& gr = g.grad_of(self);
            const Tensor<T>& av = g.val(a);
            const Tensor<T>& bv = g.val(b);
            switch (kind) {
                case BinKind::Add:
                    if (auto* ga = g.grad_ptr(a)) detail::add_into(*ga, detail::reduce_to_shape(gr, av.dims));
                    if (auto* gb = g.grad_ptr(b)) detail::add_into(*gb, detail::reduce_to_shape(gr, bv.dims));
                    break;
                case BinKind::Sub:
                    if (auto* ga = g.grad_ptr(a)) detail::add_into(*ga, detail::reduce_to_shape(gr, av.dims));
                    if (auto* gb = g.grad_ptr(b)) {
                        Tensor<T> r = detail::reduce_to_shape(gr, bv.dims);
                        for (auto& v : r.data) v = -v;
                        detail::add_into(*gb, r);
                    }
                    break;
                case BinKind::Mul:
                    if (auto* ga = g.grad_ptr(a)) {
                        Tensor<T> t = detail::bcast_binary(gr, bv, [](T x, T y) { return x * y; }, "mul_bw");
                        detail::add_into(*ga, detail::reduce_to_shape(t, av.dims));
                    }
                    if (auto* gb = g.grad_ptr(b)) {
                        Tensor<T> t = detail::bcast_binary(gr, av, [](T x, T y) { return x * y; }, "mul_bw");
                        detail::add_into(*gb, detail::reduce_to_shape(t, bv.dims));
                    }
                    break;
                case BinKind::Div:
                    if (auto* ga = g.grad_ptr(a)) {
                        Tensor<T> t = detail::bcast_binary(gr, bv, [](T x, T y) { return x / y; }, "div_bw");
                        detail::add_into(*ga, detail::reduce_to_shape(t, av.dims));
                    }
                    if (auto* gb = g.grad_ptr(b)) {
                        Tensor<T> q = detail::bcast_binary(av, bv, [](T x, T y) { return x / (y * y); }, "div_bw");
                        Tensor<T> t = detail::bcast_binary(gr, q, [](T x, T y) { return -x * y; }, "div_bw");
                        detail::add_into(*gb, detail::reduce_to_shape(t, bv.dims));
                    }
                    break;
            }
        };
        return push(std::move(n));
    }

    static std::tuple<i64, i64, i64> axis_split(const Dims& dims, int axis, const char* op) {
        check(axis >= 0 && axis < int(dims.size()), std::string(op) + ": axis out of range");
        i64 outer = 1, inner = 1;
        for (int i = 0; i < axis; ++i) outer *= dims[size_t(i)];
        for (size_t i = size_t(axis) + 1; i < dims.size(); ++i) inner *= dims[i];
        return {outer, dims[size_t(axis)], inner};
    }
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace swinlet
