#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "svt/tensor.hpp"

namespace svt {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Contiguous segment layout: segment s covers rows [offsets[s], offsets[s+1]).
using SegmentOffsets = std::vector<int>;

// Reverse-mode tape over matrix-shaped values. Forward values are computed
// eagerly when an op is recorded; backward() replays the recorded closures in
// reverse. Every slot is written exactly once and accumulation order is fixed
// by recording order, so gradients are bit-reproducible across runs.
template <typename T>
class Tape {
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        bool needs_grad = false;
        std::function<void(Tape&, Var)> back;
    };
    std::vector<Node> nodes_;

    Var push(Tensor<T> val, bool needs_grad, std::function<void(Tape&, Var)> back) {
        Node n;
        n.val = std::move(val);
        n.needs_grad = needs_grad;
        if (needs_grad) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    bool ng(Var a) const { return nodes_[a.id].needs_grad; }

    // Accumulate g into the gradient slot of `a` if it participates.
    void acc(Var a, const Tensor<T>& g) {
        Node& n = nodes_[a.id];
        if (!n.needs_grad) return;
        for (size_t i = 0; i < g.v.size(); ++i) n.grad.v[i] += g.v[i];
    }

public:
    const Tensor<T>& val(Var a) const { return nodes_[a.id].val; }
    const Tensor<T>& grad(Var a) const { return nodes_[a.id].grad; }
    Tensor<T>& grad_mut(Var a) { return nodes_[a.id].grad; }
    size_t num_nodes() const { return nodes_.size(); }

    Var leaf(Tensor<T> v, bool needs_grad = false) { return push(std::move(v), needs_grad, nullptr); }
    Var constant(Tensor<T> v) { return leaf(std::move(v), false); }
    Var scalar_const(T x) { return constant(Tensor<T>::scalar(x)); }

    void backward(Var loss) {
        const Tensor<T>& lv = val(loss);
        if (lv.rows != 1 || lv.cols != 1)
            throw std::invalid_argument("backward: loss must be a scalar");
        for (auto& n : nodes_)
            if (n.needs_grad) n.grad = Tensor<T>(n.val.rows, n.val.cols);
        if (!nodes_[loss.id].needs_grad)
            throw std::invalid_argument("backward: loss does not depend on any parameter");
        nodes_[loss.id].grad.v[0] = T(1);
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.needs_grad && n.back) n.back(*this, Var{i});
        }
    }

    // ---- linear algebra ----

    Var matmul(Var a, Var b) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        if (A.cols != B.rows) throw std::invalid_argument("matmul: inner dims mismatch");
        Tensor<T> C(A.rows, B.cols);
        for (int i = 0; i < A.rows; ++i) {
            const T* ar = A.row(i);
            T* cr = C.row(i);
            for (int k = 0; k < A.cols; ++k) {
                const T av = ar[k];
                if (av == T(0)) continue;
                const T* br = B.row(k);
                for (int j = 0; j < B.cols; ++j) cr[j] += av * br[j];
            }
        }
        return push(std::move(C), ng(a) || ng(b), [a, b](Tape& t, Var out) {
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& A = t.val(a);
            const Tensor<T>& B = t.val(b);
            if (t.ng(a)) {
                Tensor<T>& GA = t.nodes_[a.id].grad;
                for (int i = 0; i < A.rows; ++i) {
                    const T* gr = G.row(i);
                    T* gar = GA.row(i);
                    for (int k = 0; k < A.cols; ++k) {
                        const T* br = B.row(k);
                        T s = 0;
                        for (int j = 0; j < B.cols; ++j) s += gr[j] * br[j];
                        gar[k] += s;
                    }
                }
            }
            if (t.ng(b)) {
                Tensor<T>& GB = t.nodes_[b.id].grad;
                for (int i = 0; i < A.rows; ++i) {
                    const T* ar = A.row(i);
                    const T* gr = G.row(i);
                    for (int k = 0; k < A.cols; ++k) {
                        const T av = ar[k];
                        if (av == T(0)) continue;
                        T* gbr = GB.row(k);
                        for (int j = 0; j < B.cols; ++j) gbr[j] += av * gr[j];
                    }
                }
            }
        });
    }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        if (!A.same_shape(B)) throw std::invalid_argument("add: shape mismatch");
        Tensor<T> C = A;
        for (size_t i = 0; i < C.v.size(); ++i) C.v[i] += B.v[i];
        return push(std::move(C), ng(a) || ng(b), [a, b](Tape& t, Var out) {
            t.acc(a, t.grad(out));
            t.acc(b, t.grad(out));
        });
    }

    Var sub(Var a, Var b) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        if (!A.same_shape(B)) throw std::invalid_argument("sub: shape mismatch");
        Tensor<T> C = A;
        for (size_t i = 0; i < C.v.size(); ++i) C.v[i] -= B.v[i];
        return push(std::move(C), ng(a) || ng(b), [a, b](Tape& t, Var out) {
            t.acc(a, t.grad(out));
            if (t.ng(b)) {
                Tensor<T>& GB = t.nodes_[b.id].grad;
                const Tensor<T>& G = t.grad(out);
                for (size_t i = 0; i < G.v.size(); ++i) GB.v[i] -= G.v[i];
            }
        });
    }

    Var mul(Var a, Var b) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        if (!A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
        Tensor<T> C = A;
        for (size_t i = 0; i < C.v.size(); ++i) C.v[i] *= B.v[i];
        return push(std::move(C), ng(a) || ng(b), [a, b](Tape& t, Var out) {
            const Tensor<T>& G = t.grad(out);
            if (t.ng(a)) {
                Tensor<T>& GA = t.nodes_[a.id].grad;
                const Tensor<T>& B = t.val(b);
                for (size_t i = 0; i < G.v.size(); ++i) GA.v[i] += G.v[i] * B.v[i];
            }
            if (t.ng(b)) {
                Tensor<T>& GB = t.nodes_[b.id].grad;
                const Tensor<T>& A = t.val(a);
                for (size_t i = 0; i < G.v.size(); ++i) GB.v[i] += G.v[i] * A.v[i];
            }
        });
    }

    Var scale(Var a, T s) {
        Tensor<T> C = val(a);
        for (auto& x : C.v) x *= s;
        return push(std::move(C), ng(a), [a, s](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            for (size_t i = 0; i < G.v.size(); ++i) GA.v[i] += G.v[i] * s;
        });
    }

    Var add_scalar(Var a, T s) {
        Tensor<T> C = val(a);
        for (auto& x : C.v) x += s;
        return push(std::move(C), ng(a), [a](Tape& t, Var out) { t.acc(a, t.grad(out)); });
    }

    // a[N,C] + b[1,C] broadcast over rows
    Var add_rowvec(Var a, Var b) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        if (B.rows != 1 || B.cols != A.cols) throw std::invalid_argument("add_rowvec: shape mismatch");
        Tensor<T> C = A;
        for (int i = 0; i < C.rows; ++i) {
            T* cr = C.row(i);
            for (int j = 0; j < C.cols; ++j) cr[j] += B.v[j];
        }
        return push(std::move(C), ng(a) || ng(b), [a, b](Tape& t, Var out) {
            const Tensor<T>& G = t.grad(out);
            t.acc(a, G);
            if (t.ng(b)) {
                Tensor<T>& GB = t.nodes_[b.id].grad;
                for (int i = 0; i < G.rows; ++i) {
                    const T* gr = G.row(i);
                    for (int j = 0; j < G.cols; ++j) GB.v[j] += gr[j];
                }
            }
        });
    }

    Var concat_cols(Var a, Var b) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        if (A.rows != B.rows) throw std::invalid_argument("concat_cols: row mismatch");
        Tensor<T> C(A.rows, A.cols + B.cols);
        for (int i = 0; i < A.rows; ++i) {
            T* cr = C.row(i);
            const T* ar = A.row(i);
            const T* br = B.row(i);
            for (int j = 0; j < A.cols; ++j) cr[j] = ar[j];
            for (int j = 0; j < B.cols; ++j) cr[A.cols + j] = br[j];
        }
        return push(std::move(C), ng(a) || ng(b), [a, b](Tape& t, Var out) {
            const Tensor<T>& G = t.grad(out);
            const int ac = t.val(a).cols, bc = t.val(b).cols;
            if (t.ng(a)) {
                Tensor<T>& GA = t.nodes_[a.id].grad;
                for (int i = 0; i < G.rows; ++i)
                    for (int j = 0; j < ac; ++j) GA.at(i, j) += G.at(i, j);
            }
            if (t.ng(b)) {
                Tensor<T>& GB = t.nodes_[b.id].grad;
                for (int i = 0; i < G.rows; ++i)
                    for (int j = 0; j < bc; ++j) GB.at(i, j) += G.at(i, ac + j);
            }
        });
    }

    // ---- gather / scatter over row index maps ----

    Var gather_rows(Var a, std::vector<int> idx) {
        const Tensor<T>& A = val(a);
        Tensor<T> C(static_cast<int>(idx.size()), A.cols);
        for (size_t e = 0; e < idx.size(); ++e)
            for (int j = 0; j < A.cols; ++j) C.at(static_cast<int>(e), j) = A.at(idx[e], j);
        return push(std::move(C), ng(a), [a, idx = std::move(idx)](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            for (size_t e = 0; e < idx.size(); ++e)
                for (int j = 0; j < G.cols; ++j) GA.at(idx[e], j) += G.at(static_cast<int>(e), j);
        });
    }

    // out[idx[e], :] += a[e, :]
    Var scatter_rows(Var a, std::vector<int> idx, int out_rows) {
        const Tensor<T>& A = val(a);
        if (static_cast<int>(idx.size()) != A.rows) throw std::invalid_argument("scatter_rows: index size");
        Tensor<T> C(out_rows, A.cols);
        for (size_t e = 0; e < idx.size(); ++e)
            for (int j = 0; j < A.cols; ++j) C.at(idx[e], j) += A.at(static_cast<int>(e), j);
        return push(std::move(C), ng(a), [a, idx = std::move(idx)](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            for (size_t e = 0; e < idx.size(); ++e)
                for (int j = 0; j < G.cols; ++j) GA.at(static_cast<int>(e), j) += G.at(idx[e], j);
        });
    }

    // Per-row constant scale (non-differentiable weights, e.g. 1/count).
    Var row_scale(Var a, std::vector<T> s) {
        const Tensor<T>& A = val(a);
        if (static_cast<int>(s.size()) != A.rows) throw std::invalid_argument("row_scale: size mismatch");
        Tensor<T> C = A;
        for (int i = 0; i < C.rows; ++i) {
            T* cr = C.row(i);
            for (int j = 0; j < C.cols; ++j) cr[j] *= s[i];
        }
        return push(std::move(C), ng(a), [a, s = std::move(s)](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            for (int i = 0; i < G.rows; ++i)
                for (int j = 0; j < G.cols; ++j) GA.at(i, j) += G.at(i, j) * s[i];
        });
    }

    // ---- multi-head helpers ----
    // Channels are split into H contiguous head blocks of width C/H.

    // s[e,h] = sum_{k in head h} a[e,k] * b[e,k]
    Var head_dot(Var a, Var b, int heads) {
        const Tensor<T>& A = val(a);
        const Tensor<T>& B = val(b);
        if (!A.same_shape(B) || A.cols % heads != 0) throw std::invalid_argument("head_dot: shape");
        const int d = A.cols / heads;
        Tensor<T> C(A.rows, heads);
        for (int e = 0; e < A.rows; ++e) {
            const T* ar = A.row(e);
            const T* br = B.row(e);
            for (int h = 0; h < heads; ++h) {
                T s = 0;
                for (int k = 0; k < d; ++k) s += ar[h * d + k] * br[h * d + k];
                C.at(e, h) = s;
            }
        }
        return push(std::move(C), ng(a) || ng(b), [a, b, heads](Tape& t, Var out) {
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& A = t.val(a);
            const Tensor<T>& B = t.val(b);
            const int d = A.cols / heads;
            if (t.ng(a)) {
                Tensor<T>& GA = t.nodes_[a.id].grad;
                for (int e = 0; e < A.rows; ++e)
                    for (int h = 0; h < heads; ++h) {
                        const T g = G.at(e, h);
                        for (int k = 0; k < d; ++k) GA.at(e, h * d + k) += g * B.at(e, h * d + k);
                    }
            }
            if (t.ng(b)) {
                Tensor<T>& GB = t.nodes_[b.id].grad;
                for (int e = 0; e < A.rows; ++e)
                    for (int h = 0; h < heads; ++h) {
                        const T g = G.at(e, h);
                        for (int k = 0; k < d; ++k) GB.at(e, h * d + k) += g * A.at(e, h * d + k);
                    }
            }
        });
    }

    // out[e, k in head h] = v[e,k] * w[e,h]
    Var head_scale(Var v, Var w) {
        const Tensor<T>& V = val(v);
        const Tensor<T>& W = val(w);
        if (V.rows != W.rows || V.cols % W.cols != 0) throw std::invalid_argument("head_scale: shape");
        const int heads = W.cols, d = V.cols / heads;
        Tensor<T> C(V.rows, V.cols);
        for (int e = 0; e < V.rows; ++e)
            for (int h = 0; h < heads; ++h) {
                const T wv = W.at(e, h);
                for (int k = 0; k < d; ++k) C.at(e, h * d + k) = V.at(e, h * d + k) * wv;
            }
        return push(std::move(C), ng(v) || ng(w), [v, w](Tape& t, Var out) {
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& V = t.val(v);
            const Tensor<T>& W = t.val(w);
            const int heads = W.cols, d = V.cols / heads;
            if (t.ng(v)) {
                Tensor<T>& GV = t.nodes_[v.id].grad;
                for (int e = 0; e < V.rows; ++e)
                    for (int h = 0; h < heads; ++h) {
                        const T wv = W.at(e, h);
                        for (int k = 0; k < d; ++k) GV.at(e, h * d + k) += G.at(e, h * d + k) * wv;
                    }
            }
            if (t.ng(w)) {
                Tensor<T>& GW = t.nodes_[w.id].grad;
                for (int e = 0; e < V.rows; ++e)
                    for (int h = 0; h < heads; ++h) {
                        T s = 0;
                        for (int k = 0; k < d; ++k) s += G.at(e, h * d + k) * V.at(e, h * d + k);
                        GW.at(e, h) += s;
                    }
            }
        });
    }

    // Numerically stabilized softmax within contiguous row segments, applied
    // independently per column.
    Var segment_softmax(Var a, SegmentOffsets offsets) {
        const Tensor<T>& A = val(a);
        if (offsets.empty() || offsets.back() != A.rows)
            throw std::invalid_argument("segment_softmax: bad offsets");
        Tensor<T> C(A.rows, A.cols);
        const int S = static_cast<int>(offsets.size()) - 1;
        for (int s = 0; s < S; ++s) {
            const int lo = offsets[s], hi = offsets[s + 1];
            if (lo == hi) continue;
            for (int j = 0; j < A.cols; ++j) {
                T m = A.at(lo, j);
                for (int e = lo + 1; e < hi; ++e) m = std::max(m, A.at(e, j));
                T z = 0;
                for (int e = lo; e < hi; ++e) {
                    const T x = std::exp(A.at(e, j) - m);
                    C.at(e, j) = x;
                    z += x;
                }
                for (int e = lo; e < hi; ++e) C.at(e, j) /= z;
            }
        }
        return push(std::move(C), ng(a), [a, offsets = std::move(offsets)](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& W = t.val(out);
            const int S = static_cast<int>(offsets.size()) - 1;
            for (int s = 0; s < S; ++s) {
                const int lo = offsets[s], hi = offsets[s + 1];
                for (int j = 0; j < G.cols; ++j) {
                    T dot = 0;
                    for (int e = lo; e < hi; ++e) dot += G.at(e, j) * W.at(e, j);
                    for (int e = lo; e < hi; ++e) GA.at(e, j) += W.at(e, j) * (G.at(e, j) - dot);
                }
            }
        });
    }

    // ---- normalization ----

    // Per-row: y = (x - mean) / sqrt(var + eps) * gain + bias, gain/bias [1,C].
    Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5)) {
        const Tensor<T>& X = val(x);
        const Tensor<T>& Gn = val(gain);
        const Tensor<T>& Bs = val(bias);
        if (Gn.cols != X.cols || Bs.cols != X.cols) throw std::invalid_argument("layer_norm: shape");
        const int C = X.cols;
        Tensor<T> Y(X.rows, C);
        for (int i = 0; i < X.rows; ++i) {
            const T* xr = X.row(i);
            T mu = 0;
            for (int j = 0; j < C; ++j) mu += xr[j];
            mu /= T(C);
            T var = 0;
            for (int j = 0; j < C; ++j) var += (xr[j] - mu) * (xr[j] - mu);
            var /= T(C);
            const T inv = T(1) / std::sqrt(var + eps);
            T* yr = Y.row(i);
            for (int j = 0; j < C; ++j) yr[j] = (xr[j] - mu) * inv * Gn.v[j] + Bs.v[j];
        }
        return push(std::move(Y), ng(x) || ng(gain) || ng(bias), [x, gain, bias, eps](Tape& t, Var out) {
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& X = t.val(x);
            const Tensor<T>& Gn = t.val(gain);
            const int C = X.cols;
            for (int i = 0; i < X.rows; ++i) {
                const T* xr = X.row(i);
                T mu = 0;
                for (int j = 0; j < C; ++j) mu += xr[j];
                mu /= T(C);
                T var = 0;
                for (int j = 0; j < C; ++j) var += (xr[j] - mu) * (xr[j] - mu);
                var /= T(C);
                const T inv = T(1) / std::sqrt(var + eps);
                if (t.ng(bias)) {
                    Tensor<T>& GB = t.nodes_[bias.id].grad;
                    for (int j = 0; j < C; ++j) GB.v[j] += G.at(i, j);
                }
                if (t.ng(gain)) {
                    Tensor<T>& GG = t.nodes_[gain.id].grad;
                    for (int j = 0; j < C; ++j) GG.v[j] += G.at(i, j) * (xr[j] - mu) * inv;
                }
                if (t.ng(x)) {
                    Tensor<T>& GX = t.nodes_[x.id].grad;
                    // dL/dy_hat components folded through the row statistics
                    T sum_g = 0, sum_gy = 0;
                    for (int j = 0; j < C; ++j) {
                        const T gy = G.at(i, j) * Gn.v[j];
                        const T yh = (xr[j] - mu) * inv;
                        sum_g += gy;
                        sum_gy += gy * yh;
                    }
                    for (int j = 0; j < C; ++j) {
                        const T gy = G.at(i, j) * Gn.v[j];
                        const T yh = (xr[j] - mu) * inv;
                        GX.at(i, j) += inv * (gy - sum_g / T(C) - yh * sum_gy / T(C));
                    }
                }
            }
        });
    }

    // ---- pointwise nonlinearities ----

    Var relu(Var a) {
        Tensor<T> C = val(a);
        for (auto& x : C.v) x = x > T(0) ? x : T(0);
        return push(std::move(C), ng(a), [a](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& A = t.val(a);
            for (size_t i = 0; i < G.v.size(); ++i)
                if (A.v[i] > T(0)) GA.v[i] += G.v[i];
        });
    }

    Var gelu(Var a) {
        Tensor<T> C = val(a);
        for (auto& x : C.v) x = T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
        return push(std::move(C), ng(a), [a](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& A = t.val(a);
            const T inv_sqrt2pi = T(0.3989422804014327);
            for (size_t i = 0; i < G.v.size(); ++i) {
                const T x = A.v[i];
                const T cdf = T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
                const T pdf = inv_sqrt2pi * std::exp(-x * x / T(2));
                GA.v[i] += G.v[i] * (cdf + x * pdf);
            }
        });
    }

    Var tanh_op(Var a) {
        Tensor<T> C = val(a);
        for (auto& x : C.v) x = std::tanh(x);
        return push(std::move(C), ng(a), [a](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& Y = t.val(out);
            for (size_t i = 0; i < G.v.size(); ++i) GA.v[i] += G.v[i] * (T(1) - Y.v[i] * Y.v[i]);
        });
    }

    Var sigmoid_op(Var a) {
        Tensor<T> C = val(a);
        for (auto& x : C.v) x = T(1) / (T(1) + std::exp(-x));
        return push(std::move(C), ng(a), [a](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& Y = t.val(out);
            for (size_t i = 0; i < G.v.size(); ++i) GA.v[i] += G.v[i] * Y.v[i] * (T(1) - Y.v[i]);
        });
    }

    Var log_op(Var a) {
        Tensor<T> C = val(a);
        for (auto& x : C.v) x = std::log(x);
        return push(std::move(C), ng(a), [a](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& A = t.val(a);
            for (size_t i = 0; i < G.v.size(); ++i) GA.v[i] += G.v[i] / A.v[i];
        });
    }

    Var abs_op(Var a) {
        Tensor<T> C = val(a);
        for (auto& x : C.v) x = std::abs(x);
        return push(std::move(C), ng(a), [a](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& A = t.val(a);
            for (size_t i = 0; i < G.v.size(); ++i) {
                const T s = A.v[i] > T(0) ? T(1) : (A.v[i] < T(0) ? T(-1) : T(0));
                GA.v[i] += G.v[i] * s;
            }
        });
    }

    // Pass-through gradient strictly inside (lo, hi), zero outside.
    Var clamp_op(Var a, T lo, T hi) {
        Tensor<T> C = val(a);
        for (auto& x : C.v) x = x < lo ? lo : (x > hi ? hi : x);
        return push(std::move(C), ng(a), [a, lo, hi](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const Tensor<T>& G = t.grad(out);
            const Tensor<T>& A = t.val(a);
            for (size_t i = 0; i < G.v.size(); ++i)
                if (A.v[i] > lo && A.v[i] < hi) GA.v[i] += G.v[i];
        });
    }

    // ---- reductions ----

    Var sum_all(Var a) {
        T s = 0;
        for (const auto& x : val(a).v) s += x;
        return push(Tensor<T>::scalar(s), ng(a), [a](Tape& t, Var out) {
            if (!t.ng(a)) return;
            Tensor<T>& GA = t.nodes_[a.id].grad;
            const T g = t.grad(out).v[0];
            for (auto& x : GA.v) x += g;
        });
    }

    Var mean_all(Var a) {
        const size_t n = val(a).v.size();
        if (n == 0) return constant(Tensor<T>::scalar(T(0)));
        return scale(sum_all(a), T(1) / static_cast<T>(n));
    }
};

}  // namespace svt
