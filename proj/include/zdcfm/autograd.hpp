#pragma once

// Reverse-mode autodiff on a per-pass tape. Ops compute eagerly through the
// kernels and record a backward closure; backward() walks the tape in reverse
// creation order. The tape is cleared between batches, nothing is retained.

#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <utility>

#include "zdcfm/kernels.hpp"
#include "zdcfm/tensor.hpp"

namespace zdcfm {

template <class T>
class Tape {
public:
    struct Var {
        int32_t id = -1;
        bool valid() const { return id >= 0; }
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void set_grad_enabled(bool on) { grad_enabled_ = on; }
    bool grad_enabled() const { return grad_enabled_; }

    // When set, every op output is rounded through binary16 (emulated
    // reduced-precision execution). Inference-only mode.
    void set_f16_activations(bool on) { f16_activations_ = on; }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

    Var leaf(TensorT<T> value, bool requires_grad = false) {
        Node n;
        n.value = std::move(value);
        n.requires_grad = requires_grad && grad_enabled_;
        n.is_leaf = true;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }

    const TensorT<T>& val(Var v) const { return node(v).value; }
    TensorT<T>& val_mut(Var v) { return node(v).value; }

    const TensorT<T>& grad(Var v) const {
        const Node& n = node(v);
        if (n.grad.numel() == 0) throw std::runtime_error("grad: no gradient recorded for this variable");
        return n.grad;
    }

    bool has_grad(Var v) const { return node(v).grad.numel() != 0; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }

    void zero_grads() {
        for (Node& n : nodes_) n.grad = TensorT<T>();
    }

    // Reverse sweep from a scalar loss. Repeated calls re-run the closures on
    // fresh grad buffers (zero_grads happens internally), so one forward pass
    // can serve several independent backward passes.
    void backward(Var loss) {
        Node& ln = node(loss);
        if (ln.value.numel() != 1) throw std::runtime_error("backward: loss must be scalar");
        zero_grads();
        if (!ln.requires_grad) return;  // constant loss: all gradients stay zero
        ln.grad = TensorT<T>::full(ln.value.shape, T(1));
        for (int32_t i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.backward && n.grad.numel() != 0) n.backward(*this);
        }
    }

    // Gradient map keyed by leaf id; leaves without requires_grad get no entry.
    std::unordered_map<int32_t, TensorT<T>> gradients() const {
        std::unordered_map<int32_t, TensorT<T>> out;
        for (size_t i = 0; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            if (n.is_leaf && n.requires_grad)
                out[static_cast<int32_t>(i)] =
                    n.grad.numel() ? n.grad : TensorT<T>::zeros(n.value.shape);
        }
        return out;
    }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        check_same(a, b, "add");
        TensorT<T> y(val(a).shape);
        kern::map2(val(a).data.data(), val(b).data.data(), y.data.data(), y.numel(),
                   [](T x, T z) { return x + z; });
        Var out = push(std::move(y), {a, b});
        attach(out, [out, a, b](Tape& t) {
            const auto& g = t.grad_of(out);
            t.accum(a, g.data.data(), +1);
            t.accum(b, g.data.data(), +1);
        });
        return out;
    }

    Var sub(Var a, Var b) {
        check_same(a, b, "sub");
        TensorT<T> y(val(a).shape);
        kern::map2(val(a).data.data(), val(b).data.data(), y.data.data(), y.numel(),
                   [](T x, T z) { return x - z; });
        Var out = push(std::move(y), {a, b});
        attach(out, [out, a, b](Tape& t) {
            const auto& g = t.grad_of(out);
            t.accum(a, g.data.data(), +1);
            t.accum(b, g.data.data(), -1);
        });
        return out;
    }

    Var mul(Var a, Var b) {
        check_same(a, b, "mul");
        TensorT<T> y(val(a).shape);
        kern::map2(val(a).data.data(), val(b).data.data(), y.data.data(), y.numel(),
                   [](T x, T z) { return x * z; });
        Var out = push(std::move(y), {a, b});
        attach(out, [out, a, b](Tape& t) {
            const auto& g = t.grad_of(out);
            if (t.wants(a)) t.accum_mul(a, g, t.val(b));
            if (t.wants(b)) t.accum_mul(b, g, t.val(a));
        });
        return out;
    }

    Var scale(Var a, T s) {
        TensorT<T> y(val(a).shape);
        kern::map1(val(a).data.data(), y.data.data(), y.numel(), [s](T x) { return x * s; });
        Var out = push(std::move(y), {a});
        attach(out, [out, a, s](Tape& t) {
            const auto& g = t.grad_of(out);
            t.accum_scaled(a, g, s);
        });
        return out;
    }

    Var add_scalar(Var a, T s) {
        TensorT<T> y(val(a).shape);
        kern::map1(val(a).data.data(), y.data.data(), y.numel(), [s](T x) { return x + s; });
        Var out = push(std::move(y), {a});
        attach(out, [out, a](Tape& t) { t.accum_scaled(a, t.grad_of(out), T(1)); });
        return out;
    }

    Var silu(Var a) {
        TensorT<T> y(val(a).shape);
        kern::map1(val(a).data.data(), y.data.data(), y.numel(), [](T x) {
            return static_cast<T>(static_cast<double>(x) / (1.0 + std::exp(-static_cast<double>(x))));
        });
        Var out = push(std::move(y), {a});
        attach(out, [out, a](Tape& t) {
            const auto& g = t.grad_of(out);
            const auto& x = t.val(a);
            if (!t.wants(a)) return;
            TensorT<T>& ga = t.grad_buf(a);
            int64_t n = x.numel();
            const T* xd = x.data.data();
            const T* gd = g.data.data();
            T* out_d = ga.data.data();
#pragma omp parallel for schedule(static) if (kern::parallel_enabled() && n > 4096)
            for (int64_t i = 0; i < n; ++i) {
                double s = 1.0 / (1.0 + std::exp(-static_cast<double>(xd[i])));
                double d = s * (1.0 + static_cast<double>(xd[i]) * (1.0 - s));
                out_d[i] += static_cast<T>(static_cast<double>(gd[i]) * d);
            }
        });
        return out;
    }

    Var sigmoid(Var a) {
        TensorT<T> y(val(a).shape);
        kern::map1(val(a).data.data(), y.data.data(), y.numel(), [](T x) {
            return static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x))));
        });
        Var out = push(std::move(y), {a});
        attach(out, [out, a](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            const auto& yv = t.val(out);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < yv.numel(); ++i) {
                double s = static_cast<double>(yv[i]);
                ga[i] += static_cast<T>(static_cast<double>(g[i]) * s * (1.0 - s));
            }
        });
        return out;
    }

    Var relu(Var a) {
        TensorT<T> y(val(a).shape);
        kern::map1(val(a).data.data(), y.data.data(), y.numel(), [](T x) { return x > T(0) ? x : T(0); });
        Var out = push(std::move(y), {a});
        attach(out, [out, a](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            const auto& x = t.val(a);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < x.numel(); ++i)
                if (x[i] > T(0)) ga[i] += g[i];
        });
        return out;
    }

    Var exp(Var a) {
        TensorT<T> y(val(a).shape);
        kern::map1(val(a).data.data(), y.data.data(), y.numel(),
                   [](T x) { return static_cast<T>(std::exp(static_cast<double>(x))); });
        if (!y.all_finite()) throw std::runtime_error("exp: non-finite result");
        Var out = push(std::move(y), {a});
        attach(out, [out, a](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            const auto& yv = t.val(out);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < yv.numel(); ++i) ga[i] += g[i] * yv[i];
        });
        return out;
    }

    Var square(Var a) { return mul(a, a); }

    // ---- reductions ----

    Var sum(Var a) {
        double s = kern::sum_all(val(a).data.data(), val(a).numel());
        TensorT<T> y({1});
        y[0] = static_cast<T>(s);
        Var out = push(std::move(y), {a});
        attach(out, [out, a](Tape& t) {
            if (!t.wants(a)) return;
            T g = t.grad_of(out)[0];
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
        });
        return out;
    }

    Var mean(Var a) {
        int64_t n = val(a).numel();
        double s = kern::sum_all(val(a).data.data(), n) / static_cast<double>(n);
        TensorT<T> y({1});
        y[0] = static_cast<T>(s);
        Var out = push(std::move(y), {a});
        attach(out, [out, a, n](Tape& t) {
            if (!t.wants(a)) return;
            T g = static_cast<T>(static_cast<double>(t.grad_of(out)[0]) / static_cast<double>(n));
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
        });
        return out;
    }

    // mean over all elements of (a-b)^2
    Var mse(Var a, Var b) {
        check_same(a, b, "mse");
        int64_t n = val(a).numel();
        double s = kern::sum_sq_diff(val(a).data.data(), val(b).data.data(), n) / static_cast<double>(n);
        TensorT<T> y({1});
        y[0] = static_cast<T>(s);
        Var out = push(std::move(y), {a, b});
        attach(out, [out, a, b, n](Tape& t) {
            T g = t.grad_of(out)[0];
            double c = 2.0 * static_cast<double>(g) / static_cast<double>(n);
            const auto& av = t.val(a);
            const auto& bv = t.val(b);
            if (t.wants(a)) {
                TensorT<T>& ga = t.grad_buf(a);
                for (int64_t i = 0; i < n; ++i)
                    ga[i] += static_cast<T>(c * (static_cast<double>(av[i]) - static_cast<double>(bv[i])));
            }
            if (t.wants(b)) {
                TensorT<T>& gb = t.grad_buf(b);
                for (int64_t i = 0; i < n; ++i)
                    gb[i] -= static_cast<T>(c * (static_cast<double>(av[i]) - static_cast<double>(bv[i])));
            }
        });
        return out;
    }

    // (B,C,H,W) -> (B,C): mean over the spatial extent
    Var mean_spatial(Var a) {
        const auto& x = val(a);
        if (x.ndim() != 4) throw std::runtime_error("mean_spatial: expected NCHW");
        int64_t B = x.dim(0), C = x.dim(1), HW = static_cast<int64_t>(x.dim(2)) * x.dim(3);
        TensorT<T> y({x.dim(0), x.dim(1)});
        for (int64_t bc = 0; bc < B * C; ++bc) {
            double s = 0;
            const T* row = x.data.data() + bc * HW;
            for (int64_t i = 0; i < HW; ++i) s += static_cast<double>(row[i]);
            y[bc] = static_cast<T>(s / static_cast<double>(HW));
        }
        Var out = push(std::move(y), {a});
        attach(out, [out, a, B, C, HW](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t bc = 0; bc < B * C; ++bc) {
                T v = static_cast<T>(static_cast<double>(g[bc]) / static_cast<double>(HW));
                T* row = ga.data.data() + bc * HW;
                for (int64_t i = 0; i < HW; ++i) row[i] += v;
            }
        });
        return out;
    }

    // ---- linear / matmul ----

    // x (N, I) * w (O, I)^T + b (O) -> (N, O)
    Var linear(Var x, Var w, Var b) {
        const auto& xv = val(x);
        const auto& wv = val(w);
        if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1))
            throw std::runtime_error("linear: shape mismatch " + xv.shape_str() + " vs " + wv.shape_str());
        int64_t N = xv.dim(0), I = xv.dim(1), O = wv.dim(0);
        TensorT<T> y({xv.dim(0), wv.dim(0)});
        kern::gemm_nt_rows(N, O, I, xv.data.data(), wv.data.data(), y.data.data());
        if (b.valid()) {
            const auto& bv = val(b);
            if (bv.numel() != O) throw std::runtime_error("linear: bias shape mismatch");
            for (int64_t n = 0; n < N; ++n)
                for (int64_t o = 0; o < O; ++o) y[n * O + o] += bv[o];
        }
        std::vector<Var> parents = b.valid() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
        Var out = push(std::move(y), parents);
        attach(out, [out, x, w, b, N, I, O](Tape& t) {
            const auto& g = t.grad_of(out);
            if (t.wants(x))
                kern::gemm_nn(N, I, O, g.data.data(), t.val(w).data.data(), t.grad_buf(x).data.data(), true);
            if (t.wants(w))
                kern::gemm_tn(O, I, N, g.data.data(), t.val(x).data.data(), t.grad_buf(w).data.data(), true);
            if (b.valid() && t.wants(b)) {
                TensorT<T>& gb = t.grad_buf(b);
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t o = 0; o < O; ++o) gb[o] += g[n * O + o];
            }
        });
        return quantized(out);
    }

    // batched matmul: a (N,M,K) x b (N,K,P); trans_b treats b as (N,P,K)
    Var bmm(Var a, Var b, bool trans_b = false) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.ndim() != 3 || bv.ndim() != 3 || av.dim(0) != bv.dim(0))
            throw std::runtime_error("bmm: expected matching 3-d tensors");
        int64_t N = av.dim(0), M = av.dim(1), K = av.dim(2);
        int64_t P = trans_b ? bv.dim(1) : bv.dim(2);
        int64_t Kb = trans_b ? bv.dim(2) : bv.dim(1);
        if (K != Kb) throw std::runtime_error("bmm: inner dim mismatch");
        TensorT<T> y({av.dim(0), av.dim(1), static_cast<int>(P)});
        if (trans_b)
            kern::bmm_nt(N, M, K, P, av.data.data(), bv.data.data(), y.data.data());
        else
            kern::bmm_nn(N, M, K, P, av.data.data(), bv.data.data(), y.data.data());
        Var out = push(std::move(y), {a, b});
        attach(out, [out, a, b, trans_b, N, M, K, P](Tape& t) {
            const auto& g = t.grad_of(out);
            const auto& av2 = t.val(a);
            const auto& bv2 = t.val(b);
            if (!trans_b) {
                // dA = g * B^T ; dB = A^T * g
                if (t.wants(a))
                    kern::bmm_nt(N, M, P, K, g.data.data(), bv2.data.data(), t.grad_buf(a).data.data(), true);
                if (t.wants(b))
                    kern::bmm_tn(N, K, M, P, av2.data.data(), g.data.data(), t.grad_buf(b).data.data(), true);
            } else {
                // y = A * B^T: dA = g * B ; dB = g^T * A
                if (t.wants(a))
                    kern::bmm_nn(N, M, P, K, g.data.data(), bv2.data.data(), t.grad_buf(a).data.data(), true);
                if (t.wants(b))
                    kern::bmm_tn(N, P, M, K, g.data.data(), av2.data.data(), t.grad_buf(b).data.data(), true);
            }
        });
        return quantized(out);
    }

    // ---- conv ----

    Var conv2d(Var x, Var w, int stride, int pad) {
        kern::Conv2dShape s = kern::conv2d_shape(val(x).shape, val(w).shape, stride, pad);
        TensorT<T> y({static_cast<int>(s.B), static_cast<int>(s.Co), static_cast<int>(s.Ho),
                      static_cast<int>(s.Wo)});
        kern::conv2d_forward(val(x).data.data(), val(w).data.data(), y.data.data(), s);
        Var out = push(std::move(y), {x, w});
        attach(out, [out, x, w, s](Tape& t) {
            const auto& g = t.grad_of(out);
            if (t.wants(x)) kern::conv2d_dinput(g.data.data(), t.val(w).data.data(), t.grad_buf(x).data.data(), s);
            if (t.wants(w)) kern::conv2d_dweight(t.val(x).data.data(), g.data.data(), t.grad_buf(w).data.data(), s);
        });
        return quantized(out);
    }

    Var conv_transpose2d(Var x, Var w, int stride, int pad) {
        kern::Conv2dShape s = kern::conv_transpose2d_shape(val(x).shape, val(w).shape, stride, pad);
        TensorT<T> y({static_cast<int>(s.B), static_cast<int>(s.Ci), static_cast<int>(s.H),
                      static_cast<int>(s.W)});
        kern::conv_transpose2d_forward(val(x).data.data(), val(w).data.data(), y.data.data(), s);
        Var out = push(std::move(y), {x, w});
        attach(out, [out, x, w, s](Tape& t) {
            const auto& g = t.grad_of(out);
            if (t.wants(x))
                kern::conv_transpose2d_dinput(g.data.data(), t.val(w).data.data(), t.grad_buf(x).data.data(), s);
            if (t.wants(w))
                kern::conv_transpose2d_dweight(t.val(x).data.data(), g.data.data(), t.grad_buf(w).data.data(), s);
        });
        return quantized(out);
    }

    // y = x + bias with bias broadcast per channel (NCHW)
    Var bias_channel(Var x, Var b) {
        const auto& xv = val(x);
        if (xv.ndim() != 4 || val(b).numel() != xv.dim(1))
            throw std::runtime_error("bias_channel: shape mismatch");
        TensorT<T> y = xv;
        int64_t B = xv.dim(0), C = xv.dim(1), HW = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
        kern::bias_channel_forward(y.data.data(), val(b).data.data(), B, C, HW);
        Var out = push(std::move(y), {x, b});
        attach(out, [out, x, b, B, C, HW](Tape& t) {
            const auto& g = t.grad_of(out);
            if (t.wants(x)) t.accum_scaled(x, g, T(1));
            if (t.wants(b)) kern::bias_channel_grad(g.data.data(), t.grad_buf(b).data.data(), B, C, HW);
        });
        return out;
    }

    // x (B,C,H,W) + s (B,C) broadcast over H,W
    Var add_sample_channel(Var x, Var s) {
        const auto& xv = val(x);
        const auto& sv = val(s);
        if (xv.ndim() != 4 || sv.ndim() != 2 || sv.dim(0) != xv.dim(0) || sv.dim(1) != xv.dim(1))
            throw std::runtime_error("add_sample_channel: shape mismatch");
        TensorT<T> y = xv;
        int64_t B = xv.dim(0), C = xv.dim(1), HW = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
        kern::sample_channel_bias_forward(y.data.data(), sv.data.data(), B, C, HW);
        Var out = push(std::move(y), {x, s});
        attach(out, [out, x, s, B, C, HW](Tape& t) {
            const auto& g = t.grad_of(out);
            if (t.wants(x)) t.accum_scaled(x, g, T(1));
            if (t.wants(s)) kern::sample_channel_bias_grad(g.data.data(), t.grad_buf(s).data.data(), B, C, HW);
        });
        return out;
    }

    Var group_norm(Var x, Var gamma, Var beta, int groups, T eps) {
        const auto& xv = val(x);
        if (xv.ndim() != 4) throw std::runtime_error("group_norm: expected NCHW");
        int64_t B = xv.dim(0), C = xv.dim(1), HW = static_cast<int64_t>(xv.dim(2)) * xv.dim(3);
        if (C % groups != 0) throw std::runtime_error("group_norm: channels not divisible by groups");
        if (val(gamma).numel() != C || val(beta).numel() != C)
            throw std::runtime_error("group_norm: affine param shape mismatch");
        TensorT<T> y(xv.shape);
        auto mean = std::make_shared<TensorT<T>>(std::vector<int>{static_cast<int>(B), groups});
        auto rstd = std::make_shared<TensorT<T>>(std::vector<int>{static_cast<int>(B), groups});
        kern::group_norm_forward(xv.data.data(), val(gamma).data.data(), val(beta).data.data(), y.data.data(),
                                 mean->data.data(), rstd->data.data(), B, C, HW, groups, eps);
        Var out = push(std::move(y), {x, gamma, beta});
        attach(out, [out, x, gamma, beta, groups, B, C, HW, mean, rstd](Tape& t) {
            const auto& g = t.grad_of(out);
            const auto& xv2 = t.val(x);
            if (t.wants(x))
                kern::group_norm_dx(xv2.data.data(), g.data.data(), t.val(gamma).data.data(),
                                    mean->data.data(), rstd->data.data(), t.grad_buf(x).data.data(), B, C,
                                    HW, groups);
            if (t.wants(gamma) || t.wants(beta))
                kern::group_norm_dparams(xv2.data.data(), g.data.data(), mean->data.data(), rstd->data.data(),
                                         t.grad_buf(gamma).data.data(), t.grad_buf(beta).data.data(), B, C,
                                         HW, groups);
        });
        return out;
    }

    // softmax over the last dim, any leading shape
    Var softmax_lastdim(Var x) {
        const auto& xv = val(x);
        int64_t C = xv.dim(xv.ndim() - 1);
        int64_t R = xv.numel() / C;
        TensorT<T> y(xv.shape);
        kern::softmax_rows_forward(xv.data.data(), y.data.data(), R, C);
        Var out = push(std::move(y), {x});
        attach(out, [out, x, R, C](Tape& t) {
            if (!t.wants(x)) return;
            kern::softmax_rows_backward(t.val(out).data.data(), t.grad_of(out).data.data(),
                                        t.grad_buf(x).data.data(), R, C);
        });
        return out;
    }

    // ---- shape ops ----

    Var reshape(Var a, std::vector<int> shape) {
        TensorT<T> y = val(a).reshaped(std::move(shape));
        Var out = push(std::move(y), {a});
        attach(out, [out, a](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        });
        return out;
    }

    // (B, C, L) -> (B, L, C)
    Var transpose_12(Var a) {
        const auto& x = val(a);
        if (x.ndim() != 3) throw std::runtime_error("transpose_12: expected 3-d");
        int64_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
        TensorT<T> y({x.dim(0), x.dim(2), x.dim(1)});
#pragma omp parallel for schedule(static) if (kern::parallel_enabled() && B > 1)
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t l = 0; l < L; ++l) y[(b * L + l) * C + c] = x[(b * C + c) * L + l];
        Var out = push(std::move(y), {a});
        attach(out, [out, a, B, C, L](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t l = 0; l < L; ++l) ga[(b * C + c) * L + l] += g[(b * L + l) * C + c];
        });
        return out;
    }

    // (B, L, C) -> (B*H, L, C/H) with H heads
    Var split_heads(Var a, int heads) {
        const auto& x = val(a);
        if (x.ndim() != 3 || x.dim(2) % heads != 0)
            throw std::runtime_error("split_heads: embedding dim not divisible by heads");
        int64_t B = x.dim(0), L = x.dim(1), C = x.dim(2), D = C / heads;
        TensorT<T> y({static_cast<int>(B * heads), static_cast<int>(L), static_cast<int>(D)});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t h = 0; h < heads; ++h)
                for (int64_t l = 0; l < L; ++l)
                    for (int64_t d = 0; d < D; ++d)
                        y[((b * heads + h) * L + l) * D + d] = x[(b * L + l) * C + h * D + d];
        Var out = push(std::move(y), {a});
        attach(out, [out, a, B, L, C, D, heads](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t h = 0; h < heads; ++h)
                    for (int64_t l = 0; l < L; ++l)
                        for (int64_t d = 0; d < D; ++d)
                            ga[(b * L + l) * C + h * D + d] += g[((b * heads + h) * L + l) * D + d];
        });
        return out;
    }

    // inverse of split_heads
    Var merge_heads(Var a, int heads) {
        const auto& x = val(a);
        if (x.ndim() != 3 || x.dim(0) % heads != 0) throw std::runtime_error("merge_heads: bad batch dim");
        int64_t BH = x.dim(0), L = x.dim(1), D = x.dim(2), B = BH / heads, C = D * heads;
        TensorT<T> y({static_cast<int>(B), static_cast<int>(L), static_cast<int>(C)});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t h = 0; h < heads; ++h)
                for (int64_t l = 0; l < L; ++l)
                    for (int64_t d = 0; d < D; ++d)
                        y[(b * L + l) * C + h * D + d] = x[((b * heads + h) * L + l) * D + d];
        Var out = push(std::move(y), {a});
        attach(out, [out, a, B, L, C, D, heads](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t h = 0; h < heads; ++h)
                    for (int64_t l = 0; l < L; ++l)
                        for (int64_t d = 0; d < D; ++d)
                            ga[((b * heads + h) * L + l) * D + d] += g[(b * L + l) * C + h * D + d];
        });
        return out;
    }

    Var concat_channels(Var a, Var b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        if (av.ndim() != 4 || bv.ndim() != 4 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) ||
            av.dim(3) != bv.dim(3))
            throw std::runtime_error("concat_channels: shape mismatch");
        int64_t B = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1),
                HW = static_cast<int64_t>(av.dim(2)) * av.dim(3);
        TensorT<T> y({av.dim(0), static_cast<int>(Ca + Cb), av.dim(2), av.dim(3)});
        for (int64_t n = 0; n < B; ++n) {
            std::copy_n(av.data.data() + n * Ca * HW, Ca * HW, y.data.data() + n * (Ca + Cb) * HW);
            std::copy_n(bv.data.data() + n * Cb * HW, Cb * HW, y.data.data() + (n * (Ca + Cb) + Ca) * HW);
        }
        Var out = push(std::move(y), {a, b});
        attach(out, [out, a, b, B, Ca, Cb, HW](Tape& t) {
            const auto& g = t.grad_of(out);
            if (t.wants(a)) {
                TensorT<T>& ga = t.grad_buf(a);
                for (int64_t n = 0; n < B; ++n)
                    for (int64_t i = 0; i < Ca * HW; ++i)
                        ga[n * Ca * HW + i] += g[n * (Ca + Cb) * HW + i];
            }
            if (t.wants(b)) {
                TensorT<T>& gb = t.grad_buf(b);
                for (int64_t n = 0; n < B; ++n)
                    for (int64_t i = 0; i < Cb * HW; ++i)
                        gb[n * Cb * HW + i] += g[(n * (Ca + Cb) + Ca) * HW + i];
            }
        });
        return out;
    }

    // channels [c0, c1) of NCHW
    Var slice_channels(Var a, int c0, int c1) {
        const auto& x = val(a);
        if (x.ndim() != 4 || c0 < 0 || c1 > x.dim(1) || c0 >= c1)
            throw std::runtime_error("slice_channels: bad range");
        int64_t B = x.dim(0), C = x.dim(1), HW = static_cast<int64_t>(x.dim(2)) * x.dim(3);
        int64_t Cs = c1 - c0;
        TensorT<T> y({x.dim(0), static_cast<int>(Cs), x.dim(2), x.dim(3)});
        for (int64_t n = 0; n < B; ++n)
            std::copy_n(x.data.data() + (n * C + c0) * HW, Cs * HW, y.data.data() + n * Cs * HW);
        Var out = push(std::move(y), {a});
        attach(out, [out, a, B, C, HW, c0, Cs](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t n = 0; n < B; ++n)
                for (int64_t i = 0; i < Cs * HW; ++i) ga[(n * C + c0) * HW + i] += g[n * Cs * HW + i];
        });
        return out;
    }

    // zero padding on the bottom/right of the spatial dims (NCHW)
    Var pad2d(Var a, int pad_h, int pad_w) {
        const auto& x = val(a);
        if (x.ndim() != 4) throw std::runtime_error("pad2d: expected NCHW");
        if (pad_h == 0 && pad_w == 0) return a;
        int64_t BC = static_cast<int64_t>(x.dim(0)) * x.dim(1), H = x.dim(2), W = x.dim(3);
        int64_t H2 = H + pad_h, W2 = W + pad_w;
        TensorT<T> y({x.dim(0), x.dim(1), static_cast<int>(H2), static_cast<int>(W2)});
        for (int64_t bc = 0; bc < BC; ++bc)
            for (int64_t h = 0; h < H; ++h)
                std::copy_n(x.data.data() + (bc * H + h) * W, W, y.data.data() + (bc * H2 + h) * W2);
        Var out = push(std::move(y), {a});
        attach(out, [out, a, BC, H, W, H2, W2](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t bc = 0; bc < BC; ++bc)
                for (int64_t h = 0; h < H; ++h)
                    for (int64_t w = 0; w < W; ++w)
                        ga[(bc * H + h) * W + w] += g[(bc * H2 + h) * W2 + w];
        });
        return out;
    }

    // keep the top-left (H2, W2) window
    Var crop2d(Var a, int H2, int W2) {
        const auto& x = val(a);
        if (x.ndim() != 4 || H2 > x.dim(2) || W2 > x.dim(3)) throw std::runtime_error("crop2d: bad target");
        if (H2 == x.dim(2) && W2 == x.dim(3)) return a;
        int64_t BC = static_cast<int64_t>(x.dim(0)) * x.dim(1), H = x.dim(2), W = x.dim(3);
        TensorT<T> y({x.dim(0), x.dim(1), H2, W2});
        for (int64_t bc = 0; bc < BC; ++bc)
            for (int64_t h = 0; h < H2; ++h)
                std::copy_n(x.data.data() + (bc * H + h) * W, W2, y.data.data() + (bc * H2 + h) * W2);
        Var out = push(std::move(y), {a});
        attach(out, [out, a, BC, H, W, H2, W2](Tape& t) {
            if (!t.wants(a)) return;
            const auto& g = t.grad_of(out);
            TensorT<T>& ga = t.grad_buf(a);
            for (int64_t bc = 0; bc < BC; ++bc)
                for (int64_t h = 0; h < H2; ++h)
                    for (int64_t w = 0; w < W2; ++w)
                        ga[(bc * H + h) * W + w] += g[(bc * H2 + h) * W2 + w];
        });
        return out;
    }

    // ---- plumbing used by op closures ----

    bool wants(Var v) const { return node(v).requires_grad; }
    const TensorT<T>& grad_of(Var v) const { return node(v).grad; }

    TensorT<T>& grad_buf(Var v) {
        Node& n = node(v);
        if (n.grad.numel() == 0) n.grad = TensorT<T>::zeros(n.value.shape);
        return n.grad;
    }

    void accum(Var v, const T* src, int sign) {
        if (!wants(v)) return;
        TensorT<T>& g = grad_buf(v);
        int64_t n = g.numel();
        if (sign > 0)
            for (int64_t i = 0; i < n; ++i) g[i] += src[i];
        else
            for (int64_t i = 0; i < n; ++i) g[i] -= src[i];
    }

    void accum_scaled(Var v, const TensorT<T>& src, T s) {
        if (!wants(v)) return;
        TensorT<T>& g = grad_buf(v);
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += s * src[i];
    }

    void accum_mul(Var v, const TensorT<T>& g, const TensorT<T>& other) {
        if (!wants(v)) return;
        TensorT<T>& dst = grad_buf(v);
        for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += g[i] * other[i];
    }

private:
    struct Node {
        TensorT<T> value;
        TensorT<T> grad;
        std::function<void(Tape&)> backward;
        bool requires_grad = false;
        bool is_leaf = false;
    };

    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
    bool f16_activations_ = false;

    Node& node(Var v) {
        if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
            throw std::runtime_error("tape: variable does not belong to this tape (detached graph?)");
        return nodes_[static_cast<size_t>(v.id)];
    }
    const Node& node(Var v) const {
        if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
            throw std::runtime_error("tape: variable does not belong to this tape (detached graph?)");
        return nodes_[static_cast<size_t>(v.id)];
    }

    Var push(TensorT<T> value, const std::vector<Var>& parents) {
        Node n;
        n.value = std::move(value);
        for (Var p : parents)
            if (p.valid() && node(p).requires_grad) n.requires_grad = true;
        n.requires_grad = n.requires_grad && grad_enabled_;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }

    template <class F>
    void attach(Var v, F f) {
        Node& n = node(v);
        if (n.requires_grad && grad_enabled_) n.backward = std::move(f);
    }

    // reduced-precision activation storage: round op outputs through binary16
    Var quantized(Var v) {
        if (!f16_activations_) return v;
        Node& n = node(v);
        kern::quantize_f16(n.value.data.data(), n.value.numel());
        n.value.dtype = DType::f16;
        return v;
    }

    void check_same(Var a, Var b, const char* op) const {
        if (!val(a).same_shape(val(b)))
            throw std::runtime_error(std::string(op) + ": shape mismatch " + val(a).shape_str() + " vs " +
                                     val(b).shape_str());
    }
};

template <class T>
using Var = typename Tape<T>::Var;

// softmax(q k^T / sqrt(d)) v with multi-head split; q (B,Lq,D), k/v (B,Lk,D)
template <class T>
typename Tape<T>::Var attention(Tape<T>& t, typename Tape<T>::Var q, typename Tape<T>::Var k,
                                typename Tape<T>::Var v, int heads) {
    const auto& qs = t.val(q);
    const auto& ks = t.val(k);
    if (qs.ndim() != 3 || ks.ndim() != 3 || t.val(v).ndim() != 3)
        throw std::runtime_error("attention: expected (B, L, D) tensors");
    if (qs.dim(2) != ks.dim(2) || ks.shape != t.val(v).shape)
        throw std::runtime_error("attention: dimension mismatch");
    if (qs.dim(2) % heads != 0) throw std::runtime_error("attention: dim not divisible by heads");
    int d_head = qs.dim(2) / heads;
    auto qh = t.split_heads(q, heads);
    auto kh = t.split_heads(k, heads);
    auto vh = t.split_heads(v, heads);
    auto scores = t.scale(t.bmm(qh, kh, /*trans_b=*/true), static_cast<T>(1.0 / std::sqrt(double(d_head))));
    auto probs = t.softmax_lastdim(scores);
    auto ctx = t.bmm(probs, vh, /*trans_b=*/false);
    return t.merge_heads(ctx, heads);
}

}  // namespace zdcfm
