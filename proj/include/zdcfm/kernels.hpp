#pragma once

// Production compute kernels. Hot loops are OpenMP-parallel over independent
// outputs; every reduction is chunked with a fixed chunk size and combined in
// chunk order, so results are bit-identical for any thread count. A naive
// serial reference lives in ref_kernels.hpp and is used by the tests and the
// kernel benchmark.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "zdcfm/tensor.hpp"

namespace zdcfm::kern {

inline std::atomic<bool> g_parallel{true};

inline void set_parallel(bool on) { g_parallel.store(on); }
inline bool parallel_enabled() {
#ifdef _OPENMP
    return g_parallel.load();
#else
    return false;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

constexpr int64_t kReduceChunk = 8192;

// ---- reductions (deterministic, double accumulators) ----

template <class T>
double sum_all(const T* x, int64_t n) {
    if (n <= kReduceChunk) {
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i) s += static_cast<double>(x[i]);
        return s;
    }
    int64_t chunks = (n + kReduceChunk - 1) / kReduceChunk;
    std::vector<double> partial(static_cast<size_t>(chunks), 0.0);
#pragma omp parallel for schedule(static) if (parallel_enabled())
    for (int64_t c = 0; c < chunks; ++c) {
        int64_t b = c * kReduceChunk;
        int64_t e = std::min(n, b + kReduceChunk);
        double s = 0.0;
        for (int64_t i = b; i < e; ++i) s += static_cast<double>(x[i]);
        partial[static_cast<size_t>(c)] = s;
    }
    double s = 0.0;
    for (double p : partial) s += p;  // fixed combine order
    return s;
}

template <class T>
double sum_sq_diff(const T* a, const T* b, int64_t n) {
    int64_t chunks = (n + kReduceChunk - 1) / kReduceChunk;
    std::vector<double> partial(static_cast<size_t>(chunks), 0.0);
#pragma omp parallel for schedule(static) if (parallel_enabled() && chunks > 1)
    for (int64_t c = 0; c < chunks; ++c) {
        int64_t lo = c * kReduceChunk;
        int64_t hi = std::min(n, lo + kReduceChunk);
        double s = 0.0;
        for (int64_t i = lo; i < hi; ++i) {
            double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
            s += d * d;
        }
        partial[static_cast<size_t>(c)] = s;
    }
    double s = 0.0;
    for (double p : partial) s += p;
    return s;
}

template <class T>
double sum_sq(const T* x, int64_t n) {
    int64_t chunks = (n + kReduceChunk - 1) / kReduceChunk;
    std::vector<double> partial(static_cast<size_t>(chunks), 0.0);
#pragma omp parallel for schedule(static) if (parallel_enabled() && chunks > 1)
    for (int64_t c = 0; c < chunks; ++c) {
        int64_t lo = c * kReduceChunk;
        int64_t hi = std::min(n, lo + kReduceChunk);
        double s = 0.0;
        for (int64_t i = lo; i < hi; ++i) s += static_cast<double>(x[i]) * static_cast<double>(x[i]);
        partial[static_cast<size_t>(c)] = s;
    }
    double s = 0.0;
    for (double p : partial) s += p;
    return s;
}

// ---- elementwise ----

template <class T, class F>
void map1(const T* x, T* y, int64_t n, F f) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && n > 4096)
    for (int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
}

template <class T, class F>
void map2(const T* a, const T* b, T* y, int64_t n, F f) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && n > 4096)
    for (int64_t i = 0; i < n; ++i) y[i] = f(a[i], b[i]);
}

template <class T>
void quantize_f16(T* x, int64_t n) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && n > 4096)
    for (int64_t i = 0; i < n; ++i) x[i] = static_cast<T>(round_f16(static_cast<float>(x[i])));
}

// ---- gemm (row-major) ----
// nn: C[M,N] (+)= A[M,K] * B[K,N]
// nt: C[M,N] (+)= A[M,K] * B[N,K]^T
// tn: C[M,N] (+)= A[K,M]^T * B[K,N]
// The ikj / dot orders below keep the inner loop contiguous for both inputs.

template <class T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
    if (!accumulate) std::fill(C, C + M * N, T(0));
    for (int64_t i = 0; i < M; ++i) {
        T* ci = C + i * N;
        const T* ai = A + i * K;
        for (int64_t k = 0; k < K; ++k) {
            T a = ai[k];
            const T* bk = B + k * N;
            for (int64_t j = 0; j < N; ++j) ci[j] += a * bk[j];
        }
    }
}

template <class T>
void gemm_nt(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
    for (int64_t i = 0; i < M; ++i) {
        const T* ai = A + i * K;
        T* ci = C + i * N;
        for (int64_t j = 0; j < N; ++j) {
            const T* bj = B + j * K;
            T s = 0;
            for (int64_t k = 0; k < K; ++k) s += ai[k] * bj[k];
            ci[j] = accumulate ? ci[j] + s : s;
        }
    }
}

template <class T>
void gemm_tn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
    if (!accumulate) std::fill(C, C + M * N, T(0));
    for (int64_t k = 0; k < K; ++k) {
        const T* ak = A + k * M;
        const T* bk = B + k * N;
        for (int64_t i = 0; i < M; ++i) {
            T a = ak[i];
            T* ci = C + i * N;
            for (int64_t j = 0; j < N; ++j) ci[j] += a * bk[j];
        }
    }
}

// Parallel gemm for the flat (batch x features) linear layers; splits rows of A.
template <class T>
void gemm_nt_rows(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && M > 1)
    for (int64_t i = 0; i < M; ++i) gemm_nt<T>(1, N, K, A + i * K, B, C + i * N, false);
}

// ---- conv2d (NCHW, cross-correlation) ----

struct Conv2dShape {
    int64_t B, Ci, H, W, Co, KH, KW, stride, pad, Ho, Wo;
};

inline Conv2dShape conv2d_shape(const std::vector<int>& x, const std::vector<int>& w, int stride, int pad) {
    if (x.size() != 4 || w.size() != 4) throw std::runtime_error("conv2d: expected 4-d input and kernel");
    if (x[1] != w[1]) throw std::runtime_error("conv2d: channel mismatch");
    Conv2dShape s{x[0], x[1], x[2], x[3], w[0], w[2], w[3], stride, pad, 0, 0};
    int64_t ho = (s.H + 2 * s.pad - s.KH) / s.stride + 1;
    int64_t wo = (s.W + 2 * s.pad - s.KW) / s.stride + 1;
    if (s.H + 2 * s.pad < s.KH || s.W + 2 * s.pad < s.KW)
        throw std::runtime_error("conv2d: kernel larger than padded input");
    s.Ho = ho;
    s.Wo = wo;
    return s;
}

// cols layout: (Ci*KH*KW) x (Ho*Wo)
template <class T>
void im2col(const T* x, const Conv2dShape& s, T* cols) {
    int64_t HW = s.Ho * s.Wo;
    for (int64_t ci = 0; ci < s.Ci; ++ci) {
        for (int64_t kh = 0; kh < s.KH; ++kh) {
            for (int64_t kw = 0; kw < s.KW; ++kw) {
                T* row = cols + ((ci * s.KH + kh) * s.KW + kw) * HW;
                for (int64_t oh = 0; oh < s.Ho; ++oh) {
                    int64_t ih = oh * s.stride - s.pad + kh;
                    T* dst = row + oh * s.Wo;
                    if (ih < 0 || ih >= s.H) {
                        std::fill(dst, dst + s.Wo, T(0));
                        continue;
                    }
                    const T* src = x + (ci * s.H + ih) * s.W;
                    for (int64_t ow = 0; ow < s.Wo; ++ow) {
                        int64_t iw = ow * s.stride - s.pad + kw;
                        dst[ow] = (iw >= 0 && iw < s.W) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

template <class T>
void col2im(const T* cols, const Conv2dShape& s, T* x, bool accumulate = false) {
    if (!accumulate) std::fill(x, x + s.Ci * s.H * s.W, T(0));
    int64_t HW = s.Ho * s.Wo;
    for (int64_t ci = 0; ci < s.Ci; ++ci) {
        for (int64_t kh = 0; kh < s.KH; ++kh) {
            for (int64_t kw = 0; kw < s.KW; ++kw) {
                const T* row = cols + ((ci * s.KH + kh) * s.KW + kw) * HW;
                for (int64_t oh = 0; oh < s.Ho; ++oh) {
                    int64_t ih = oh * s.stride - s.pad + kh;
                    if (ih < 0 || ih >= s.H) continue;
                    T* dst = x + (ci * s.H + ih) * s.W;
                    const T* src = row + oh * s.Wo;
                    for (int64_t ow = 0; ow < s.Wo; ++ow) {
                        int64_t iw = ow * s.stride - s.pad + kw;
                        if (iw >= 0 && iw < s.W) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

template <class T>
std::vector<T>& conv_scratch(int64_t n) {
    thread_local std::vector<T> buf;
    if (static_cast<int64_t>(buf.size()) < n) buf.resize(static_cast<size_t>(n));
    return buf;
}

// y = conv(x, w); per-image im2col + gemm, parallel over the batch
template <class T>
void conv2d_forward(const T* x, const T* w, T* y, const Conv2dShape& s, bool accumulate = false) {
    int64_t ckk = s.Ci * s.KH * s.KW;
    int64_t HW = s.Ho * s.Wo;
#pragma omp parallel for schedule(static) if (parallel_enabled() && s.B > 1)
    for (int64_t b = 0; b < s.B; ++b) {
        auto& cols = conv_scratch<T>(ckk * HW);
        im2col(x + b * s.Ci * s.H * s.W, s, cols.data());
        gemm_nn(s.Co, HW, ckk, w, cols.data(), y + b * s.Co * HW, accumulate);
    }
}

// accumulates into dx
template <class T>
void conv2d_dinput(const T* dy, const T* w, T* dx, const Conv2dShape& s) {
    int64_t ckk = s.Ci * s.KH * s.KW;
    int64_t HW = s.Ho * s.Wo;
#pragma omp parallel for schedule(static) if (parallel_enabled() && s.B > 1)
    for (int64_t b = 0; b < s.B; ++b) {
        auto& cols = conv_scratch<T>(ckk * HW);
        gemm_tn(ckk, HW, s.Co, w, dy + b * s.Co * HW, cols.data(), false);
        col2im(cols.data(), s, dx + b * s.Ci * s.H * s.W, true);
    }
}

// accumulates into dw; fixed-size batch chunks combined in chunk order
template <class T>
void conv2d_dweight(const T* x, const T* dy, T* dw, const Conv2dShape& s) {
    int64_t ckk = s.Ci * s.KH * s.KW;
    int64_t HW = s.Ho * s.Wo;
    int64_t wsize = s.Co * ckk;
    constexpr int64_t kBatchChunk = 8;
    int64_t chunks = (s.B + kBatchChunk - 1) / kBatchChunk;
    std::vector<T> partial(static_cast<size_t>(chunks * wsize), T(0));
#pragma omp parallel for schedule(static) if (parallel_enabled() && chunks > 1)
    for (int64_t c = 0; c < chunks; ++c) {
        T* pw = partial.data() + c * wsize;
        auto& cols = conv_scratch<T>(ckk * HW);
        int64_t lo = c * kBatchChunk, hi = std::min(s.B, lo + kBatchChunk);
        for (int64_t b = lo; b < hi; ++b) {
            im2col(x + b * s.Ci * s.H * s.W, s, cols.data());
            gemm_nt(s.Co, ckk, HW, dy + b * s.Co * HW, cols.data(), pw, true);
        }
    }
    for (int64_t c = 0; c < chunks; ++c) {
        const T* pw = partial.data() + c * wsize;
        for (int64_t i = 0; i < wsize; ++i) dw[i] += pw[i];
    }
}

// Transposed conv: forward is the adjoint of conv2d_forward. Weight layout
// (Cin, Cout, KH, KW); "s" describes the *underlying* conv whose input is the
// transposed-conv output: s.Ci = Cout, s.Co = Cin, (s.H, s.W) = output dims,
// (s.Ho, s.Wo) = input dims.
inline Conv2dShape conv_transpose2d_shape(const std::vector<int>& x, const std::vector<int>& w, int stride,
                                          int pad) {
    if (x.size() != 4 || w.size() != 4) throw std::runtime_error("conv_transpose2d: expected 4-d tensors");
    if (x[1] != w[0]) throw std::runtime_error("conv_transpose2d: channel mismatch");
    Conv2dShape s{};
    s.B = x[0];
    s.Co = x[1];           // channels of the given input
    s.Ci = w[1];           // channels of the produced output
    s.Ho = x[2];
    s.Wo = x[3];
    s.KH = w[2];
    s.KW = w[3];
    s.stride = stride;
    s.pad = pad;
    s.H = (x[2] - 1) * stride - 2 * pad + w[2];
    s.W = (x[3] - 1) * stride - 2 * pad + w[3];
    if (s.H <= 0 || s.W <= 0) throw std::runtime_error("conv_transpose2d: nonpositive output dims");
    return s;
}

template <class T>
void conv_transpose2d_forward(const T* x, const T* w, T* y, const Conv2dShape& s, bool accumulate = false) {
    int64_t ckk = s.Ci * s.KH * s.KW;
    int64_t HW = s.Ho * s.Wo;
#pragma omp parallel for schedule(static) if (parallel_enabled() && s.B > 1)
    for (int64_t b = 0; b < s.B; ++b) {
        auto& cols = conv_scratch<T>(ckk * HW);
        gemm_tn(ckk, HW, s.Co, w, x + b * s.Co * HW, cols.data(), false);
        col2im(cols.data(), s, y + b * s.Ci * s.H * s.W, accumulate);
    }
}

// accumulates into dx
template <class T>
void conv_transpose2d_dinput(const T* dz, const T* w, T* dx, const Conv2dShape& s) {
    conv2d_forward(dz, w, dx, s, true);  // adjoint of the adjoint
}

template <class T>
void conv_transpose2d_dweight(const T* x, const T* dz, T* dw, const Conv2dShape& s) {
    conv2d_dweight(dz, x, dw, s);  // roles swap: dz is the conv input, x the conv output grad
}

// ---- per-channel / per-sample bias ----

template <class T>
void bias_channel_forward(T* y, const T* bias, int64_t B, int64_t C, int64_t HW) {
#pragma omp parallel for schedule(static) collapse(2) if (parallel_enabled() && B * C > 1)
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            T* row = y + (b * C + c) * HW;
            T v = bias[c];
            for (int64_t i = 0; i < HW; ++i) row[i] += v;
        }
}

template <class T>
void bias_channel_grad(const T* dy, T* db, int64_t B, int64_t C, int64_t HW) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && C > 1)
    for (int64_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (int64_t b = 0; b < B; ++b) {
            const T* row = dy + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) s += static_cast<double>(row[i]);
        }
        db[c] += static_cast<T>(s);
    }
}

// x (B,C,HW) += s (B,C) broadcast over HW  (time-embedding injection)
template <class T>
void sample_channel_bias_forward(T* y, const T* sb, int64_t B, int64_t C, int64_t HW) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && B * C > 1)
    for (int64_t bc = 0; bc < B * C; ++bc) {
        T* row = y + bc * HW;
        T v = sb[bc];
        for (int64_t i = 0; i < HW; ++i) row[i] += v;
    }
}

template <class T>
void sample_channel_bias_grad(const T* dy, T* dsb, int64_t B, int64_t C, int64_t HW) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && B * C > 1)
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* row = dy + bc * HW;
        double s = 0.0;
        for (int64_t i = 0; i < HW; ++i) s += static_cast<double>(row[i]);
        dsb[bc] += static_cast<T>(s);
    }
}

// ---- group norm ----

template <class T>
void group_norm_forward(const T* x, const T* gamma, const T* beta, T* y, T* save_mean, T* save_rstd,
                        int64_t B, int64_t C, int64_t HW, int64_t groups, T eps) {
    int64_t cg = C / groups;
    int64_t gsize = cg * HW;
#pragma omp parallel for schedule(static) collapse(2) if (parallel_enabled() && B * groups > 1)
    for (int64_t b = 0; b < B; ++b)
        for (int64_t g = 0; g < groups; ++g) {
            const T* xg = x + (b * C + g * cg) * HW;
            double mean = 0.0;
            for (int64_t i = 0; i < gsize; ++i) mean += static_cast<double>(xg[i]);
            mean /= static_cast<double>(gsize);
            double var = 0.0;
            for (int64_t i = 0; i < gsize; ++i) {
                double d = static_cast<double>(xg[i]) - mean;
                var += d * d;
            }
            var /= static_cast<double>(gsize);
            double rstd = 1.0 / std::sqrt(var + static_cast<double>(eps));
            save_mean[b * groups + g] = static_cast<T>(mean);
            save_rstd[b * groups + g] = static_cast<T>(rstd);
            T* yg = y + (b * C + g * cg) * HW;
            for (int64_t c = 0; c < cg; ++c) {
                double ga = static_cast<double>(gamma[g * cg + c]);
                double be = static_cast<double>(beta[g * cg + c]);
                const T* xr = xg + c * HW;
                T* yr = yg + c * HW;
                for (int64_t i = 0; i < HW; ++i)
                    yr[i] = static_cast<T>((static_cast<double>(xr[i]) - mean) * rstd * ga + be);
            }
        }
}

template <class T>
void group_norm_dx(const T* x, const T* dy, const T* gamma, const T* save_mean, const T* save_rstd, T* dx,
                   int64_t B, int64_t C, int64_t HW, int64_t groups) {
    int64_t cg = C / groups;
    int64_t gsize = cg * HW;
#pragma omp parallel for schedule(static) collapse(2) if (parallel_enabled() && B * groups > 1)
    for (int64_t b = 0; b < B; ++b)
        for (int64_t g = 0; g < groups; ++g) {
            const T* xg = x + (b * C + g * cg) * HW;
            const T* dyg = dy + (b * C + g * cg) * HW;
            double mean = static_cast<double>(save_mean[b * groups + g]);
            double rstd = static_cast<double>(save_rstd[b * groups + g]);
            double s1 = 0.0, s2 = 0.0;  // sum(dy*gamma), sum(dy*gamma*xhat)
            for (int64_t c = 0; c < cg; ++c) {
                double ga = static_cast<double>(gamma[g * cg + c]);
                const T* xr = xg + c * HW;
                const T* dr = dyg + c * HW;
                for (int64_t i = 0; i < HW; ++i) {
                    double dg = static_cast<double>(dr[i]) * ga;
                    s1 += dg;
                    s2 += dg * (static_cast<double>(xr[i]) - mean) * rstd;
                }
            }
            s1 /= static_cast<double>(gsize);
            s2 /= static_cast<double>(gsize);
            T* dxg = dx + (b * C + g * cg) * HW;
            for (int64_t c = 0; c < cg; ++c) {
                double ga = static_cast<double>(gamma[g * cg + c]);
                const T* xr = xg + c * HW;
                const T* dr = dyg + c * HW;
                T* dd = dxg + c * HW;
                for (int64_t i = 0; i < HW; ++i) {
                    double xhat = (static_cast<double>(xr[i]) - mean) * rstd;
                    double dg = static_cast<double>(dr[i]) * ga;
                    dd[i] += static_cast<T>(rstd * (dg - s1 - xhat * s2));
                }
            }
        }
}

template <class T>
void group_norm_dparams(const T* x, const T* dy, const T* save_mean, const T* save_rstd, T* dgamma, T* dbeta,
                        int64_t B, int64_t C, int64_t HW, int64_t groups) {
    int64_t cg = C / groups;
#pragma omp parallel for schedule(static) if (parallel_enabled() && C > 1)
    for (int64_t c = 0; c < C; ++c) {
        int64_t g = c / cg;
        double sg = 0.0, sb = 0.0;
        for (int64_t b = 0; b < B; ++b) {
            double mean = static_cast<double>(save_mean[b * groups + g]);
            double rstd = static_cast<double>(save_rstd[b * groups + g]);
            const T* xr = x + (b * C + c) * HW;
            const T* dr = dy + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
                double xhat = (static_cast<double>(xr[i]) - mean) * rstd;
                sg += static_cast<double>(dr[i]) * xhat;
                sb += static_cast<double>(dr[i]);
            }
        }
        dgamma[c] += static_cast<T>(sg);
        dbeta[c] += static_cast<T>(sb);
    }
}

// ---- softmax over rows of (R, C) ----

template <class T>
void softmax_rows_forward(const T* x, T* y, int64_t R, int64_t C) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && R > 1)
    for (int64_t r = 0; r < R; ++r) {
        const T* xr = x + r * C;
        T* yr = y + r * C;
        double m = static_cast<double>(xr[0]);
        for (int64_t j = 1; j < C; ++j) m = std::max(m, static_cast<double>(xr[j]));
        double s = 0.0;
        for (int64_t j = 0; j < C; ++j) {
            double e = std::exp(static_cast<double>(xr[j]) - m);
            yr[j] = static_cast<T>(e);
            s += e;
        }
        double inv = 1.0 / s;
        for (int64_t j = 0; j < C; ++j) yr[j] = static_cast<T>(static_cast<double>(yr[j]) * inv);
    }
}

template <class T>
void softmax_rows_backward(const T* y, const T* dy, T* dx, int64_t R, int64_t C) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && R > 1)
    for (int64_t r = 0; r < R; ++r) {
        const T* yr = y + r * C;
        const T* dr = dy + r * C;
        T* dd = dx + r * C;
        double dot = 0.0;
        for (int64_t j = 0; j < C; ++j) dot += static_cast<double>(yr[j]) * static_cast<double>(dr[j]);
        for (int64_t j = 0; j < C; ++j)
            dd[j] += static_cast<T>(static_cast<double>(yr[j]) * (static_cast<double>(dr[j]) - dot));
    }
}

// ---- batched matmul over leading dim ----
// A (N, M, K) x B (N, K, P) -> C (N, M, P); _nt treats B as (N, P, K); _tn treats A as (N, K, M).

template <class T>
void bmm_nn(int64_t N, int64_t M, int64_t K, int64_t P, const T* A, const T* B, T* C, bool acc = false) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && N > 1)
    for (int64_t n = 0; n < N; ++n) gemm_nn(M, P, K, A + n * M * K, B + n * K * P, C + n * M * P, acc);
}

template <class T>
void bmm_nt(int64_t N, int64_t M, int64_t K, int64_t P, const T* A, const T* B, T* C, bool acc = false) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && N > 1)
    for (int64_t n = 0; n < N; ++n) gemm_nt(M, P, K, A + n * M * K, B + n * P * K, C + n * M * P, acc);
}

template <class T>
void bmm_tn(int64_t N, int64_t M, int64_t K, int64_t P, const T* A, const T* B, T* C, bool acc = false) {
#pragma omp parallel for schedule(static) if (parallel_enabled() && N > 1)
    for (int64_t n = 0; n < N; ++n) gemm_tn(M, P, K, A + n * K * M, B + n * K * P, C + n * M * P, acc);
}

}  // namespace zdcfm::kern
