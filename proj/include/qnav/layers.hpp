#pragma once

// Layer kernels with explicit forward/backward passes. Raw-pointer kernels
// are the hot path used by the network; the Tensor-level wrappers check
// shapes and are what callers outside the network use.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qnav/tensor.hpp"

namespace qnav {

// ---------------------------------------------------------------------------
// Activations

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void relu_inplace(std::span<double> x) {
    for (auto& v : x) v = v > 0.0 ? v : 0.0;
}

/// Mask an upstream gradient by the ReLU output that produced it.
inline void relu_backward_inplace(std::span<const double> relu_out, std::span<double> grad) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (relu_out[i] <= 0.0) grad[i] = 0.0;
}

// ---------------------------------------------------------------------------
// 2-D convolution, valid padding, cross-correlation, HWC layout.
// Kernel layout is (kh, kw, c_in, c_out).

struct ConvGeometry {
    std::size_t h = 0, w = 0, c_in = 0;
    std::size_t kh = 0, kw = 0, c_out = 0;
    std::size_t stride = 1;
    std::size_t oh = 0, ow = 0;

    std::size_t in_size() const { return h * w * c_in; }
    std::size_t out_size() const { return oh * ow * c_out; }
    std::size_t kernel_size() const { return kh * kw * c_in * c_out; }
    Shape out_shape() const { return {oh, ow, c_out}; }
};

inline ConvGeometry conv_geometry(std::size_t h, std::size_t w, std::size_t c_in, std::size_t kh,
                                  std::size_t kw, std::size_t c_out, std::size_t stride) {
    if (stride == 0) throw std::invalid_argument("conv stride must be positive");
    if (kh == 0 || kw == 0 || kh > h || kw > w)
        throw std::invalid_argument("conv kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                                    " does not fit input " + std::to_string(h) + "x" + std::to_string(w));
    return {h, w, c_in, kh, kw, c_out, stride, (h - kh) / stride + 1, (w - kw) / stride + 1};
}

namespace detail {

// Channel counts that are a multiple of four take an explicit 4-wide vector
// path; anything else falls back to the scalar loops.
using v4d = double __attribute__((vector_size(32)));

inline v4d load4(const double* p) {
    v4d v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store4(double* p, v4d v) { std::memcpy(p, &v, sizeof v); }

/// c_out a multiple of 4: B output columns at a time, NV vectors per column.
template <std::size_t NV>
void conv_forward_vec(const ConvGeometry& g, const double* in, const double* kernel, const double* bias,
                      double* out) {
    constexpr std::size_t B = 4, CO = 4 * NV;
    const std::size_t row_len = g.kw * g.c_in;
    const std::size_t step = g.stride * g.c_in;
    v4d b0[NV];
    for (std::size_t v = 0; v < NV; ++v) b0[v] = bias ? load4(bias + 4 * v) : v4d{};
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
        std::size_t ox0 = 0;
        for (; ox0 + B <= g.ow; ox0 += B) {
            v4d acc[B][NV];
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t v = 0; v < NV; ++v) acc[b][v] = b0[v];
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const double* src = in + ((oy * g.stride + ky) * g.w + ox0 * g.stride) * g.c_in;
                const double* krow = kernel + ky * row_len * CO;
                for (std::size_t j = 0; j < row_len; ++j) {
                    v4d k[NV];
                    for (std::size_t v = 0; v < NV; ++v) k[v] = load4(krow + j * CO + 4 * v);
                    for (std::size_t b = 0; b < B; ++b) {
                        const double x = src[b * step + j];
                        for (std::size_t v = 0; v < NV; ++v) acc[b][v] += x * k[v];
                    }
                }
            }
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t v = 0; v < NV; ++v) store4(out + (oy * g.ow + ox0 + b) * CO + 4 * v, acc[b][v]);
        }
        for (; ox0 < g.ow; ++ox0) {
            v4d acc[NV];
            for (std::size_t v = 0; v < NV; ++v) acc[v] = b0[v];
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const double* src = in + ((oy * g.stride + ky) * g.w + ox0 * g.stride) * g.c_in;
                const double* krow = kernel + ky * row_len * CO;
                for (std::size_t j = 0; j < row_len; ++j)
                    for (std::size_t v = 0; v < NV; ++v) acc[v] += src[j] * load4(krow + j * CO + 4 * v);
            }
            for (std::size_t v = 0; v < NV; ++v) store4(out + (oy * g.ow + ox0) * CO + 4 * v, acc[v]);
        }
    }
}

inline void conv_forward_generic(const ConvGeometry& g, const double* in, const double* kernel, const double* bias,
                       double* out) {
    const std::size_t c_out = g.c_out;
    const std::size_t row_len = g.kw * g.c_in;
    std::vector<double> acc(c_out);
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
            for (std::size_t co = 0; co < c_out; ++co) acc[co] = bias ? bias[co] : 0.0;
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const double* src = in + ((oy * g.stride + ky) * g.w + ox * g.stride) * g.c_in;
                const double* krow = kernel + ky * row_len * c_out;
                for (std::size_t j = 0; j < row_len; ++j) {
                    const double x = src[j];
                    const double* kc = krow + j * c_out;
                    for (std::size_t co = 0; co < c_out; ++co) acc[co] += x * kc[co];
                }
            }
            std::copy(acc.begin(), acc.end(), out + (oy * g.ow + ox) * c_out);
        }
    }
}

template <std::size_t NV>
void conv_backward_vec(const ConvGeometry& g, const double* in, const double* kernel, const double* dout,
                       double* dkernel, double* dbias, double* din) {
    constexpr std::size_t B = 4, CO = 4 * NV;
    const std::size_t row_len = g.kw * g.c_in;
    const std::size_t step = g.stride * g.c_in;
    v4d db[NV] = {};
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox0 = 0; ox0 < g.ow; ox0 += B) {
            const std::size_t nb = std::min(B, g.ow - ox0);
            v4d d[B][NV] = {};
            for (std::size_t b = 0; b < nb; ++b)
                for (std::size_t v = 0; v < NV; ++v) {
                    d[b][v] = load4(dout + (oy * g.ow + ox0 + b) * CO + 4 * v);
                    db[v] += d[b][v];
                }
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const std::size_t base = ((oy * g.stride + ky) * g.w + ox0 * g.stride) * g.c_in;
                const double* src = in + base;
                double* dk = dkernel + ky * row_len * CO;
                for (std::size_t j = 0; j < row_len; ++j) {
                    v4d acc[NV];
                    for (std::size_t v = 0; v < NV; ++v) acc[v] = load4(dk + j * CO + 4 * v);
                    for (std::size_t b = 0; b < nb; ++b) {
                        const double x = src[b * step + j];
                        for (std::size_t v = 0; v < NV; ++v) acc[v] += x * d[b][v];
                    }
                    for (std::size_t v = 0; v < NV; ++v) store4(dk + j * CO + 4 * v, acc[v]);
                }
                if (din) {
                    const double* kr = kernel + ky * row_len * CO;
                    for (std::size_t b = 0; b < nb; ++b) {
                        double* di = din + base + b * step;
                        for (std::size_t j = 0; j < row_len; ++j) {
                            v4d t = v4d{};
                            for (std::size_t v = 0; v < NV; ++v) t += load4(kr + j * CO + 4 * v) * d[b][v];
                            di[j] += (t[0] + t[1]) + (t[2] + t[3]);
                        }
                    }
                }
            }
        }
    }
    if (dbias)
        for (std::size_t v = 0; v < NV; ++v)
            for (std::size_t i = 0; i < 4; ++i) dbias[4 * v + i] += db[v][i];
}

inline void conv_backward_generic(const ConvGeometry& g, const double* in, const double* kernel, const double* dout,
                        double* dkernel, double* dbias, double* din) {
    const std::size_t c_out = g.c_out;
    const std::size_t row_len = g.kw * g.c_in;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const double* d = dout + (oy * g.ow + ox) * c_out;
            if (dbias)
                for (std::size_t co = 0; co < c_out; ++co) dbias[co] += d[co];
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const std::size_t base = ((oy * g.stride + ky) * g.w + ox * g.stride) * g.c_in;
                const double* src = in + base;
                double* dk = dkernel + ky * row_len * c_out;
                for (std::size_t j = 0; j < row_len; ++j) {
                    const double x = src[j];
                    double* dkc = dk + j * c_out;
                    for (std::size_t co = 0; co < c_out; ++co) dkc[co] += x * d[co];
                }
                if (din) {
                    const double* kr = kernel + ky * row_len * c_out;
                    double* di = din + base;
                    for (std::size_t j = 0; j < row_len; ++j) {
                        const double* kc = kr + j * c_out;
                        double s = 0.0;
                        for (std::size_t co = 0; co < c_out; ++co) s += kc[co] * d[co];
                        di[j] += s;
                    }
                }
            }
        }
    }
}

}  // namespace detail

inline void conv2d_forward(const ConvGeometry& g, const double* in, const double* kernel,
                           const double* bias, double* out) {
    switch (g.c_out) {
        case 4: return detail::conv_forward_vec<1>(g, in, kernel, bias, out);
        case 8: return detail::conv_forward_vec<2>(g, in, kernel, bias, out);
        default: return detail::conv_forward_generic(g, in, kernel, bias, out);
    }
}

/// Accumulates into dkernel / dbias / din; any of dbias, din may be null.
inline void conv2d_backward(const ConvGeometry& g, const double* in, const double* kernel,
                            const double* dout, double* dkernel, double* dbias, double* din) {
    switch (g.c_out) {
        case 4: return detail::conv_backward_vec<1>(g, in, kernel, dout, dkernel, dbias, din);
        case 8: return detail::conv_backward_vec<2>(g, in, kernel, dout, dkernel, dbias, din);
        default: return detail::conv_backward_generic(g, in, kernel, dout, dkernel, dbias, din);
    }
}

inline ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, std::size_t stride) {
    if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(2) != input.dim(2))
        throw std::invalid_argument("conv2d shape mismatch: input " + shape_string(input.shape()) +
                                    ", kernel " + shape_string(kernel.shape()));
    return conv_geometry(input.dim(0), input.dim(1), input.dim(2), kernel.dim(0), kernel.dim(1),
                         kernel.dim(3), stride);
}

/// Valid cross-correlation of an (h, w, c_in) input with a (kh, kw, c_in, c_out) kernel.
inline Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride) {
    const auto g = conv_geometry(input, kernel, stride);
    Tensor out(g.out_shape());
    conv2d_forward(g, input.data(), kernel.data(), nullptr, out.data());
    return out;
}

struct ConvGrads {
    Tensor input;
    Tensor kernel;
};

inline ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernel, std::size_t stride,
                                 const Tensor& grad_out) {
    const auto g = conv_geometry(input, kernel, stride);
    if (grad_out.shape() != g.out_shape()) throw std::invalid_argument("conv2d grad_out shape mismatch");
    ConvGrads r{Tensor(input.shape()), Tensor(kernel.shape())};
    conv2d_backward(g, input.data(), kernel.data(), grad_out.data(), r.kernel.data(), nullptr,
                    r.input.data());
    return r;
}

// ---------------------------------------------------------------------------
// Dense: out = W in + b with W of shape (out, in).

/// Dot product with independent partial sums so the loop is not bound by
/// add latency. Summation order is fixed, so results are reproducible.
inline double dot(const double* a, const double* b, std::size_t n) {
    double p[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (std::size_t k = 0; k < 8; ++k) p[k] += a[i + k] * b[i + k];
    double s = ((p[0] + p[4]) + (p[1] + p[5])) + ((p[2] + p[6]) + (p[3] + p[7]));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

inline void dense_forward(std::size_t n_out, std::size_t n_in, const double* in, const double* weight,
                          const double* bias, double* out) {
    for (std::size_t o = 0; o < n_out; ++o) out[o] = (bias ? bias[o] : 0.0) + dot(weight + o * n_in, in, n_in);
}

inline void dense_backward(std::size_t n_out, std::size_t n_in, const double* in, const double* weight,
                           const double* dout, double* dweight, double* dbias, double* din) {
    for (std::size_t o = 0; o < n_out; ++o) {
        const double d = dout[o];
        if (d == 0.0) continue;
        if (dbias) dbias[o] += d;
        double* dw = dweight + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) dw[i] += d * in[i];
        if (din) {
            const double* wr = weight + o * n_in;
            for (std::size_t i = 0; i < n_in; ++i) din[i] += d * wr[i];
        }
    }
}

inline void check_dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.rank() != 1 || weight.rank() != 2 || bias.rank() != 1 || weight.dim(1) != input.dim(0) ||
        bias.dim(0) != weight.dim(0))
        throw std::invalid_argument("dense shape mismatch: input " + shape_string(input.shape()) +
                                    ", weight " + shape_string(weight.shape()) + ", bias " +
                                    shape_string(bias.shape()));
}

inline Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    check_dense(input, weight, bias);
    Tensor out({weight.dim(0)});
    dense_forward(weight.dim(0), weight.dim(1), input.data(), weight.data(), bias.data(), out.data());
    return out;
}

struct DenseGrads {
    Tensor input;
    Tensor weight;
    Tensor bias;
};

inline DenseGrads dense_backward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                                 const Tensor& grad_out) {
    check_dense(input, weight, bias);
    if (grad_out.shape() != bias.shape()) throw std::invalid_argument("dense grad_out shape mismatch");
    DenseGrads r{Tensor(input.shape()), Tensor(weight.shape()), Tensor(bias.shape())};
    dense_backward(weight.dim(0), weight.dim(1), input.data(), weight.data(), grad_out.data(),
                   r.weight.data(), r.bias.data(), r.input.data());
    return r;
}

// ---------------------------------------------------------------------------
// LSTM cell. Gate rows are stacked [input, forget, candidate, output], each of
// height H: wx is (4H, in), wh is (4H, H), bias is (4H).

struct LstmState {
    std::vector<double> hidden;
    std::vector<double> cell;

    static LstmState zeros(std::size_t width) { return {std::vector<double>(width), std::vector<double>(width)}; }
    std::size_t width() const { return hidden.size(); }
    friend bool operator==(const LstmState&, const LstmState&) = default;
};

struct LstmWeights {
    const Tensor& wx;
    const Tensor& wh;
    const Tensor& bias;

    std::size_t hidden() const { return wh.dim(1); }
    std::size_t input() const { return wx.dim(1); }

    void check(std::size_t in_width, std::size_t state_width) const {
        const std::size_t h = wh.rank() == 2 ? wh.dim(1) : 0;
        if (wx.rank() != 2 || wh.rank() != 2 || bias.rank() != 1 || wx.dim(0) != 4 * h ||
            wh.dim(0) != 4 * h || bias.dim(0) != 4 * h || wx.dim(1) != in_width || state_width != h)
            throw std::invalid_argument("lstm shape mismatch: wx " + shape_string(wx.shape()) + ", wh " +
                                        shape_string(wh.shape()) + ", input width " +
                                        std::to_string(in_width) + ", state width " +
                                        std::to_string(state_width));
    }
};

/// Everything one step's backward pass needs.
struct LstmStepCache {
    std::vector<double> x, h_prev, c_prev;
    std::vector<double> gates;  // post-activation, 4H, same stacking as the weights
    std::vector<double> c, tanh_c;
};

/// Forward one step; writes h' and c' into `state`. `cache` may be null.
inline void lstm_forward(const LstmWeights& w, const double* x, LstmState& state, LstmStepCache* cache,
                         std::vector<double>& scratch) {
    const std::size_t H = w.hidden(), n_in = w.input();
    scratch.resize(4 * H);
    double* z = scratch.data();
    dense_forward(4 * H, n_in, x, w.wx.data(), w.bias.data(), z);
    const double* wh = w.wh.data();
    const double* h = state.hidden.data();
    if (std::any_of(state.hidden.begin(), state.hidden.end(), [](double v) { return v != 0.0; }))
        for (std::size_t r = 0; r < 4 * H; ++r) z[r] += dot(wh + r * H, h, H);
    if (cache) {
        cache->x.assign(x, x + n_in);
        cache->h_prev = state.hidden;
        cache->c_prev = state.cell;
    }
    for (std::size_t k = 0; k < H; ++k) {
        z[k] = sigmoid(z[k]);
        z[H + k] = sigmoid(z[H + k]);
        z[2 * H + k] = std::tanh(z[2 * H + k]);
        z[3 * H + k] = sigmoid(z[3 * H + k]);
    }
    for (std::size_t k = 0; k < H; ++k) {
        const double c = z[H + k] * state.cell[k] + z[k] * z[2 * H + k];
        state.cell[k] = c;
        state.hidden[k] = z[3 * H + k] * std::tanh(c);
    }
    if (cache) {
        cache->gates.assign(z, z + 4 * H);
        cache->c = state.cell;
        cache->tanh_c.resize(H);
        for (std::size_t k = 0; k < H; ++k) cache->tanh_c[k] = std::tanh(state.cell[k]);
    }
}

struct LstmGradRefs {
    double* wx;
    double* wh;
    double* bias;
};

/// Backward through one step. On entry dh/dc hold the gradient w.r.t. this
/// step's h and c; on exit they hold the gradient w.r.t. the previous h and c.
/// dx (may be null) is overwritten with the input gradient.
inline void lstm_backward(const LstmWeights& w, const LstmStepCache& cache, std::vector<double>& dh,
                          std::vector<double>& dc, const LstmGradRefs& grads, double* dx,
                          std::vector<double>& dz) {
    const std::size_t H = w.hidden(), n_in = w.input();
    dz.resize(4 * H);
    const double* g = cache.gates.data();
    for (std::size_t k = 0; k < H; ++k) {
        const double i = g[k], f = g[H + k], cand = g[2 * H + k], o = g[3 * H + k];
        const double tc = cache.tanh_c[k];
        const double dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
        dz[k] = dct * cand * i * (1.0 - i);
        dz[H + k] = dct * cache.c_prev[k] * f * (1.0 - f);
        dz[2 * H + k] = dct * i * (1.0 - cand * cand);
        dz[3 * H + k] = dh[k] * tc * o * (1.0 - o);
        dc[k] = dct * f;
    }
    if (dx) std::fill(dx, dx + n_in, 0.0);
    dense_backward(4 * H, n_in, cache.x.data(), w.wx.data(), dz.data(), grads.wx, grads.bias, dx);
    std::fill(dh.begin(), dh.end(), 0.0);
    dense_backward(4 * H, H, cache.h_prev.data(), w.wh.data(), dz.data(), grads.wh, nullptr, dh.data());
}

/// Convenience single step on tensors: returns (h', state').
inline std::pair<Tensor, LstmState> lstm_step(const Tensor& input, const LstmState& state, const LstmWeights& w) {
    if (input.rank() != 1) throw std::invalid_argument("lstm input must be a vector");
    if (state.cell.size() != state.hidden.size()) throw std::invalid_argument("lstm state width mismatch");
    w.check(input.dim(0), state.width());
    LstmState next = state;
    std::vector<double> scratch;
    lstm_forward(w, input.data(), next, nullptr, scratch);
    return {Tensor({next.width()}, next.hidden), next};
}

// ---------------------------------------------------------------------------
// Huber loss on a scalar prediction.

struct LossAndGrad {
    double loss = 0.0;
    double grad = 0.0;
};

inline LossAndGrad huber_loss(double pred, double target, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("huber delta must be positive");
    const double e = pred - target;
    const double a = std::abs(e);
    if (a <= delta) return {0.5 * e * e, e};
    return {delta * (a - 0.5 * delta), e > 0 ? delta : -delta};
}

}  // namespace qnav
