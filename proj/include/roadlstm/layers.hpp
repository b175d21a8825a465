#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "roadlstm/errors.hpp"
#include "roadlstm/parallel.hpp"
#include "roadlstm/rng.hpp"
#include "roadlstm/tensor.hpp"

namespace roadlstm {

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

enum class Padding { Same, Valid };

struct ConvSpec {
    int kernel_w = 1;
    int kernel_h = 1;
    int in_channels = 1;
    int out_channels = 1;
    int stride_w = 1;
    int stride_h = 1;
    Padding padding = Padding::Same;
};

// Same padding: out = ceil(in / stride), regardless of kernel size.
// Valid padding: out = floor((in - kernel) / stride) + 1.
inline Shape3 conv_output_shape(const Shape3& in, const ConvSpec& spec) {
    check_shape(in, "conv_output_shape");
    if (spec.kernel_w < 1 || spec.kernel_h < 1 || spec.stride_w < 1 || spec.stride_h < 1 ||
        spec.in_channels < 1 || spec.out_channels < 1) {
        throw ShapeError("conv_output_shape: kernel/stride/channel settings must be >= 1");
    }
    if (in.d != spec.in_channels) {
        throw ShapeError("conv_output_shape: input has " + std::to_string(in.d) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
    }
    if (spec.padding == Padding::Same) {
        return Shape3{(in.w + spec.stride_w - 1) / spec.stride_w,
                      (in.h + spec.stride_h - 1) / spec.stride_h, spec.out_channels};
    }
    if (spec.kernel_w > in.w || spec.kernel_h > in.h) {
        throw GeometryError("conv_output_shape: valid padding with kernel " +
                            std::to_string(spec.kernel_w) + "x" + std::to_string(spec.kernel_h) +
                            " larger than input " + std::to_string(in.w) + "x" +
                            std::to_string(in.h));
    }
    return Shape3{(in.w - spec.kernel_w) / spec.stride_w + 1,
                  (in.h - spec.kernel_h) / spec.stride_h + 1, spec.out_channels};
}

// Left/top zero-padding for same mode. Total padding is
// max((out-1)*stride + kernel - in, 0) with the smaller half on the left/top.
struct ConvPad {
    int left = 0;
    int top = 0;
};

inline ConvPad conv_padding(const Shape3& in, const ConvSpec& spec, const Shape3& out) {
    if (spec.padding == Padding::Valid) return {};
    int total_w = (out.w - 1) * spec.stride_w + spec.kernel_w - in.w;
    int total_h = (out.h - 1) * spec.stride_h + spec.kernel_h - in.h;
    if (total_w < 0) total_w = 0;
    if (total_h < 0) total_h = 0;
    return ConvPad{total_w / 2, total_h / 2};
}

// Weights laid out as [ky][kx][ci][co], co innermost. Bias per out channel.
struct ConvLayer {
    ConvSpec spec;
    std::vector<double> weights;
    std::vector<double> bias;

    static ConvLayer init(const ConvSpec& spec, Rng& rng) {
        ConvLayer l;
        l.spec = spec;
        const std::int64_t n =
            static_cast<std::int64_t>(spec.kernel_h) * spec.kernel_w * spec.in_channels * spec.out_channels;
        const double fan_in = static_cast<double>(spec.kernel_h) * spec.kernel_w * spec.in_channels;
        const double fan_out = static_cast<double>(spec.kernel_h) * spec.kernel_w * spec.out_channels;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        l.weights.resize(static_cast<std::size_t>(n));
        for (double& w : l.weights) w = rng.uniform(-limit, limit);
        l.bias.assign(static_cast<std::size_t>(spec.out_channels), 0.0);
        return l;
    }

    std::int64_t weight_index(int ky, int kx, int ci, int co) const {
        return ((static_cast<std::int64_t>(ky) * spec.kernel_w + kx) * spec.in_channels + ci) *
                   spec.out_channels + co;
    }
};

// Optional multiply-accumulate instrumentation. Padded tap positions are
// counted too, so for same padding the total equals
// out_w*out_h*kernel_w*kernel_h*in_channels*out_channels.
inline Tensor3 conv_forward(const ConvLayer& layer, const Tensor3& in,
                            std::uint64_t* mac_counter = nullptr) {
    const ConvSpec& spec = layer.spec;
    if (in.shape().d != spec.in_channels) {
        throw ShapeError("conv_forward: input channels " + std::to_string(in.shape().d) +
                         " != spec in_channels " + std::to_string(spec.in_channels));
    }
    const Shape3 out_shape = conv_output_shape(in.shape(), spec);
    const ConvPad pad = conv_padding(in.shape(), spec, out_shape);
    Tensor3 out(out_shape);

    const int w1 = in.shape().w, h1 = in.shape().h, d1 = spec.in_channels;
    const int w2 = out_shape.w, h2 = out_shape.h, dk = spec.out_channels;
    const int kw = spec.kernel_w, kh = spec.kernel_h;
    const int sw = spec.stride_w, sh = spec.stride_h;
    const double* wts = layer.weights.data();
    const double* bias = layer.bias.data();

    auto run_row = [&](int y2, double* acc) {
        double* out_row = out.row_ptr(y2);
        for (int x2 = 0; x2 < w2; ++x2) {
            std::memcpy(acc, bias, sizeof(double) * static_cast<std::size_t>(dk));
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = y2 * sh - pad.top + ky;
                if (iy < 0 || iy >= h1) continue;
                const double* in_row = in.row_ptr(iy);
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = x2 * sw - pad.left + kx;
                    if (ix < 0 || ix >= w1) continue;
                    const double* __restrict__ in_px = in_row + static_cast<std::int64_t>(ix) * d1;
                    const double* wtap = wts + ((static_cast<std::int64_t>(ky) * kw + kx) * d1) * dk;
                    for (int ci = 0; ci < d1; ++ci) {
                        const double a = in_px[ci];
                        const double* __restrict__ wrow = wtap + static_cast<std::int64_t>(ci) * dk;
                        double* __restrict__ ap = acc;
                        for (int co = 0; co < dk; ++co) ap[co] += a * wrow[co];
                    }
                }
            }
            std::memcpy(out_row + static_cast<std::int64_t>(x2) * dk, acc,
                        sizeof(double) * static_cast<std::size_t>(dk));
        }
    };

    if (mac_counter) {
        // Instrumented path runs sequentially; every enumerated tap position
        // is counted, including those falling in the zero padding.
        std::vector<double> acc(static_cast<std::size_t>(dk));
        for (int y2 = 0; y2 < h2; ++y2) {
            *mac_counter += static_cast<std::uint64_t>(kh) * kw * w2 * d1 * dk;
            run_row(y2, acc.data());
        }
    } else {
        parallel_for(h2, [&](int y2) {
            std::vector<double> acc(static_cast<std::size_t>(dk));
            run_row(y2, acc.data());
        });
    }
    return out;
}

struct ConvGrads {
    Tensor3 grad_in;
    std::vector<double> grad_weights;
    std::vector<double> grad_bias;
};

inline ConvGrads conv_backward(const ConvLayer& layer, const Tensor3& in, const Tensor3& grad_out) {
    const ConvSpec& spec = layer.spec;
    const Shape3 out_shape = conv_output_shape(in.shape(), spec);
    if (!(grad_out.shape() == out_shape)) {
        throw ShapeError("conv_backward: grad_out shape " + grad_out.shape().str() +
                         " != expected " + out_shape.str());
    }
    const ConvPad pad = conv_padding(in.shape(), spec, out_shape);
    const int w1 = in.shape().w, h1 = in.shape().h, d1 = spec.in_channels;
    const int w2 = out_shape.w, h2 = out_shape.h, dk = spec.out_channels;
    const int kw = spec.kernel_w, kh = spec.kernel_h;
    const int sw = spec.stride_w, sh = spec.stride_h;

    ConvGrads g;
    g.grad_in = Tensor3::zeros(in.shape());
    g.grad_weights.assign(layer.weights.size(), 0.0);
    g.grad_bias.assign(layer.bias.size(), 0.0);

    // Valid output-column range per kx tap (input column in bounds).
    auto x2_range = [&](int kx, int& lo, int& hi) {
        const int shift = pad.left - kx;
        lo = shift > 0 ? (shift + sw - 1) / sw : 0;
        hi = (w1 - 1 + shift) / sw;
        if (hi > w2 - 1) hi = w2 - 1;
    };

    // Kernel transposed to [ky][kx][co][ci] so the input-gradient inner loop
    // runs over contiguous ci lanes.
    std::vector<double> wt(layer.weights.size());
    for (int ky = 0; ky < kh; ++ky)
        for (int kx = 0; kx < kw; ++kx)
            for (int ci = 0; ci < d1; ++ci)
                for (int co = 0; co < dk; ++co)
                    wt[((static_cast<std::int64_t>(ky) * kw + kx) * dk + co) * d1 + ci] =
                        layer.weights[layer.weight_index(ky, kx, ci, co)];

    // Input gradient, gathered per input row (disjoint writes across rows).
    parallel_for(h1, [&](int y1) {
        double* gi_row = g.grad_in.row_ptr(y1);
        for (int ky = 0; ky < kh; ++ky) {
            const int y2_num = y1 + pad.top - ky;
            if (y2_num < 0 || y2_num % sh != 0) continue;
            const int y2 = y2_num / sh;
            if (y2 >= h2) continue;
            const double* go_row = grad_out.row_ptr(y2);
            for (int kx = 0; kx < kw; ++kx) {
                int lo, hi;
                x2_range(kx, lo, hi);
                const double* wtap =
                    wt.data() + ((static_cast<std::int64_t>(ky) * kw + kx) * dk) * d1;
                for (int x2 = lo; x2 <= hi; ++x2) {
                    const double* go_px = go_row + static_cast<std::int64_t>(x2) * dk;
                    double* __restrict__ gi_px =
                        gi_row + static_cast<std::int64_t>(x2 * sw - pad.left + kx) * d1;
                    for (int co = 0; co < dk; ++co) {
                        const double a = go_px[co];
                        const double* __restrict__ wrow = wtap + static_cast<std::int64_t>(co) * d1;
                        for (int ci = 0; ci < d1; ++ci) gi_px[ci] += a * wrow[ci];
                    }
                }
            }
        }
    });

    // Weight/bias gradients: per-chunk partials over output rows, combined in
    // chunk order so the reduction tree is independent of the thread count.
    const auto chunks = reduce_chunks(h2);
    const int nchunks = static_cast<int>(chunks.size());
    std::vector<std::vector<double>> pgw(static_cast<std::size_t>(nchunks));
    std::vector<std::vector<double>> pgb(static_cast<std::size_t>(nchunks));
    parallel_for(nchunks, [&](int c) {
        auto& gw = pgw[static_cast<std::size_t>(c)];
        auto& gb = pgb[static_cast<std::size_t>(c)];
        gw.assign(layer.weights.size(), 0.0);
        gb.assign(layer.bias.size(), 0.0);
        for (int y2 = chunks[static_cast<std::size_t>(c)].begin;
             y2 < chunks[static_cast<std::size_t>(c)].end; ++y2) {
            const double* go_row = grad_out.row_ptr(y2);
            for (int x2 = 0; x2 < w2; ++x2) {
                const double* go_px = go_row + static_cast<std::int64_t>(x2) * dk;
                for (int co = 0; co < dk; ++co) gb[static_cast<std::size_t>(co)] += go_px[co];
            }
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = y2 * sh - pad.top + ky;
                if (iy < 0 || iy >= h1) continue;
                const double* in_row = in.row_ptr(iy);
                for (int kx = 0; kx < kw; ++kx) {
                    double* gwtap =
                        gw.data() + ((static_cast<std::int64_t>(ky) * kw + kx) * d1) * dk;
                    int lo, hi;
                    x2_range(kx, lo, hi);
                    for (int x2 = lo; x2 <= hi; ++x2) {
                        const int ix = x2 * sw - pad.left + kx;
                        const double* in_px = in_row + static_cast<std::int64_t>(ix) * d1;
                        const double* __restrict__ go_px =
                            go_row + static_cast<std::int64_t>(x2) * dk;
                        for (int ci = 0; ci < d1; ++ci) {
                            const double a = in_px[ci];
                            double* __restrict__ gwrow = gwtap + static_cast<std::int64_t>(ci) * dk;
                            for (int co = 0; co < dk; ++co) gwrow[co] += a * go_px[co];
                        }
                    }
                }
            }
        }
    });
    for (int c = 0; c < nchunks; ++c) {
        for (std::size_t i = 0; i < g.grad_weights.size(); ++i)
            g.grad_weights[i] += pgw[static_cast<std::size_t>(c)][i];
        for (std::size_t i = 0; i < g.grad_bias.size(); ++i)
            g.grad_bias[i] += pgb[static_cast<std::size_t>(c)][i];
    }
    return g;
}

// ---------------------------------------------------------------------------
// Row-distributed LSTM
// ---------------------------------------------------------------------------

// One weight set shared by all rows of the feature map. Each row is scanned
// left to right as an independent sequence; hidden and cell state start at
// zero for every row. Gate order is fixed: input, forget, cell candidate,
// output.
//
// Memory layout (also the serialized order): W indexed [ci][j] with
// j in [0, 4*hidden), U indexed [ch][j], bias b[j]. Slots within j:
// [0,dl) input gate, [dl,2dl) forget, [2dl,3dl) candidate, [3dl,4dl) output.
struct DistLstmLayer {
    int input_dim = 0;
    int hidden_dim = 0;
    std::vector<double> W;  // input_dim x 4*hidden_dim
    std::vector<double> U;  // hidden_dim x 4*hidden_dim
    std::vector<double> b;  // 4*hidden_dim

    static DistLstmLayer init(int input_dim, int hidden_dim, Rng& rng) {
        DistLstmLayer l;
        l.input_dim = input_dim;
        l.hidden_dim = hidden_dim;
        const int g4 = 4 * hidden_dim;
        const double wl = std::sqrt(6.0 / (input_dim + g4));
        const double ul = std::sqrt(6.0 / (hidden_dim + g4));
        l.W.resize(static_cast<std::size_t>(input_dim) * g4);
        l.U.resize(static_cast<std::size_t>(hidden_dim) * g4);
        for (double& v : l.W) v = rng.uniform(-wl, wl);
        for (double& v : l.U) v = rng.uniform(-ul, ul);
        l.b.assign(static_cast<std::size_t>(g4), 0.0);
        // Forget-gate bias 1 keeps long rows trainable from the start.
        for (int k = 0; k < hidden_dim; ++k) l.b[static_cast<std::size_t>(hidden_dim + k)] = 1.0;
        return l;
    }
};

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Per-element forward state kept for backpropagation through time.
struct LstmCache {
    int w = 0, h = 0, dl = 0;
    std::vector<double> gate_i, gate_f, gate_g, gate_o, cell, tanh_cell;

    void resize(int w_, int h_, int dl_) {
        w = w_;
        h = h_;
        dl = dl_;
        const std::size_t n = static_cast<std::size_t>(w) * h * dl;
        gate_i.resize(n);
        gate_f.resize(n);
        gate_g.resize(n);
        gate_o.resize(n);
        cell.resize(n);
        tanh_cell.resize(n);
    }
    std::int64_t idx(int x, int y) const {
        return (static_cast<std::int64_t>(y) * w + x) * dl;
    }
};

inline Tensor3 dist_lstm_forward(const DistLstmLayer& layer, const Tensor3& in,
                                 LstmCache* cache = nullptr) {
    if (in.shape().d != layer.input_dim) {
        throw ShapeError("dist_lstm_forward: input channels " + std::to_string(in.shape().d) +
                         " != input_dim " + std::to_string(layer.input_dim));
    }
    const int w = in.shape().w, h = in.shape().h;
    const int din = layer.input_dim, dl = layer.hidden_dim, g4 = 4 * dl;
    Tensor3 out(Shape3{w, h, dl});
    if (cache) cache->resize(w, h, dl);

    parallel_for(h, [&](int y) {
        std::vector<double> z(static_cast<std::size_t>(g4));
        std::vector<double> hstate(static_cast<std::size_t>(dl), 0.0);
        std::vector<double> cstate(static_cast<std::size_t>(dl), 0.0);
        const double* in_row = in.row_ptr(y);
        double* out_row = out.row_ptr(y);
        for (int x = 0; x < w; ++x) {
            const double* x_t = in_row + static_cast<std::int64_t>(x) * din;
            std::memcpy(z.data(), layer.b.data(), sizeof(double) * static_cast<std::size_t>(g4));
            for (int ci = 0; ci < din; ++ci) {
                const double a = x_t[ci];
                const double* __restrict__ wrow = layer.W.data() + static_cast<std::int64_t>(ci) * g4;
                double* __restrict__ zp = z.data();
                for (int j = 0; j < g4; ++j) zp[j] += a * wrow[j];
            }
            for (int ch = 0; ch < dl; ++ch) {
                const double a = hstate[static_cast<std::size_t>(ch)];
                const double* __restrict__ urow = layer.U.data() + static_cast<std::int64_t>(ch) * g4;
                double* __restrict__ zp = z.data();
                for (int j = 0; j < g4; ++j) zp[j] += a * urow[j];
            }
            double* out_px = out_row + static_cast<std::int64_t>(x) * dl;
            const std::int64_t cbase = cache ? cache->idx(x, y) : 0;
            for (int k = 0; k < dl; ++k) {
                const double gi = sigmoid(z[static_cast<std::size_t>(k)]);
                const double gf = sigmoid(z[static_cast<std::size_t>(dl + k)]);
                const double gg = std::tanh(z[static_cast<std::size_t>(2 * dl + k)]);
                const double go = sigmoid(z[static_cast<std::size_t>(3 * dl + k)]);
                const double c_new = gf * cstate[static_cast<std::size_t>(k)] + gi * gg;
                const double tc = std::tanh(c_new);
                cstate[static_cast<std::size_t>(k)] = c_new;
                hstate[static_cast<std::size_t>(k)] = go * tc;
                out_px[k] = hstate[static_cast<std::size_t>(k)];
                if (cache) {
                    cache->gate_i[static_cast<std::size_t>(cbase + k)] = gi;
                    cache->gate_f[static_cast<std::size_t>(cbase + k)] = gf;
                    cache->gate_g[static_cast<std::size_t>(cbase + k)] = gg;
                    cache->gate_o[static_cast<std::size_t>(cbase + k)] = go;
                    cache->cell[static_cast<std::size_t>(cbase + k)] = c_new;
                    cache->tanh_cell[static_cast<std::size_t>(cbase + k)] = tc;
                }
            }
        }
    });
    return out;
}

struct LstmGrads {
    Tensor3 grad_in;
    std::vector<double> grad_W;
    std::vector<double> grad_U;
    std::vector<double> grad_b;
};

inline LstmGrads dist_lstm_backward(const DistLstmLayer& layer, const Tensor3& in,
                                    const LstmCache& cache, const Tensor3& grad_out) {
    const int w = in.shape().w, h = in.shape().h;
    const int din = layer.input_dim, dl = layer.hidden_dim, g4 = 4 * dl;
    if (in.shape().d != din || cache.w != w || cache.h != h || cache.dl != dl) {
        throw ShapeError("dist_lstm_backward: cache/input geometry mismatch");
    }
    if (!(grad_out.shape() == Shape3{w, h, dl})) {
        throw ShapeError("dist_lstm_backward: grad_out shape " + grad_out.shape().str() +
                         " != expected " + Shape3{w, h, dl}.str());
    }

    LstmGrads g;
    g.grad_in = Tensor3::zeros(in.shape());
    g.grad_W.assign(layer.W.size(), 0.0);
    g.grad_U.assign(layer.U.size(), 0.0);
    g.grad_b.assign(layer.b.size(), 0.0);

    const auto chunks = reduce_chunks(h);
    const int nchunks = static_cast<int>(chunks.size());
    std::vector<std::vector<double>> pW(static_cast<std::size_t>(nchunks));
    std::vector<std::vector<double>> pU(static_cast<std::size_t>(nchunks));
    std::vector<std::vector<double>> pb(static_cast<std::size_t>(nchunks));

    parallel_for(nchunks, [&](int c) {
        auto& gW = pW[static_cast<std::size_t>(c)];
        auto& gU = pU[static_cast<std::size_t>(c)];
        auto& gb = pb[static_cast<std::size_t>(c)];
        gW.assign(layer.W.size(), 0.0);
        gU.assign(layer.U.size(), 0.0);
        gb.assign(layer.b.size(), 0.0);
        std::vector<double> dz(static_cast<std::size_t>(g4));
        std::vector<double> dh_next(static_cast<std::size_t>(dl));
        std::vector<double> dc_next(static_cast<std::size_t>(dl));
        for (int y = chunks[static_cast<std::size_t>(c)].begin;
             y < chunks[static_cast<std::size_t>(c)].end; ++y) {
            std::fill(dh_next.begin(), dh_next.end(), 0.0);
            std::fill(dc_next.begin(), dc_next.end(), 0.0);
            const double* in_row = in.row_ptr(y);
            const double* go_row = grad_out.row_ptr(y);
            double* gi_row = g.grad_in.row_ptr(y);
            for (int x = w - 1; x >= 0; --x) {
                const std::int64_t cb = cache.idx(x, y);
                const std::int64_t cbp = x > 0 ? cache.idx(x - 1, y) : 0;
                const double* go_px = go_row + static_cast<std::int64_t>(x) * dl;
                for (int k = 0; k < dl; ++k) {
                    const double gi = cache.gate_i[static_cast<std::size_t>(cb + k)];
                    const double gf = cache.gate_f[static_cast<std::size_t>(cb + k)];
                    const double gg = cache.gate_g[static_cast<std::size_t>(cb + k)];
                    const double go = cache.gate_o[static_cast<std::size_t>(cb + k)];
                    const double tc = cache.tanh_cell[static_cast<std::size_t>(cb + k)];
                    const double c_prev =
                        x > 0 ? cache.cell[static_cast<std::size_t>(cbp + k)] : 0.0;
                    const double dh = go_px[k] + dh_next[static_cast<std::size_t>(k)];
                    const double dc = dh * go * (1.0 - tc * tc) + dc_next[static_cast<std::size_t>(k)];
                    dz[static_cast<std::size_t>(k)] = dc * gg * gi * (1.0 - gi);
                    dz[static_cast<std::size_t>(dl + k)] = dc * c_prev * gf * (1.0 - gf);
                    dz[static_cast<std::size_t>(2 * dl + k)] = dc * gi * (1.0 - gg * gg);
                    dz[static_cast<std::size_t>(3 * dl + k)] = dh * tc * go * (1.0 - go);
                    dc_next[static_cast<std::size_t>(k)] = dc * gf;
                }
                const double* x_t = in_row + static_cast<std::int64_t>(x) * din;
                double* gi_px = gi_row + static_cast<std::int64_t>(x) * din;
                for (int ci = 0; ci < din; ++ci) {
                    const double a = x_t[ci];
                    double* __restrict__ gWrow = gW.data() + static_cast<std::int64_t>(ci) * g4;
                    const double* __restrict__ dzp = dz.data();
                    for (int j = 0; j < g4; ++j) gWrow[j] += a * dzp[j];
                    const double* wrow = layer.W.data() + static_cast<std::int64_t>(ci) * g4;
                    double acc = 0.0;
                    for (int j = 0; j < g4; ++j) acc += wrow[j] * dzp[j];
                    gi_px[ci] = acc;
                }
                for (int ch = 0; ch < dl; ++ch) {
                    const double h_prev =
                        x > 0 ? cache.gate_o[static_cast<std::size_t>(cbp + ch)] *
                                    cache.tanh_cell[static_cast<std::size_t>(cbp + ch)]
                              : 0.0;
                    double* __restrict__ gUrow = gU.data() + static_cast<std::int64_t>(ch) * g4;
                    const double* __restrict__ dzp = dz.data();
                    for (int j = 0; j < g4; ++j) gUrow[j] += h_prev * dzp[j];
                    const double* urow = layer.U.data() + static_cast<std::int64_t>(ch) * g4;
                    double acc = 0.0;
                    for (int j = 0; j < g4; ++j) acc += urow[j] * dzp[j];
                    dh_next[static_cast<std::size_t>(ch)] = acc;
                }
                for (int j = 0; j < g4; ++j) gb[static_cast<std::size_t>(j)] += dz[static_cast<std::size_t>(j)];
            }
        }
    });
    for (int c = 0; c < nchunks; ++c) {
        for (std::size_t i = 0; i < g.grad_W.size(); ++i) g.grad_W[i] += pW[static_cast<std::size_t>(c)][i];
        for (std::size_t i = 0; i < g.grad_U.size(); ++i) g.grad_U[i] += pU[static_cast<std::size_t>(c)][i];
        for (std::size_t i = 0; i < g.grad_b.size(); ++i) g.grad_b[i] += pb[static_cast<std::size_t>(c)][i];
    }
    return g;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { Relu, Sigmoid, Linear };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Linear: return "linear";
    }
    return "?";
}

inline Tensor3 activation_forward(Activation kind, const Tensor3& in) {
    Tensor3 out(in.shape());
    const double* p = in.data();
    double* q = out.data();
    const std::int64_t n = in.size();
    switch (kind) {
        case Activation::Relu:
            for (std::int64_t i = 0; i < n; ++i) q[i] = p[i] > 0.0 ? p[i] : 0.0;
            break;
        case Activation::Sigmoid:
            for (std::int64_t i = 0; i < n; ++i) q[i] = sigmoid(p[i]);
            break;
        case Activation::Linear:
            for (std::int64_t i = 0; i < n; ++i) q[i] = p[i];
            break;
    }
    return out;
}

// Derivative at the relu kink (x == 0) is taken as 0.
inline Tensor3 activation_backward(Activation kind, const Tensor3& in, const Tensor3& grad_out) {
    if (!(in.shape() == grad_out.shape())) {
        throw ShapeError("activation_backward: shape mismatch");
    }
    Tensor3 out(in.shape());
    const double* p = in.data();
    const double* g = grad_out.data();
    double* q = out.data();
    const std::int64_t n = in.size();
    switch (kind) {
        case Activation::Relu:
            for (std::int64_t i = 0; i < n; ++i) q[i] = p[i] > 0.0 ? g[i] : 0.0;
            break;
        case Activation::Sigmoid:
            for (std::int64_t i = 0; i < n; ++i) {
                const double s = sigmoid(p[i]);
                q[i] = s * (1.0 - s) * g[i];
            }
            break;
        case Activation::Linear:
            for (std::int64_t i = 0; i < n; ++i) q[i] = g[i];
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Horizontal up-sampling (transposed 1-D convolution, kernel = factor,
// stride = factor). Input w x 1 x 1 -> output (factor*w) x 1 x 1, where input
// element x_i contributes x_i * kernel[j] + bias to output position
// factor*i + j.
// ---------------------------------------------------------------------------

struct UpsampleLayer {
    int factor = 8;
    std::vector<double> kernel;  // factor weights
    double bias = 0.0;

    // Replication start: kernel of ones, zero bias. Keeps the initial output
    // identical to the input row instead of an arbitrary rescale.
    static UpsampleLayer init(int factor) {
        UpsampleLayer l;
        l.factor = factor;
        l.kernel.assign(static_cast<std::size_t>(factor), 1.0);
        l.bias = 0.0;
        return l;
    }
};

inline Shape3 upsample_output_shape(const Shape3& in, const UpsampleLayer& layer) {
    if (in.h != 1 || in.d != 1) {
        throw ShapeError("upsample: input must be w x 1 x 1, got " + in.str());
    }
    return Shape3{in.w * layer.factor, 1, 1};
}

inline Tensor3 upsample_forward(const UpsampleLayer& layer, const Tensor3& in) {
    const Shape3 os = upsample_output_shape(in.shape(), layer);
    Tensor3 out(os);
    const double* p = in.data();
    double* q = out.data();
    for (int i = 0; i < in.shape().w; ++i)
        for (int j = 0; j < layer.factor; ++j)
            q[static_cast<std::int64_t>(i) * layer.factor + j] =
                p[i] * layer.kernel[static_cast<std::size_t>(j)] + layer.bias;
    return out;
}

struct UpsampleGrads {
    Tensor3 grad_in;
    std::vector<double> grad_kernel;
    double grad_bias = 0.0;
};

inline UpsampleGrads upsample_backward(const UpsampleLayer& layer, const Tensor3& in,
                                       const Tensor3& grad_out) {
    const Shape3 os = upsample_output_shape(in.shape(), layer);
    if (!(grad_out.shape() == os)) {
        throw ShapeError("upsample_backward: grad_out shape " + grad_out.shape().str() +
                         " != expected " + os.str());
    }
    UpsampleGrads g;
    g.grad_in = Tensor3::zeros(in.shape());
    g.grad_kernel.assign(layer.kernel.size(), 0.0);
    const double* p = in.data();
    const double* go = grad_out.data();
    double* gi = g.grad_in.data();
    for (int i = 0; i < in.shape().w; ++i) {
        double acc = 0.0;
        for (int j = 0; j < layer.factor; ++j) {
            const double gv = go[static_cast<std::int64_t>(i) * layer.factor + j];
            g.grad_kernel[static_cast<std::size_t>(j)] += p[i] * gv;
            g.grad_bias += gv;
            acc += layer.kernel[static_cast<std::size_t>(j)] * gv;
        }
        gi[i] = acc;
    }
    return g;
}

}  // namespace roadlstm
