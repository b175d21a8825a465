#pragma once

// Test-only reference implementations. These deliberately use the plainest
// possible loops and stay independent of the optimized code paths they check.

#include <cmath>
#include <cstdint>
#include <vector>

#include "roadlstm/layers.hpp"
#include "roadlstm/tensor.hpp"

namespace oracle {

using roadlstm::ConvLayer;
using roadlstm::ConvSpec;
using roadlstm::DistLstmLayer;
using roadlstm::Padding;
using roadlstm::Shape3;
using roadlstm::Tensor3;
using roadlstm::UpsampleLayer;

// Walks patch start positions directly instead of using the closed form:
// same padding places ceil(in/stride) windows anchored at -pad_left, valid
// placement requires the whole kernel inside the input.
inline int count_patch_positions(int in, int kernel, int stride, Padding pad) {
    int count = 0;
    if (pad == Padding::Valid) {
        for (int start = 0; start + kernel <= in; start += stride) ++count;
    } else {
        // one window per stride step while its anchor cell is inside
        for (int anchor = 0; anchor < in; anchor += stride) ++count;
    }
    return count;
}

// Six nested loops, zero padding outside bounds, explicit padding arithmetic.
inline Tensor3 conv_forward(const ConvLayer& layer, const Tensor3& in) {
    const ConvSpec& s = layer.spec;
    const Shape3 os = roadlstm::conv_output_shape(in.shape(), s);
    const roadlstm::ConvPad pad = roadlstm::conv_padding(in.shape(), s, os);
    Tensor3 out(os);
    for (int co = 0; co < s.out_channels; ++co)
        for (int y2 = 0; y2 < os.h; ++y2)
            for (int x2 = 0; x2 < os.w; ++x2) {
                double acc = layer.bias[static_cast<std::size_t>(co)];
                for (int ky = 0; ky < s.kernel_h; ++ky)
                    for (int kx = 0; kx < s.kernel_w; ++kx)
                        for (int ci = 0; ci < s.in_channels; ++ci) {
                            const int iy = y2 * s.stride_h - pad.top + ky;
                            const int ix = x2 * s.stride_w - pad.left + kx;
                            if (ix < 0 || iy < 0 || ix >= in.shape().w || iy >= in.shape().h)
                                continue;
                            acc += layer.weights[static_cast<std::size_t>(
                                       layer.weight_index(ky, kx, ci, co))] *
                                   in.at(ix, iy, ci);
                        }
                out.at(x2, y2, co) = acc;
            }
    return out;
}

// Scalar per-step evaluation of the gate equations, one row at a time.
// W/U are addressed through their logical (4*hidden x input) shape.
inline Tensor3 dist_lstm_forward(const DistLstmLayer& l, const Tensor3& in) {
    const int w = in.shape().w, h = in.shape().h;
    const int din = l.input_dim, dl = l.hidden_dim;
    auto Wl = [&](int j, int ci) { return l.W[static_cast<std::size_t>(ci) * 4 * dl + static_cast<std::size_t>(j)]; };
    auto Ul = [&](int j, int ch) { return l.U[static_cast<std::size_t>(ch) * 4 * dl + static_cast<std::size_t>(j)]; };
    Tensor3 out(Shape3{w, h, dl});
    for (int y = 0; y < h; ++y) {
        std::vector<double> hs(static_cast<std::size_t>(dl), 0.0);
        std::vector<double> cs(static_cast<std::size_t>(dl), 0.0);
        for (int x = 0; x < w; ++x) {
            std::vector<double> z(static_cast<std::size_t>(4 * dl), 0.0);
            for (int j = 0; j < 4 * dl; ++j) {
                double acc = l.b[static_cast<std::size_t>(j)];
                for (int ci = 0; ci < din; ++ci) acc += Wl(j, ci) * in.at(x, y, ci);
                for (int ch = 0; ch < dl; ++ch) acc += Ul(j, ch) * hs[static_cast<std::size_t>(ch)];
                z[static_cast<std::size_t>(j)] = acc;
            }
            for (int k = 0; k < dl; ++k) {
                const double gi = roadlstm::sigmoid(z[static_cast<std::size_t>(k)]);
                const double gf = roadlstm::sigmoid(z[static_cast<std::size_t>(dl + k)]);
                const double gg = std::tanh(z[static_cast<std::size_t>(2 * dl + k)]);
                const double go = roadlstm::sigmoid(z[static_cast<std::size_t>(3 * dl + k)]);
                cs[static_cast<std::size_t>(k)] = gf * cs[static_cast<std::size_t>(k)] + gi * gg;
                hs[static_cast<std::size_t>(k)] = go * std::tanh(cs[static_cast<std::size_t>(k)]);
                out.at(x, y, k) = hs[static_cast<std::size_t>(k)];
            }
        }
    }
    return out;
}

inline Tensor3 upsample_forward(const UpsampleLayer& l, const Tensor3& in) {
    Tensor3 out(Shape3{in.shape().w * l.factor, 1, 1});
    for (int i = 0; i < in.shape().w; ++i)
        for (int j = 0; j < l.factor; ++j)
            out.at(i * l.factor + j, 0, 0) =
                in.at(i, 0, 0) * l.kernel[static_cast<std::size_t>(j)] + l.bias;
    return out;
}

inline double mae(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
}

// Scalar Adam reference for one parameter.
struct ScalarAdam {
    double m = 0.0, v = 0.0;
    std::int64_t t = 0;
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    explicit ScalarAdam(double lr_) : lr(lr_) {}
    double step(double p, double g) {
        t += 1;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
        const double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
        return p - lr * mh / (std::sqrt(vh) + eps);
    }
};

// Relative error as used by the gradient checker.
inline double rel_err(double a, double n) {
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    return std::abs(a - n) / denom;
}

// Max relative error between an analytic gradient map and central
// differences of a functional L(x) = sum(G .* f(x)).
template <class Eval>
double fd_max_rel_error(std::vector<double>& params, const Eval& eval_loss,
                        const std::vector<double>& analytic, double eps = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + eps;
        const double lp = eval_loss();
        params[i] = saved - eps;
        const double lm = eval_loss();
        params[i] = saved;
        const double numeric = (lp - lm) / (2 * eps);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

inline double dot_all(const Tensor3& a, const Tensor3& b) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) acc += a.data()[i] * b.data()[i];
    return acc;
}

}  // namespace oracle
