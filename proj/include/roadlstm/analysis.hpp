#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "roadlstm/errors.hpp"
#include "roadlstm/network.hpp"

namespace roadlstm {

// Reference cost figures originally published for the road network, kept so
// reports can print computed-vs-reported deltas instead of hiding them.
inline constexpr std::int64_t kReferenceRoadnetParams = 348801;
inline constexpr double kReferenceFlopsPerTensor = 3.45e9;
inline constexpr double kReferenceFlopsPerFrame = 6.9e9;  // two pyramid tensors

// Per-layer cost record. One multiply-accumulate counts as 2 FLOPs.
//
// `flops` uses the closed-form layer formulas:
//   conv:  out_w*out_h*in_ch*kernel_w*kernel_h*out_ch*2  (padded taps included)
//   dlstm: in_w*in_h*8*in_ch*hidden  (gate matmul cost; exact when in_ch==hidden)
//   activation/upsample: one FLOP per output element, kept out of the core
//   subtotal so the matmul-only figure stays available.
// `flops_exact` differs only for the distributed LSTM, where the full gate
// matmul cost is in_w*in_h*2*4*(in_ch+hidden)*hidden.
struct LayerCost {
    std::string name;
    LayerKind kind = LayerKind::Act;
    std::int64_t params = 0;
    std::int64_t flops = 0;
    std::int64_t flops_exact = 0;
    Shape3 out_shape;
    double sensing_width = 1.0;  // average input columns influencing one output cell
    bool core = false;           // conv / distributed LSTM
};

struct CostReport {
    Shape3 input_shape;
    std::vector<LayerCost> layers;
    std::int64_t total_params = 0;
    std::int64_t core_flops = 0;        // conv + LSTM, closed-form
    std::int64_t core_flops_exact = 0;  // conv + LSTM, exact LSTM matmul count
    std::int64_t extra_flops = 0;       // activations + upsample, 1 FLOP/element
};

inline CostReport cost_report(const NetworkSpec& spec_in, const Shape3& input_shape) {
    NetworkSpec spec = spec_in;
    spec.input_shape = input_shape;
    const std::vector<Shape3> shapes = resolve_and_infer(spec);
    CostReport rep;
    rep.input_shape = input_shape;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const Shape3& in = shapes[i];
        const Shape3& out = shapes[i + 1];
        LayerCost c;
        c.name = l.name;
        c.kind = l.kind;
        c.out_shape = out;
        switch (l.kind) {
            case LayerKind::Conv: {
                const std::int64_t kw = l.conv.kernel_w, kh = l.conv.kernel_h;
                const std::int64_t d1 = l.conv.in_channels, dk = l.conv.out_channels;
                c.params = kw * kh * d1 * dk + dk;
                c.flops = static_cast<std::int64_t>(out.w) * out.h * d1 * kw * kh * dk * 2;
                c.flops_exact = c.flops;
                c.sensing_width = static_cast<double>(kw);
                c.core = true;
                break;
            }
            case LayerKind::DistLstm: {
                const std::int64_t d1 = in.d, dl = l.hidden_dim;
                c.params = 4 * (d1 * dl + dl * dl + dl);
                c.flops = static_cast<std::int64_t>(in.w) * in.h * 8 * d1 * dl;
                c.flops_exact = static_cast<std::int64_t>(in.w) * in.h * 2 * 4 * (d1 + dl) * dl;
                c.sensing_width = (in.w + 1) / 2.0;  // mean row-prefix length
                c.core = true;
                break;
            }
            case LayerKind::Act: {
                c.params = 0;
                c.flops = out.elem_count();
                c.flops_exact = c.flops;
                c.sensing_width = 1.0;
                break;
            }
            case LayerKind::Upsample: {
                c.params = l.up_factor + 1;
                c.flops = out.elem_count();
                c.flops_exact = c.flops;
                c.sensing_width = 1.0;
                break;
            }
        }
        rep.total_params += c.params;
        if (c.core) {
            rep.core_flops += c.flops;
            rep.core_flops_exact += c.flops_exact;
        } else {
            rep.extra_flops += c.flops;
        }
        rep.layers.push_back(std::move(c));
    }
    return rep;
}

inline CostReport count_params(const NetworkSpec& spec) {
    return cost_report(spec, spec.input_shape);
}

inline CostReport count_flops(const NetworkSpec& spec, const Shape3& input_shape) {
    return cost_report(spec, input_shape);
}

// ---------------------------------------------------------------------------
// Conv vs distributed-LSTM comparison for equal output sizes (conv stride 1,
// same padding, out channels == LSTM memory size).
// ---------------------------------------------------------------------------

struct ComparisonReport {
    std::int64_t conv_flops = 0;
    std::int64_t lstm_flops = 0;
    // FLOP ratio conv:lstm reduces to kernel_w*kernel_h : 4 for any channel
    // counts; kept as an exact integer pair.
    std::int64_t flops_ratio_num = 0;
    std::int64_t flops_ratio_den = 4;
    double flops_ratio = 0.0;
    double savings_fraction = 0.0;  // 1 - 4/(kernel_w*kernel_h); negative when LSTM costs more
    std::int64_t conv_sensing_cells = 0;     // kernel_w*kernel_h window positions
    double lstm_avg_sensing_cells = 0.0;     // (w+1)/2 mean row-prefix columns
    // Sensing ratio in the conventional form kernel_cells : w/2.
    std::int64_t sensing_ratio_num = 0;
    double sensing_ratio_den = 0.0;
};

inline ComparisonReport compare_conv_lstm(const Shape3& map, int kernel_w, int kernel_h,
                                          int conv_out, int lstm_hidden) {
    if (kernel_w < 1 || kernel_h < 1) throw ConfigError("compare_conv_lstm: kernel must be >= 1");
    if (conv_out < 1 || lstm_hidden < 1 || conv_out != lstm_hidden) {
        throw ConfigError("compare_conv_lstm: conv depth and LSTM memory size must be equal and "
                          ">= 1 so output sizes match");
    }
    check_shape(map, "compare_conv_lstm map");
    ComparisonReport r;
    const std::int64_t w = map.w, h = map.h, d1 = map.d;
    const std::int64_t kk = static_cast<std::int64_t>(kernel_w) * kernel_h;
    r.conv_flops = w * h * d1 * kk * conv_out * 2;
    r.lstm_flops = w * h * 8 * d1 * lstm_hidden;
    r.flops_ratio_num = kk;
    r.flops_ratio_den = 4;
    r.flops_ratio = static_cast<double>(kk) / 4.0;
    r.savings_fraction = static_cast<double>(kk - 4) / static_cast<double>(kk);
    r.conv_sensing_cells = kk;
    r.lstm_avg_sensing_cells = (w + 1) / 2.0;
    r.sensing_ratio_num = kk;
    r.sensing_ratio_den = w / 2.0;
    return r;
}

// ---------------------------------------------------------------------------
// Receptive field of one output cell, composed through the chain:
// rf <- rf + (kernel-1)*jump, jump <- jump*stride. A distributed LSTM makes
// the horizontal field the entire row prefix, flagged as unbounded; its
// vertical field is unchanged (rows never interact).
// ---------------------------------------------------------------------------

struct ReceptiveField {
    double rf_w = 1.0;
    double rf_h = 1.0;
    bool unbounded_w = false;  // horizontal field is the full row prefix
};

inline ReceptiveField receptive_field(const NetworkSpec& spec, std::size_t layer_index) {
    if (layer_index >= spec.layers.size()) {
        throw IndexError("receptive_field: layer index " + std::to_string(layer_index) +
                         " out of range");
    }
    NetworkSpec copy = spec;
    resolve_and_infer(copy);
    ReceptiveField rf;
    double jump_w = 1.0, jump_h = 1.0;
    for (std::size_t i = 0; i <= layer_index; ++i) {
        const LayerSpec& l = copy.layers[i];
        switch (l.kind) {
            case LayerKind::Conv:
                rf.rf_w += (l.conv.kernel_w - 1) * jump_w;
                rf.rf_h += (l.conv.kernel_h - 1) * jump_h;
                jump_w *= l.conv.stride_w;
                jump_h *= l.conv.stride_h;
                break;
            case LayerKind::DistLstm:
                rf.unbounded_w = true;
                break;
            case LayerKind::Act:
                break;
            case LayerKind::Upsample:
                // each output cell depends on exactly one input cell
                jump_w /= l.up_factor;
                break;
        }
    }
    return rf;
}

}  // namespace roadlstm
