#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "roadlstm/errors.hpp"
#include "roadlstm/network.hpp"
#include "roadlstm/pipeline.hpp"

namespace roadlstm {

// ---------------------------------------------------------------------------
// Mean absolute error over a boundary vector. grad_i = sign(pred_i-target_i)/w
// with sign(0) = 0.
// ---------------------------------------------------------------------------

struct MaeResult {
    double loss = 0.0;
    std::vector<double> grad;
};

inline MaeResult mae_loss(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) {
        throw ShapeError("mae_loss: length mismatch " + std::to_string(pred.size()) + " vs " +
                         std::to_string(target.size()));
    }
    MaeResult r;
    const std::size_t w = pred.size();
    r.grad.assign(w, 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        const double diff = pred[i] - target[i];
        acc += std::abs(diff);
        if (diff > 0.0) r.grad[i] = 1.0 / static_cast<double>(w);
        else if (diff < 0.0) r.grad[i] = -1.0 / static_cast<double>(w);
    }
    r.loss = acc / static_cast<double>(w);
    return r;
}

inline double mae_value(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw ShapeError("mae_value: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - target[i]);
    return acc / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState init(std::size_t n, double lr) {
        AdamState s;
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
        s.lr = lr;
        return s;
    }
};

inline void adam_step(AdamState& state, std::vector<double>& params,
                      const std::vector<double>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size()) {
        throw ShapeError("adam_step: parameter/gradient/moment length mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        if (!std::isfinite(g)) {
            throw TrainingError("non-finite gradient at parameter index " + std::to_string(i));
        }
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient verification
// ---------------------------------------------------------------------------

struct GradCheckLayerReport {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::vector<GradCheckLayerReport> layers;  // only layers with parameters
};

// Compares the analytic parameter gradient of mae(forward(input), target)
// against central differences (f(p+eps)-f(p-eps))/(2 eps). Relative error is
// |a-n| / max(|a|, |n|, 1e-8). corrupt_layer (when >= 0) doubles that layer's
// analytic gradients first; the checker must then flag it.
inline GradCheckReport grad_check_report(Network& net, const Tensor3& input,
                                         const std::vector<double>& target, double eps = 1e-5,
                                         int corrupt_layer = -1) {
    ForwardCache cache;
    std::vector<double> out = net.forward_vector(input, &cache);
    MaeResult mr = mae_loss(out, target);
    Tensor3 grad_out(net.output_shape());
    for (std::int64_t i = 0; i < grad_out.size(); ++i) grad_out.data()[i] = mr.grad[static_cast<std::size_t>(i)];
    Network::BackwardResult bw = net.backward(cache, grad_out);
    if (corrupt_layer >= 0 && static_cast<std::size_t>(corrupt_layer) < net.layer_count()) {
        const std::int64_t b = net.layer_param_offset(static_cast<std::size_t>(corrupt_layer));
        const std::int64_t n = net.layer_param_count(static_cast<std::size_t>(corrupt_layer));
        for (std::int64_t k = b; k < b + n; ++k) bw.flat_grads[static_cast<std::size_t>(k)] *= 2.0;
    }

    std::vector<double> params;
    net.gather_params(params);
    GradCheckReport rep;
    for (std::size_t li = 0; li < net.layer_count(); ++li) {
        const std::int64_t begin = net.layer_param_offset(li);
        const std::int64_t count = net.layer_param_count(li);
        if (count == 0) continue;
        GradCheckLayerReport lr;
        lr.name = net.spec().layers[li].name;
        for (std::int64_t k = begin; k < begin + count; ++k) {
            const std::size_t i = static_cast<std::size_t>(k);
            const double saved = params[i];
            params[i] = saved + eps;
            net.scatter_params(params);
            const double fp = mae_value(net.forward_vector(input), target);
            params[i] = saved - eps;
            net.scatter_params(params);
            const double fm = mae_value(net.forward_vector(input), target);
            params[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double analytic = bw.flat_grads[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > lr.max_rel_error) lr.max_rel_error = rel;
        }
        rep.max_rel_error = std::max(rep.max_rel_error, lr.max_rel_error);
        rep.layers.push_back(std::move(lr));
    }
    net.scatter_params(params);
    return rep;
}

inline double grad_check(Network& net, const Tensor3& input, const std::vector<double>& target,
                         double eps = 1e-5) {
    return grad_check_report(net, input, target, eps).max_rel_error;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    int batch_size = 100;
    int epochs = 80;
    double lr = 1e-5;
    double noise_sd = 0.0002;  // on inputs normalized to [0,1]
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double target_train_mae = 0.0;  // > 0: stop once the epoch train MAE drops below
};

struct EpochStats {
    int epoch = 0;          // 1-based
    double train_mae = 0.0;  // mean per-sample loss seen during the epoch
    double val_mae = 0.0;    // NaN when there is no validation set
    double wall_seconds = 0.0;
};

// Deterministic given cfg.seed: the shuffle order and the per-presentation
// input noise both come from one generator consumed in a fixed order.
// Per-batch gradients are summed in shuffled-sample order before the Adam
// step, so histories are bit-reproducible.
inline std::vector<EpochStats> train(Network& net, const std::vector<RoadSample>& train_set,
                                     const std::vector<RoadSample>& val_set,
                                     const TrainConfig& cfg, std::ostream* progress = nullptr) {
    if (train_set.empty()) throw DataError("train: empty training set");
    if (cfg.batch_size < 1 || cfg.epochs < 1) throw ConfigError("train: batch/epochs must be >= 1");
    if (cfg.noise_sd < 0) throw ConfigError("train: noise_sd must be >= 0");
    const int out_w = net.output_shape().w;
    for (const RoadSample& s : train_set) {
        if (!(s.input.shape() == net.spec().input_shape) ||
            static_cast<int>(s.target.size()) != out_w) {
            throw ShapeError("train: sample does not match network input " +
                             net.spec().input_shape.str() + " / output width " +
                             std::to_string(out_w));
        }
    }

    Rng rng(cfg.seed);
    std::vector<double> params;
    net.gather_params(params);
    AdamState adam = AdamState::init(params.size(), cfg.lr);
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.epsilon = cfg.epsilon;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<EpochStats> history;
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<double> batch_grads(params.size());
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        // Fisher-Yates with the shared generator
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.below(i));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t pos = 0;
        int batch_index = 0;
        while (pos < order.size()) {
            const std::size_t batch_end =
                std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
            const double inv_batch = 1.0 / static_cast<double>(batch_end - pos);
            std::fill(batch_grads.begin(), batch_grads.end(), 0.0);
            for (std::size_t bi = pos; bi < batch_end; ++bi) {
                const RoadSample& base = train_set[order[bi]];
                RoadSample noisy = add_noise(base, cfg.noise_sd, rng);
                ForwardCache cache;
                std::vector<double> out = net.forward_vector(noisy.input, &cache);
                MaeResult mr = mae_loss(out, noisy.target);
                if (!std::isfinite(mr.loss)) {
                    throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                        ", batch " + std::to_string(batch_index));
                }
                epoch_loss += mr.loss;
                Tensor3 grad_out(net.output_shape());
                for (std::int64_t i = 0; i < grad_out.size(); ++i)
                    grad_out.data()[i] = mr.grad[static_cast<std::size_t>(i)] * inv_batch;
                Network::BackwardResult bw = net.backward(cache, grad_out);
                for (std::size_t i = 0; i < batch_grads.size(); ++i)
                    batch_grads[i] += bw.flat_grads[i];
            }
            adam_step(adam, params, batch_grads);
            net.scatter_params(params);
            pos = batch_end;
            ++batch_index;
        }

        EpochStats st;
        st.epoch = epoch;
        st.train_mae = epoch_loss / static_cast<double>(order.size());
        if (!val_set.empty()) {
            double v = 0.0;
            for (const RoadSample& s : val_set) v += mae_value(net.forward_vector(s.input), s.target);
            st.val_mae = v / static_cast<double>(val_set.size());
        } else {
            st.val_mae = std::numeric_limits<double>::quiet_NaN();
        }
        st.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        history.push_back(st);
        if (progress) {
            (*progress) << "epoch " << epoch << "/" << cfg.epochs << " train_mae " << st.train_mae;
            if (!val_set.empty()) (*progress) << " val_mae " << st.val_mae;
            (*progress) << "\n";
            progress->flush();
        }
        if (cfg.target_train_mae > 0.0 && st.train_mae < cfg.target_train_mae) break;
    }
    return history;
}

}  // namespace roadlstm
