// roadseg: cost analysis, training, evaluation, and inference for the
// CNN + row-distributed-LSTM road segmentation network.

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "roadlstm/analysis.hpp"
#include "roadlstm/image_io.hpp"
#include "roadlstm/network.hpp"
#include "roadlstm/parallel.hpp"
#include "roadlstm/pipeline.hpp"
#include "roadlstm/synth.hpp"
#include "roadlstm/train.hpp"

namespace rl = roadlstm;

namespace {

// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

bool parse_shape(const std::string& s, rl::Shape3& out) {
    return std::sscanf(s.c_str(), "%dx%dx%d", &out.w, &out.h, &out.d) == 3;
}

bool parse_size(const std::string& s, int& w, int& h) {
    return std::sscanf(s.c_str(), "%dx%d", &w, &h) == 2;
}

rl::NetworkSpec load_arch(const std::string& arch, const std::string& arch_file) {
    if (!arch_file.empty()) return rl::parse_arch_file(arch_file);
    if (arch == "roadnet") return rl::build_roadnet();
    throw rl::ConfigError("unknown architecture '" + arch + "' (use roadnet or --arch-file)");
}

std::string kernel_column(const rl::LayerSpec& l) {
    char buf[64];
    switch (l.kind) {
        case rl::LayerKind::Conv:
            std::snprintf(buf, sizeof(buf), "%dx%dx%d", l.conv.kernel_w, l.conv.kernel_h,
                          l.conv.out_channels);
            return buf;
        case rl::LayerKind::DistLstm:
            return std::to_string(l.hidden_dim);
        case rl::LayerKind::Act:
            return rl::activation_name(l.act);
        case rl::LayerKind::Upsample:
            std::snprintf(buf, sizeof(buf), "%dx1x1", l.up_factor);
            return buf;
    }
    return "-";
}

std::string stride_column(const rl::LayerSpec& l) {
    if (l.kind != rl::LayerKind::Conv) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%dx%d", l.conv.stride_w, l.conv.stride_h);
    return buf;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
    std::string arch = "roadnet";
    std::string arch_file;
    std::string input_shape;
    bool csv = false;
};

int cmd_analyze(const AnalyzeArgs& a) {
    rl::NetworkSpec spec = load_arch(a.arch, a.arch_file);
    rl::Shape3 input = spec.input_shape;
    if (!a.input_shape.empty() && !parse_shape(a.input_shape, input)) {
        throw rl::ConfigError("bad --input-shape '" + a.input_shape + "' (expected WxHxC)");
    }
    const rl::CostReport rep = rl::cost_report(spec, input);

    if (a.csv) {
        std::printf("layer,kind,kernel,stride,out_w,out_h,out_d,params,flops\n");
        for (std::size_t i = 0; i < rep.layers.size(); ++i) {
            const rl::LayerCost& c = rep.layers[i];
            const rl::LayerSpec& l = spec.layers[i];
            std::printf("%s,%s,%s,%s,%d,%d,%d,%" PRId64 ",%" PRId64 "\n", c.name.c_str(),
                        rl::layer_kind_name(c.kind), kernel_column(l).c_str(),
                        stride_column(l).c_str(), c.out_shape.w, c.out_shape.h, c.out_shape.d,
                        c.params, c.flops);
        }
        std::printf("total,,,,,,,%" PRId64 ",%" PRId64 "\n", rep.total_params, rep.core_flops);
        return 0;
    }

    std::printf("network cost report (input %s)\n\n", input.str().c_str());
    std::printf("%-10s %-10s %-8s %-12s %12s %16s\n", "Layer", "Kernel", "Stride", "Output",
                "Params", "FLOPs");
    for (std::size_t i = 0; i < rep.layers.size(); ++i) {
        const rl::LayerCost& c = rep.layers[i];
        const rl::LayerSpec& l = spec.layers[i];
        std::printf("%-10s %-10s %-8s %-12s %12" PRId64 " %16" PRId64 "\n", c.name.c_str(),
                    kernel_column(l).c_str(), stride_column(l).c_str(), c.out_shape.str().c_str(),
                    c.params, c.flops);
    }
    std::printf("\ntotals\n");
    std::printf("  parameters (exact)              %12" PRId64 "\n", rep.total_params);
    std::printf("  parameters (reference report)   %12" PRId64 "   delta %+" PRId64 " (%+.3f%%)\n",
                rl::kReferenceRoadnetParams, rep.total_params - rl::kReferenceRoadnetParams,
                100.0 * static_cast<double>(rep.total_params - rl::kReferenceRoadnetParams) /
                    static_cast<double>(rl::kReferenceRoadnetParams));
    std::printf("  FLOPs/tensor, conv+LSTM forms   %12" PRId64 "  (%.4g)\n", rep.core_flops,
                static_cast<double>(rep.core_flops));
    std::printf("  FLOPs/tensor, reference report  %12.0f   delta %+.2f%%\n",
                rl::kReferenceFlopsPerTensor,
                100.0 * (static_cast<double>(rep.core_flops) - rl::kReferenceFlopsPerTensor) /
                    rl::kReferenceFlopsPerTensor);
    std::printf("  FLOPs/frame (two tensors)       %12" PRId64 "  vs reference %.3g, delta %+.2f%%\n",
                2 * rep.core_flops, rl::kReferenceFlopsPerFrame,
                100.0 * (2.0 * static_cast<double>(rep.core_flops) - rl::kReferenceFlopsPerFrame) /
                    rl::kReferenceFlopsPerFrame);
    std::printf("  FLOPs/tensor, exact LSTM matmul %12" PRId64 "\n", rep.core_flops_exact);
    std::printf("  FLOPs/tensor, act+upsample      %12" PRId64 "  (1 FLOP/element, kept separate)\n",
                rep.extra_flops);

    std::printf("\nconv vs distributed LSTM at equal output size\n");
    for (int k : {3, 5, 7}) {
        const rl::ComparisonReport cmp = rl::compare_conv_lstm(rl::Shape3{input.w, input.h, 64},
                                                               k, k, 64, 64);
        std::printf("  %dx%d kernel: FLOP ratio %" PRId64 ":%" PRId64 "  (LSTM saves %.1f%%)\n", k,
                    k, cmp.flops_ratio_num, cmp.flops_ratio_den, 100.0 * cmp.savings_fraction);
    }
    const rl::ComparisonReport cmp = rl::compare_conv_lstm(rl::Shape3{input.w, input.h, 64}, 3, 3,
                                                           64, 64);
    std::printf("  sensing cells per output, 3x3 conv vs LSTM row prefix: %" PRId64 ":%.0f"
                "  (general form %" PRId64 ":w/2, w=%d)\n",
                cmp.sensing_ratio_num, cmp.sensing_ratio_den, cmp.sensing_ratio_num, input.w);
    std::printf("  LSTM mean sensing columns: %.1f of %d\n", cmp.lstm_avg_sensing_cells, input.w);
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out = "weights.bin";
    std::string log = "train_log.csv";
    int epochs = 80;
    int batch = 100;
    double lr = 1e-5;
    std::uint64_t seed = 1;
    double noise_sd = 0.0002;
    double val_split = 0.2;
    std::vector<double> scales{0.5, 1.0};
    int stride_x = 60;
    int stride_y = 20;
    bool no_augment = false;
    double target_mae = 0.0;
    bool timing = false;
};

int cmd_train(const TrainArgs& a) {
    const auto entries = rl::load_dataset(a.data, /*require_masks=*/true);
    rl::AugmentOptions aug;
    aug.scales = a.no_augment ? std::vector<double>{1.0} : a.scales;
    aug.stride_x = a.stride_x;
    aug.stride_y = a.stride_y;

    std::vector<rl::RoadSample> samples;
    int skipped_scales = 0;
    for (const auto& e : entries) {
        rl::AugmentResult r = rl::sliding_window_augment(e.frame, aug);
        skipped_scales += r.skipped_scales;
        for (auto& s : r.samples) samples.push_back(std::move(s));
    }
    std::fprintf(stderr, "loaded %zu frames -> %zu samples (%d undersized scale passes skipped)\n",
                 entries.size(), samples.size(), skipped_scales);
    if (samples.empty()) throw rl::DataError("augmentation produced no samples");

    // deterministic validation split: seeded shuffle, tail becomes validation
    rl::Rng split_rng(rl::mix_seed(a.seed ^ 0x5eedULL));
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(split_rng.below(i))]);
    const auto n_val = static_cast<std::size_t>(a.val_split * static_cast<double>(samples.size()));
    std::vector<rl::RoadSample> train_set, val_set;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto& dst = (i + n_val >= idx.size()) ? val_set : train_set;
        dst.push_back(std::move(samples[idx[i]]));
    }
    std::fprintf(stderr, "train %zu / val %zu samples\n", train_set.size(), val_set.size());

    rl::Rng init_rng(rl::mix_seed(a.seed));
    rl::Network net = rl::Network::init(rl::build_roadnet(), init_rng);

    rl::TrainConfig cfg;
    cfg.batch_size = a.batch;
    cfg.epochs = a.epochs;
    cfg.lr = a.lr;
    cfg.noise_sd = a.noise_sd;
    cfg.seed = a.seed;
    cfg.target_train_mae = a.target_mae;
    const std::vector<rl::EpochStats> history = rl::train(net, train_set, val_set, cfg, &std::cerr);

    rl::save_weights(net, a.out);
    std::ofstream log(a.log, std::ios::trunc);
    if (!log) throw rl::DataError("cannot open log file '" + a.log + "'");
    log << "epoch,train_mae,val_mae,wall_seconds\n";
    char line[160];
    for (const rl::EpochStats& st : history) {
        // wall time is written only with --timing so that equal seeds produce
        // byte-identical logs
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.3f\n", st.epoch, st.train_mae,
                      st.val_mae, a.timing ? st.wall_seconds : 0.0);
        log << line;
    }
    std::fprintf(stderr, "wrote %s and %s (final train_mae %.6f)\n", a.out.c_str(), a.log.c_str(),
                 history.back().train_mae);
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string data;
    std::string weights;
    std::string per_frame_csv;
    bool gt_oracle = false;
};

rl::Tensor3 predict_mask(const rl::Network& net, const rl::RoadFrame& frame) {
    const rl::PyramidPair pair = rl::pyramid_preprocess(frame);
    std::vector<double> near_vec = net.forward_vector(pair.near);
    std::vector<double> far_vec = net.forward_vector(pair.far);
    for (double& v : near_vec) v = std::clamp(v, 0.0, 1.0);
    for (double& v : far_vec) v = std::clamp(v, 0.0, 1.0);
    const rl::Tensor3 near_mask = rl::boundary_to_mask(near_vec, pair.geom.net_w, pair.geom.net_h);
    const rl::Tensor3 far_mask = rl::boundary_to_mask(far_vec, pair.geom.net_w, pair.geom.net_h);
    return rl::pyramid_merge(near_mask, far_mask, pair.geom);
}

int cmd_eval(const EvalArgs& a) {
    const auto entries = rl::load_dataset(a.data, /*require_masks=*/true);
    rl::Network net;
    if (!a.gt_oracle) {
        if (a.weights.empty()) throw rl::ConfigError("eval: --weights is required");
        net = rl::load_weights(a.weights);
    }

    std::ofstream per_frame;
    if (!a.per_frame_csv.empty()) {
        per_frame.open(a.per_frame_csv, std::ios::trunc);
        if (!per_frame) throw rl::DataError("cannot open '" + a.per_frame_csv + "'");
        per_frame << "stem,tp,fp,tn,fn,pre,rec,f1,ap_eq9\n";
    }

    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& e : entries) {
        const rl::Tensor3 pred = a.gt_oracle ? *e.frame.mask : predict_mask(net, e.frame);
        const rl::SegMetrics m = rl::compute_metrics(pred, *e.frame.mask);
        tp += m.tp;
        fp += m.fp;
        tn += m.tn;
        fn += m.fn;
        if (per_frame.is_open()) {
            per_frame << e.stem << "," << m.tp << "," << m.fp << "," << m.tn << "," << m.fn << ","
                      << m.pre << "," << m.rec << "," << m.f1 << "," << m.ap_eq9 << "\n";
        }
    }
    const rl::SegMetrics m = rl::metrics_from_counts(tp, fp, tn, fn);
    std::printf("pixel-summed metrics over %zu frames\n", entries.size());
    std::printf("  TP %" PRId64 "  FP %" PRId64 "  TN %" PRId64 "  FN %" PRId64 "\n", m.tp, m.fp,
                m.tn, m.fn);
    std::printf("  PRE  %.4f\n", m.pre);
    std::printf("  REC  %.4f\n", m.rec);
    std::printf("  FPR  %.4f  (printed form FP/(TP+FP))\n", m.fpr_eq6);
    std::printf("  FPR* %.4f  (standard form FP/(FP+TN))\n", m.fpr_std);
    std::printf("  FNR  %.4f\n", m.fnr);
    std::printf("  F1   %.4f\n", m.f1);
    std::printf("  AP   %.4f  (accuracy form (TP+TN)/total)\n", m.ap_eq9);
    if (m.degenerate) std::printf("  note: degenerate denominators reported as 0 (flags 0x%x)\n",
                                  m.degenerate);
    return 0;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferArgs {
    std::string image;
    std::string weights;
    std::string out = "mask.png";
    std::string overlay;
};

int cmd_infer(const InferArgs& a) {
    rl::RoadFrame frame;
    frame.rgb = rl::read_png_rgb(a.image);
    const rl::Network net = rl::load_weights(a.weights);
    rl::Tensor3 merged = predict_mask(net, frame);
    // decode to the drivable region: per column, the bottom-connected run
    const std::vector<double> boundary = rl::boundary_from_mask(merged);
    const rl::Tensor3 mask =
        rl::boundary_to_mask(boundary, merged.shape().w, merged.shape().h);
    rl::write_png_mask(a.out, mask);
    if (!a.overlay.empty()) rl::write_png_overlay(a.overlay, frame.rgb, mask);
    std::printf("wrote %s (%dx%d)\n", a.out.c_str(), mask.shape().w, mask.shape().h);
    return 0;
}

// ---------------------------------------------------------------------------
// grad-check
// ---------------------------------------------------------------------------

// Reduced network covering every layer kind (same+valid conv, relu, LSTM,
// upsample, sigmoid) on toy shapes.
rl::NetworkSpec toy_spec() {
    rl::NetworkSpec spec;
    spec.input_shape = rl::Shape3{16, 8, 5};
    spec.layers.push_back(rl::conv_spec("conv_a", 3, 3, 6, 2, 2, rl::Padding::Same));
    spec.layers.push_back(rl::act_spec("relu_a", rl::Activation::Relu));
    spec.layers.push_back(rl::dlstm_spec("dlstm_a", 5));
    spec.layers.push_back(rl::conv_spec("conv_b", 1, 4, 4, 1, 4, rl::Padding::Valid));
    spec.layers.push_back(rl::act_spec("relu_b", rl::Activation::Relu));
    spec.layers.push_back(rl::conv_spec("conv_c", 1, 1, 1, 1, 1, rl::Padding::Same));
    spec.layers.push_back(rl::upsample_spec("upsample_a", 2));
    spec.layers.push_back(rl::act_spec("sigmoid_a", rl::Activation::Sigmoid));
    return spec;
}

struct GradCheckArgs {
    std::uint64_t seed = 7;
    int corrupt_layer = -1;
};

int cmd_grad_check(const GradCheckArgs& a) {
    rl::Rng rng(rl::mix_seed(a.seed));
    rl::Network net = rl::Network::init(toy_spec(), rng);
    rl::Tensor3 input = rl::Tensor3::uniform(net.spec().input_shape, rng, 0.0, 1.0);
    std::vector<double> target(static_cast<std::size_t>(net.output_shape().w));
    for (double& t : target) t = rng.uniform(0.0, 1.0);

    rl::GradCheckReport rep = rl::grad_check_report(net, input, target, 1e-5, a.corrupt_layer);
    std::printf("%-12s %s\n", "layer", "max relative error");
    for (const auto& l : rep.layers) std::printf("%-12s %.3e\n", l.name.c_str(), l.max_rel_error);
    std::printf("overall max relative error: %.3e (threshold 1e-4)\n", rep.max_rel_error);
    if (rep.max_rel_error < 1e-4) {
        std::printf("PASS\n");
        return 0;
    }
    std::printf("FAIL\n");
    return kExitNumeric;
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

struct GenDataArgs {
    int n = 8;
    std::string size = "600x160";
    std::uint64_t seed = 1;
    double noise_sd = 0.02;
    std::string out = "synth_data";
};

int cmd_gen_data(const GenDataArgs& a) {
    int w = 0, h = 0;
    if (!parse_size(a.size, w, h)) throw rl::ConfigError("bad --size '" + a.size + "' (expected WxH)");
    const std::vector<rl::RoadFrame> frames = rl::gen_dataset(a.n, w, h, a.seed, a.noise_sd);
    rl::save_dataset(a.out, frames);
    std::printf("wrote %d frames under %s/{images,masks}\n", a.n, a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"road segmentation with a hybrid CNN + row-distributed-LSTM network"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware)")->capture_default_str();

    AnalyzeArgs an;
    CLI::App* analyze = app.add_subcommand("analyze", "per-layer parameter/FLOP accounting");
    analyze->add_option("--arch", an.arch, "built-in architecture name")->capture_default_str();
    analyze->add_option("--arch-file", an.arch_file, "architecture description file");
    analyze->add_option("--input-shape", an.input_shape, "override input shape WxHxC");
    analyze->add_flag("--csv", an.csv, "machine-readable CSV rows");
    analyze->set_config("--config", "", "key=value config file");

    TrainArgs tr;
    CLI::App* train = app.add_subcommand("train", "train on a dataset directory");
    train->add_option("--data", tr.data, "dataset dir (images/*.png + masks/*.png)")->required();
    train->add_option("--epochs", tr.epochs, "training epochs")->capture_default_str();
    train->add_option("--batch", tr.batch, "batch size")->capture_default_str();
    train->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
    train->add_option("--seed", tr.seed, "run seed (init, shuffle, noise)")->capture_default_str();
    train->add_option("--noise-sd", tr.noise_sd, "input noise standard deviation")
        ->capture_default_str();
    train->add_option("--val-split", tr.val_split, "validation fraction")->capture_default_str();
    train->add_option("--scales", tr.scales, "augmentation scales")
        ->delimiter(',')
        ->capture_default_str();
    train->add_option("--stride-x", tr.stride_x, "window stride, horizontal")->capture_default_str();
    train->add_option("--stride-y", tr.stride_y, "window stride, vertical")->capture_default_str();
    train->add_flag("--no-augment", tr.no_augment, "single full-frame window per image");
    train->add_option("--out", tr.out, "output weight file")->capture_default_str();
    train->add_option("--log", tr.log, "output CSV log")->capture_default_str();
    train->add_option("--target-mae", tr.target_mae, "stop early below this train MAE (0 = off)")
        ->capture_default_str();
    train->add_flag("--timing", tr.timing, "write wall-clock seconds into the log");
    train->set_config("--config", "", "key=value config file");

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate weights on a dataset directory");
    eval_cmd->add_option("--data", ev.data, "dataset dir")->required();
    eval_cmd->add_option("--weights", ev.weights, "weight file");
    eval_cmd->add_option("--per-frame", ev.per_frame_csv, "per-frame CSV output");
    eval_cmd->add_flag("--gt-oracle", ev.gt_oracle,
                       "score ground truth against itself (pipeline check)");
    eval_cmd->set_config("--config", "", "key=value config file");

    InferArgs in;
    CLI::App* infer = app.add_subcommand("infer", "segment a single image");
    infer->add_option("--image", in.image, "input image")->required();
    infer->add_option("--weights", in.weights, "weight file")->required();
    infer->add_option("--out", in.out, "output mask PNG")->capture_default_str();
    infer->add_option("--overlay", in.overlay, "optional RGB overlay PNG");
    infer->set_config("--config", "", "key=value config file");

    GradCheckArgs gc;
    CLI::App* grad = app.add_subcommand("grad-check", "finite-difference gradient verification");
    grad->add_option("--seed", gc.seed, "toy network seed")->capture_default_str();
    grad->add_option("--corrupt-layer", gc.corrupt_layer)->group("");  // test hook

    GenDataArgs gd;
    CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic road dataset");
    gen->add_option("--n", gd.n, "frame count")->capture_default_str();
    gen->add_option("--size", gd.size, "frame size WxH")->capture_default_str();
    gen->add_option("--seed", gd.seed, "dataset seed")->capture_default_str();
    gen->add_option("--noise-sd", gd.noise_sd, "texture noise")->capture_default_str();
    gen->add_option("--out", gd.out, "output directory")->capture_default_str();
    gen->set_config("--config", "", "key=value config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    if (threads > 0) rl::set_num_threads(threads);
    try {
        if (*analyze) return cmd_analyze(an);
        if (*train) return cmd_train(tr);
        if (*eval_cmd) return cmd_eval(ev);
        if (*infer) return cmd_infer(in);
        if (*grad) return cmd_grad_check(gc);
        if (*gen) return cmd_gen_data(gd);
    } catch (const rl::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const rl::TrainingError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const rl::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}
