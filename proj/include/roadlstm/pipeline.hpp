#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "roadlstm/errors.hpp"
#include "roadlstm/rng.hpp"
#include "roadlstm/tensor.hpp"

namespace roadlstm {

// A camera frame: RGB in [0,1], optional binary drivable-region mask.
struct RoadFrame {
    Tensor3 rgb;                    // w x h x 3
    std::optional<Tensor3> mask;    // w x h x 1, values {0,1}
};

// One training sample: the 5-channel input tensor (RGB + normalized x/y
// index channels) and the per-column normalized boundary height target,
// measured up from the bottom edge.
struct RoadSample {
    Tensor3 input;               // w x h x 5
    std::vector<double> target;  // length w, values in [0,1]
};

// ---------------------------------------------------------------------------
// Resampling. Sampling positions use the pixel-center convention:
// source = (dst + 0.5) * (src_size / dst_size) - 0.5, clamped to the image.
// Bilinear for images, nearest for masks.
// ---------------------------------------------------------------------------

inline Tensor3 resize_bilinear(const Tensor3& in, int out_w, int out_h) {
    const int w = in.shape().w, h = in.shape().h, d = in.shape().d;
    Tensor3 out(Shape3{out_w, out_h, d});
    const double sx = static_cast<double>(w) / out_w;
    const double sy = static_cast<double>(h) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, h - 1);
        const double ty = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, w - 1);
            const double tx = fx - x0;
            for (int c = 0; c < d; ++c) {
                const double v00 = in.at(x0, y0, c), v10 = in.at(x1, y0, c);
                const double v01 = in.at(x0, y1, c), v11 = in.at(x1, y1, c);
                const double top = v00 + (v10 - v00) * tx;
                const double bot = v01 + (v11 - v01) * tx;
                out.at(x, y, c) = top + (bot - top) * ty;
            }
        }
    }
    return out;
}

inline Tensor3 resize_nearest(const Tensor3& in, int out_w, int out_h) {
    const int w = in.shape().w, h = in.shape().h, d = in.shape().d;
    Tensor3 out(Shape3{out_w, out_h, d});
    const double sx = static_cast<double>(w) / out_w;
    const double sy = static_cast<double>(h) / out_h;
    for (int y = 0; y < out_h; ++y) {
        int src_y = std::clamp(static_cast<int>((y + 0.5) * sy), 0, h - 1);
        for (int x = 0; x < out_w; ++x) {
            int src_x = std::clamp(static_cast<int>((x + 0.5) * sx), 0, w - 1);
            for (int c = 0; c < d; ++c) out.at(x, y, c) = in.at(src_x, src_y, c);
        }
    }
    return out;
}

inline Tensor3 crop(const Tensor3& in, int x0, int y0, int cw, int ch) {
    if (x0 < 0 || y0 < 0 || x0 + cw > in.shape().w || y0 + ch > in.shape().h) {
        throw GeometryError("crop rectangle outside image");
    }
    Tensor3 out(Shape3{cw, ch, in.shape().d});
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            for (int c = 0; c < in.shape().d; ++c) out.at(x, y, c) = in.at(x0 + x, y0 + y, c);
    return out;
}

// Appends the two index channels: x/(w-1) and y/(h-1) in the tensor's own
// coordinates, so corners carry (0,0) and (1,1).
inline Tensor3 make_input_tensor(const Tensor3& rgb) {
    const int w = rgb.shape().w, h = rgb.shape().h, d = rgb.shape().d;
    Tensor3 out(Shape3{w, h, d + 2});
    const double nx = w > 1 ? 1.0 / (w - 1) : 0.0;
    const double ny = h > 1 ? 1.0 / (h - 1) : 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < d; ++c) out.at(x, y, c) = rgb.at(x, y, c);
            out.at(x, y, d) = x * nx;
            out.at(x, y, d + 1) = y * ny;
        }
    return out;
}

// ---------------------------------------------------------------------------
// Pyramid pre/post-processing
// ---------------------------------------------------------------------------

struct PyramidGeometry {
    int orig_w = 0, orig_h = 0;
    int crop_x = 0, crop_y = 0;
    int net_w = 600, net_h = 160;
    double scale_x = 0.0, scale_y = 0.0;  // near-branch resize factors
};

struct PyramidPair {
    Tensor3 near;  // scaled full frame, net_w x net_h x 5
    Tensor3 far;   // centered native-resolution crop, net_w x net_h x 5
    PyramidGeometry geom;
};

inline PyramidPair pyramid_preprocess(const RoadFrame& frame, int net_w = 600, int net_h = 160) {
    const int w = frame.rgb.shape().w, h = frame.rgb.shape().h;
    if (w < net_w || h < net_h) {
        throw GeometryError("frame " + std::to_string(w) + "x" + std::to_string(h) +
                            " smaller than the " + std::to_string(net_w) + "x" +
                            std::to_string(net_h) + " crop");
    }
    PyramidPair p;
    p.geom.orig_w = w;
    p.geom.orig_h = h;
    p.geom.net_w = net_w;
    p.geom.net_h = net_h;
    p.geom.crop_x = (w - net_w) / 2;
    p.geom.crop_y = (h - net_h) / 2;
    p.geom.scale_x = static_cast<double>(net_w) / w;
    p.geom.scale_y = static_cast<double>(net_h) / h;
    p.near = make_input_tensor(resize_bilinear(frame.rgb, net_w, net_h));
    p.far = make_input_tensor(crop(frame.rgb, p.geom.crop_x, p.geom.crop_y, net_w, net_h));
    return p;
}

// ---------------------------------------------------------------------------
// Boundary vector <-> mask
// ---------------------------------------------------------------------------

// Per column, the fraction of image height covered by the consecutive run of
// road pixels touching the bottom edge. A column whose bottom pixel is not
// road yields 0.
inline std::vector<double> boundary_from_mask(const Tensor3& mask) {
    const int w = mask.shape().w, h = mask.shape().h;
    std::vector<double> out(static_cast<std::size_t>(w), 0.0);
    for (int x = 0; x < w; ++x) {
        int run = 0;
        for (int y = h - 1; y >= 0; --y) {
            if (mask.at(x, y, 0) > 0.5) ++run;
            else break;
        }
        out[static_cast<std::size_t>(x)] = static_cast<double>(run) / h;
    }
    return out;
}

// Scanline fill of the polygon whose upper boundary passes through the
// vector's vertices and whose base is the bottom edge: pixel (x, y) is road
// iff y >= h*(1 - vec[x]). Values are clamped to [0,1] first.
inline Tensor3 boundary_to_mask(const std::vector<double>& vec, int w, int h) {
    if (static_cast<int>(vec.size()) != w) {
        throw ShapeError("boundary_to_mask: vector length " + std::to_string(vec.size()) +
                         " != mask width " + std::to_string(w));
    }
    Tensor3 mask = Tensor3::zeros(Shape3{w, h, 1});
    for (int x = 0; x < w; ++x) {
        const double v = std::clamp(vec[static_cast<std::size_t>(x)], 0.0, 1.0);
        const double threshold = h * (1.0 - v);
        int y_start = static_cast<int>(std::ceil(threshold));
        y_start = std::clamp(y_start, 0, h);
        for (int y = y_start; y < h; ++y) mask.at(x, y, 0) = 1.0;
    }
    return mask;
}

// Near mask resized (nearest) to the original frame size, then the far mask
// written verbatim into the centered crop rectangle, overwriting.
inline Tensor3 pyramid_merge(const Tensor3& near_mask, const Tensor3& far_mask,
                             const PyramidGeometry& geom) {
    if (far_mask.shape().w != geom.net_w || far_mask.shape().h != geom.net_h) {
        throw GeometryError("pyramid_merge: far mask " + far_mask.shape().str() +
                            " does not match crop " + std::to_string(geom.net_w) + "x" +
                            std::to_string(geom.net_h));
    }
    if (geom.crop_x + geom.net_w > geom.orig_w || geom.crop_y + geom.net_h > geom.orig_h) {
        throw GeometryError("pyramid_merge: crop rectangle outside original frame");
    }
    Tensor3 merged = resize_nearest(near_mask, geom.orig_w, geom.orig_h);
    for (int y = 0; y < geom.net_h; ++y)
        for (int x = 0; x < geom.net_w; ++x)
            merged.at(geom.crop_x + x, geom.crop_y + y, 0) = far_mask.at(x, y, 0);
    return merged;
}

// ---------------------------------------------------------------------------
// Sliding-window augmentation
// ---------------------------------------------------------------------------

struct AugmentOptions {
    std::vector<double> scales{0.5, 1.0};
    int window_w = 600;
    int window_h = 160;
    int stride_x = 60;
    int stride_y = 20;
    bool skip_road_free = false;  // drop windows whose target is all zero
};

struct AugmentResult {
    std::vector<RoadSample> samples;
    int skipped_scales = 0;
    int skipped_windows = 0;
};

inline AugmentResult sliding_window_augment(const RoadFrame& frame,
                                            const AugmentOptions& opt = {}) {
    if (!frame.mask) throw DataError("sliding_window_augment: frame has no mask");
    AugmentResult res;
    for (double s : opt.scales) {
        const int sw = static_cast<int>(std::floor(frame.rgb.shape().w * s));
        const int sh = static_cast<int>(std::floor(frame.rgb.shape().h * s));
        if (sw < opt.window_w || sh < opt.window_h) {
            ++res.skipped_scales;
            continue;
        }
        const Tensor3 rgb = (sw == frame.rgb.shape().w && sh == frame.rgb.shape().h)
                                ? frame.rgb
                                : resize_bilinear(frame.rgb, sw, sh);
        const Tensor3 mask = (sw == frame.mask->shape().w && sh == frame.mask->shape().h)
                                 ? *frame.mask
                                 : resize_nearest(*frame.mask, sw, sh);
        for (int y0 = 0; y0 + opt.window_h <= sh; y0 += opt.stride_y) {
            for (int x0 = 0; x0 + opt.window_w <= sw; x0 += opt.stride_x) {
                Tensor3 mask_win = crop(mask, x0, y0, opt.window_w, opt.window_h);
                std::vector<double> target = boundary_from_mask(mask_win);
                if (opt.skip_road_free &&
                    std::all_of(target.begin(), target.end(), [](double v) { return v == 0.0; })) {
                    ++res.skipped_windows;
                    continue;
                }
                RoadSample sample;
                sample.input = make_input_tensor(crop(rgb, x0, y0, opt.window_w, opt.window_h));
                sample.target = std::move(target);
                res.samples.push_back(std::move(sample));
            }
        }
    }
    return res;
}

// I.i.d. Gaussian noise on the color channels only; index channels and the
// target stay untouched. sd == 0 is an exact identity (no generator draws).
inline RoadSample add_noise(const RoadSample& sample, double sd, Rng& rng) {
    if (sd < 0.0) throw ConfigError("add_noise: sd must be >= 0");
    RoadSample out = sample;
    if (sd == 0.0) return out;
    const int w = out.input.shape().w, h = out.input.shape().h;
    const int color_ch = std::min(3, out.input.shape().d);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < color_ch; ++c) out.input.at(x, y, c) += rng.gaussian(0.0, sd);
    return out;
}

// ---------------------------------------------------------------------------
// Segmentation metrics
// ---------------------------------------------------------------------------

// Degenerate-denominator flags.
enum : unsigned {
    kDegeneratePre = 1u << 0,   // TP+FP == 0 (affects PRE and the printed FPR form)
    kDegenerateRec = 1u << 1,   // TP+FN == 0 (affects REC and FNR)
    kDegenerateF1 = 1u << 2,    // PRE+REC == 0
    kDegenerateFprStd = 1u << 3,  // FP+TN == 0
    kDegenerateAp = 1u << 4,    // empty mask pair
};

struct SegMetrics {
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    double pre = 0.0;       // TP/(TP+FP)
    double rec = 0.0;       // TP/(TP+FN)
    double fpr_eq6 = 0.0;   // FP/(TP+FP), the printed form (a false-discovery rate)
    double fnr = 0.0;       // FN/(TP+FN)
    double f1 = 0.0;        // 2*PRE*REC/(PRE+REC)
    double ap_eq9 = 0.0;    // (TP+TN)/(TP+FP+TN+FN), the printed accuracy form
    double fpr_std = 0.0;   // FP/(FP+TN), the benchmark's usual false positive rate
    unsigned degenerate = 0;
};

inline double f1_score(double pre, double rec) {
    return (pre + rec) > 0.0 ? 2.0 * pre * rec / (pre + rec) : 0.0;
}

inline SegMetrics metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t tn,
                                      std::int64_t fn) {
    SegMetrics m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    const double pp = static_cast<double>(tp + fp);
    const double ap_ = static_cast<double>(tp + fn);
    const double neg = static_cast<double>(fp + tn);
    const double all = static_cast<double>(tp + fp + tn + fn);
    if (pp > 0) {
        m.pre = tp / pp;
        m.fpr_eq6 = fp / pp;
    } else {
        m.degenerate |= kDegeneratePre;
    }
    if (ap_ > 0) {
        m.rec = tp / ap_;
        m.fnr = fn / ap_;
    } else {
        m.degenerate |= kDegenerateRec;
    }
    if (m.pre + m.rec > 0) m.f1 = f1_score(m.pre, m.rec);
    else m.degenerate |= kDegenerateF1;
    if (all > 0) m.ap_eq9 = (tp + tn) / all;
    else m.degenerate |= kDegenerateAp;
    if (neg > 0) m.fpr_std = fp / neg;
    else m.degenerate |= kDegenerateFprStd;
    return m;
}

inline SegMetrics compute_metrics(const Tensor3& pred, const Tensor3& gt) {
    if (!(pred.shape() == gt.shape())) {
        throw ShapeError("compute_metrics: shape mismatch " + pred.shape().str() + " vs " +
                         gt.shape().str());
    }
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    const double* p = pred.data();
    const double* g = gt.data();
    const std::int64_t n = pred.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const bool pi = p[i] > 0.5;
        const bool gi = g[i] > 0.5;
        if (pi && gi) ++tp;
        else if (pi && !gi) ++fp;
        else if (!pi && gi) ++fn;
        else ++tn;
    }
    return metrics_from_counts(tp, fp, tn, fn);
}

}  // namespace roadlstm
