#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "roadlstm/pipeline.hpp"
#include "roadlstm/rng.hpp"
#include "roadlstm/tensor.hpp"

namespace roadlstm {

// Synthetic road scenes: a trapezoidal road on a sky/ground background with
// optional obstacle rectangles sitting on the road. The mask is exact by
// construction, so these frames carry perfect ground truth for desk-scale
// training runs.

struct Obstacle {
    // pixel rectangle [x0,x1) x [y0,y1)
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double r = 0.5, g = 0.5, b = 0.5;
};

struct SceneParams {
    int w = 600;
    int h = 160;
    double vp_x = 300.0;           // vanishing-point x, in [0.3,0.7]*w
    double base_cx = 300.0;        // road base center x
    double base_half_w = 180.0;    // base half-width, in [0.2,0.45]*w
    double top_half_w = 30.0;      // half-width at the horizon
    double horizon_height = 90.0;  // horizon elevation above the bottom edge, in [0.45,0.7]*h
    int obstacle_count = 0;        // 0..3
    double noise_sd = 0.02;        // color texture noise
    std::uint64_t seed = 1;        // obstacle placement, colors, texture
};

namespace synth_detail {

// Pixel-center test against the road trapezoid. Row centers at or above the
// horizon are never road.
struct RoadEdges {
    double horizon_y;  // from the top edge
    double extent;     // horizon_y .. h
    const SceneParams& p;

    explicit RoadEdges(const SceneParams& params)
        : horizon_y(params.h - params.horizon_height),
          extent(static_cast<double>(params.h) - (params.h - params.horizon_height)),
          p(params) {}

    bool row_on_road(double yc) const { return yc >= horizon_y; }
    double left(double yc) const {
        const double t = (yc - horizon_y) / extent;
        return (p.vp_x - p.top_half_w) + t * ((p.base_cx - p.base_half_w) - (p.vp_x - p.top_half_w));
    }
    double right(double yc) const {
        const double t = (yc - horizon_y) / extent;
        return (p.vp_x + p.top_half_w) + t * ((p.base_cx + p.base_half_w) - (p.vp_x + p.top_half_w));
    }
};

}  // namespace synth_detail

// Paints an obstacle rectangle and removes it from the drivable mask.
// Returns how many road pixels it occluded.
inline std::int64_t draw_obstacle(RoadFrame& frame, const Obstacle& ob) {
    std::int64_t occluded = 0;
    Tensor3& rgb = frame.rgb;
    Tensor3& mask = *frame.mask;
    for (int y = ob.y0; y < ob.y1; ++y)
        for (int x = ob.x0; x < ob.x1; ++x) {
            if (mask.at(x, y, 0) > 0.5) {
                mask.at(x, y, 0) = 0.0;
                ++occluded;
            }
            rgb.at(x, y, 0) = ob.r;
            rgb.at(x, y, 1) = ob.g;
            rgb.at(x, y, 2) = ob.b;
        }
    return occluded;
}

inline RoadFrame gen_scene(const SceneParams& p) {
    Rng rng(p.seed);
    RoadFrame frame;
    frame.rgb = Tensor3(Shape3{p.w, p.h, 3});
    frame.mask = Tensor3::zeros(Shape3{p.w, p.h, 1});
    Tensor3& rgb = frame.rgb;
    Tensor3& mask = *frame.mask;

    // Per-scene color jitter keeps the dataset from collapsing into three
    // constant classes.
    const double jr = rng.uniform(-0.04, 0.04), jg = rng.uniform(-0.04, 0.04),
                 jb = rng.uniform(-0.04, 0.04);
    const double sky[3] = {0.53 + jr, 0.68 + jg, 0.85 + jb};
    const double ground[3] = {0.42 + jr, 0.52 + jg, 0.30 + jb};
    const double road[3] = {0.36 + jr, 0.36 + jg, 0.38 + jb};

    synth_detail::RoadEdges edges(p);
    std::int64_t road_pixels = 0;
    for (int y = 0; y < p.h; ++y) {
        const double yc = y + 0.5;
        const bool below_horizon = edges.row_on_road(yc);
        const double xl = below_horizon ? edges.left(yc) : 0.0;
        const double xr = below_horizon ? edges.right(yc) : 0.0;
        for (int x = 0; x < p.w; ++x) {
            const double xc = x + 0.5;
            const double* color;
            if (below_horizon && xc >= xl && xc < xr) {
                color = road;
                mask.at(x, y, 0) = 1.0;
                ++road_pixels;
            } else {
                color = below_horizon ? ground : sky;
            }
            for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = color[c];
        }
    }

    // Obstacles occlude drivable area: subtract their rectangles from the
    // mask. Cumulative occlusion is capped so the class balance stays sane.
    const std::int64_t occlusion_cap = road_pixels * 22 / 100;
    std::int64_t occluded = 0;
    const double horizon_y = p.h - p.horizon_height;
    for (int k = 0; k < p.obstacle_count; ++k) {
        const double oy_bottom = rng.uniform(horizon_y + 0.35 * p.horizon_height,
                                             static_cast<double>(p.h) - 2.0);
        const double row_l = edges.left(oy_bottom), row_r = edges.right(oy_bottom);
        const double road_w = std::max(4.0, row_r - row_l);
        const double ow = rng.uniform(0.10, 0.28) * road_w;
        const double oh = rng.uniform(0.08, 0.18) * p.h;
        const double ocx = rng.uniform(row_l + ow / 2, row_r - ow / 2);
        Obstacle ob;
        ob.x0 = std::clamp(static_cast<int>(ocx - ow / 2), 0, p.w - 1);
        ob.x1 = std::clamp(static_cast<int>(ocx + ow / 2) + 1, ob.x0 + 1, p.w);
        ob.y1 = std::clamp(static_cast<int>(oy_bottom) + 1, 1, p.h);
        ob.y0 = std::clamp(static_cast<int>(oy_bottom - oh), 0, ob.y1 - 1);
        ob.r = rng.uniform(0.1, 0.9);
        ob.g = rng.uniform(0.1, 0.9);
        ob.b = rng.uniform(0.1, 0.9);
        if (occluded >= occlusion_cap) continue;  // keep draws, skip drawing
        occluded += draw_obstacle(frame, ob);
    }

    if (p.noise_sd > 0.0) {
        for (int y = 0; y < p.h; ++y)
            for (int x = 0; x < p.w; ++x)
                for (int c = 0; c < 3; ++c) {
                    double v = rgb.at(x, y, c) + rng.gaussian(0.0, p.noise_sd);
                    rgb.at(x, y, c) = std::clamp(v, 0.0, 1.0);
                }
    }
    return frame;
}

inline SceneParams draw_scene_params(int w, int h, std::uint64_t seed, double noise_sd = 0.02) {
    Rng rng(seed);
    SceneParams p;
    p.w = w;
    p.h = h;
    p.noise_sd = noise_sd;
    p.seed = mix_seed(seed);
    p.vp_x = rng.uniform(0.3, 0.7) * w;
    p.base_half_w = rng.uniform(0.28, 0.45) * w;
    p.top_half_w = 0.05 * w;
    const double cx_lo = p.base_half_w + 2.0, cx_hi = w - p.base_half_w - 2.0;
    p.base_cx = std::clamp(rng.uniform(0.35, 0.65) * w, cx_lo, std::max(cx_lo, cx_hi));
    p.horizon_height = rng.uniform(0.5, 0.68) * h;
    p.obstacle_count = static_cast<int>(rng.below(4));
    return p;
}

inline std::vector<RoadFrame> gen_dataset(int n, int w, int h, std::uint64_t seed,
                                          double noise_sd = 0.02) {
    if (n < 1) throw ConfigError("gen_dataset: n must be >= 1");
    std::vector<RoadFrame> frames;
    frames.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::uint64_t child = mix_seed(seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1));
        frames.push_back(gen_scene(draw_scene_params(w, h, child, noise_sd)));
    }
    return frames;
}

}  // namespace roadlstm
