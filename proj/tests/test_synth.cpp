#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "roadlstm/pipeline.hpp"
#include "roadlstm/synth.hpp"

using namespace roadlstm;

namespace {

// Independent point-in-trapezoid test: a pixel centre below the horizon is
// road iff it lies between the linearly interpolated edges.
bool expected_road(const SceneParams& p, int x, int y) {
    const double yc = y + 0.5, xc = x + 0.5;
    const double horizon_y = p.h - p.horizon_height;
    if (yc < horizon_y) return false;
    const double t = (yc - horizon_y) / (p.h - horizon_y);
    const double left = (p.vp_x - p.top_half_w) +
                        t * ((p.base_cx - p.base_half_w) - (p.vp_x - p.top_half_w));
    const double right = (p.vp_x + p.top_half_w) +
                         t * ((p.base_cx + p.base_half_w) - (p.vp_x + p.top_half_w));
    return xc >= left && xc < right;
}

}  // namespace

TEST_CASE("clean scene mask is the exact trapezoid raster", "[synth]") {
    SceneParams p;
    p.w = 120;
    p.h = 40;
    p.vp_x = 60.0;
    p.base_cx = 58.0;
    p.base_half_w = 40.0;
    p.top_half_w = 6.0;
    p.horizon_height = 22.0;
    p.obstacle_count = 0;
    p.noise_sd = 0.0;
    p.seed = 5;
    const RoadFrame frame = gen_scene(p);
    REQUIRE(frame.mask.has_value());
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x)
            CHECK(frame.mask->at(x, y, 0) == (expected_road(p, x, y) ? 1.0 : 0.0));
}

TEST_CASE("scenes are bit-identical under a seed", "[synth]") {
    const SceneParams p = draw_scene_params(600, 160, 42);
    const RoadFrame a = gen_scene(p);
    const RoadFrame b = gen_scene(p);
    CHECK(a.rgb == b.rgb);
    CHECK(*a.mask == *b.mask);

    // different seeds give different frames
    const RoadFrame c = gen_scene(draw_scene_params(600, 160, 43));
    CHECK_FALSE(a.rgb == c.rgb);
}

TEST_CASE("an obstacle across the road base zeroes the boundary there", "[synth]") {
    SceneParams p;
    p.w = 100;
    p.h = 40;
    p.vp_x = 50.0;
    p.base_cx = 50.0;
    p.base_half_w = 30.0;
    p.top_half_w = 5.0;
    p.horizon_height = 20.0;
    p.obstacle_count = 0;
    p.noise_sd = 0.0;
    p.seed = 9;
    RoadFrame frame = gen_scene(p);

    Obstacle ob;  // spans part of the base, sitting on the bottom edge
    ob.x0 = 30;
    ob.x1 = 50;
    ob.y0 = 34;
    ob.y1 = 40;
    draw_obstacle(frame, ob);

    const std::vector<double> boundary = boundary_from_mask(*frame.mask);
    for (int x = ob.x0; x < ob.x1; ++x) CHECK(boundary[static_cast<std::size_t>(x)] == 0.0);
    // untouched columns still have road
    CHECK(boundary[25] > 0.0);
    CHECK(boundary[60] > 0.0);
}

TEST_CASE("datasets are deterministic and well balanced", "[synth]") {
    const std::vector<RoadFrame> a = gen_dataset(10, 600, 160, 7);
    const std::vector<RoadFrame> b = gen_dataset(10, 600, 160, 7);
    REQUIRE(a.size() == 10);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].rgb == b[i].rgb);
        CHECK(*a[i].mask == *b[i].mask);
        CHECK(a[i].rgb.shape() == Shape3{600, 160, 3});
        REQUIRE(a[i].mask.has_value());
        CHECK(a[i].mask->shape() == Shape3{600, 160, 1});

        // values stay in range and masks stay binary
        for (std::int64_t k = 0; k < a[i].rgb.size(); ++k) {
            CHECK(a[i].rgb.data()[k] >= 0.0);
            CHECK(a[i].rgb.data()[k] <= 1.0);
        }
        std::int64_t road = 0;
        for (std::int64_t k = 0; k < a[i].mask->size(); ++k) {
            const double v = a[i].mask->data()[k];
            CHECK((v == 0.0 || v == 1.0));
            road += v > 0.5;
        }
        const double frac = static_cast<double>(road) / static_cast<double>(a[i].mask->size());
        CHECK(frac > 0.10);
        CHECK(frac < 0.60);

        // ground truth is consistent with the pipeline's own scan rule
        const std::vector<double> boundary = boundary_from_mask(*a[i].mask);
        for (int x = 0; x < 600; ++x) {
            int run = 0;
            for (int y = 159; y >= 0; --y) {
                if (a[i].mask->at(x, y, 0) > 0.5) ++run;
                else break;
            }
            CHECK(boundary[static_cast<std::size_t>(x)] == static_cast<double>(run) / 160.0);
        }
    }

    CHECK_THROWS_AS(gen_dataset(0, 600, 160, 1), ConfigError);
}
