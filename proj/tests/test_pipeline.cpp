#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "roadlstm/pipeline.hpp"

using namespace roadlstm;

namespace {

Tensor3 random_mask(int w, int h, Rng& rng) {
    Tensor3 m = Tensor3::zeros(Shape3{w, h, 1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(x, y, 0) = rng.below(2) ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST_CASE("pyramid geometry for the benchmark frame size", "[pipeline]") {
    RoadFrame frame;
    Rng rng(1);
    frame.rgb = Tensor3::uniform(Shape3{1242, 375, 3}, rng, 0, 1);
    const PyramidPair p = pyramid_preprocess(frame);
    CHECK(p.near.shape() == Shape3{600, 160, 5});
    CHECK(p.far.shape() == Shape3{600, 160, 5});
    CHECK(p.geom.crop_x == 321);
    CHECK(p.geom.crop_y == 107);
    CHECK(p.geom.scale_x == Catch::Approx(600.0 / 1242.0));
    CHECK(p.geom.scale_y == Catch::Approx(160.0 / 375.0));

    // far branch is a verbatim native-resolution crop
    for (int c = 0; c < 3; ++c) CHECK(p.far.at(10, 20, c) == frame.rgb.at(331, 127, c));

    // index channels hit the normalization endpoints at the corners
    CHECK(p.near.at(0, 0, 3) == 0.0);
    CHECK(p.near.at(0, 0, 4) == 0.0);
    CHECK(p.near.at(599, 159, 3) == 1.0);
    CHECK(p.near.at(599, 159, 4) == 1.0);

    RoadFrame small;
    small.rgb = Tensor3::zeros(Shape3{400, 200, 3});
    CHECK_THROWS_AS(pyramid_preprocess(small), GeometryError);
}

TEST_CASE("pyramid on an exactly network-sized frame degenerates cleanly", "[pipeline]") {
    RoadFrame frame;
    Rng rng(2);
    frame.rgb = Tensor3::uniform(Shape3{600, 160, 3}, rng, 0, 1);
    const PyramidPair p = pyramid_preprocess(frame);
    CHECK(p.geom.crop_x == 0);
    CHECK(p.geom.crop_y == 0);
    // near is an identity resize, so both branches carry the frame verbatim
    for (int c = 0; c < 3; ++c) {
        CHECK(p.near.at(123, 45, c) == frame.rgb.at(123, 45, c));
        CHECK(p.far.at(123, 45, c) == frame.rgb.at(123, 45, c));
    }
}

TEST_CASE("boundary extraction from masks", "[pipeline]") {
    Tensor3 all = Tensor3::constant(Shape3{5, 4, 1}, 1.0);
    for (double v : boundary_from_mask(all)) CHECK(v == 1.0);
    Tensor3 none = Tensor3::zeros(Shape3{5, 4, 1});
    for (double v : boundary_from_mask(none)) CHECK(v == 0.0);

    // road fills the bottom 2 rows of columns 0-1 only
    Tensor3 m = Tensor3::zeros(Shape3{4, 4, 1});
    for (int x = 0; x < 2; ++x)
        for (int y = 2; y < 4; ++y) m.at(x, y, 0) = 1.0;
    const std::vector<double> b = boundary_from_mask(m);
    CHECK(b == std::vector<double>{0.5, 0.5, 0.0, 0.0});

    // a run not touching the bottom edge counts as no road
    Tensor3 floating = Tensor3::zeros(Shape3{1, 4, 1});
    floating.at(0, 1, 0) = 1.0;
    CHECK(boundary_from_mask(floating)[0] == 0.0);
}

TEST_CASE("boundary rasterization and the round trip", "[pipeline]") {
    Tensor3 empty = boundary_to_mask(std::vector<double>(6, 0.0), 6, 4);
    for (std::int64_t i = 0; i < empty.size(); ++i) CHECK(empty.data()[i] == 0.0);
    Tensor3 full = boundary_to_mask(std::vector<double>(6, 1.0), 6, 4);
    for (std::int64_t i = 0; i < full.size(); ++i) CHECK(full.data()[i] == 1.0);

    Rng rng(7);
    const int h = 32, w = 40;
    for (int iter = 0; iter < 200; ++iter) {
        std::vector<double> v(w);
        for (double& x : v) x = static_cast<double>(rng.below(h + 1)) / h;  // quantized
        const Tensor3 mask = boundary_to_mask(v, w, h);
        const std::vector<double> back = boundary_from_mask(mask);
        for (int x = 0; x < w; ++x)
            CHECK(std::abs(back[static_cast<std::size_t>(x)] - v[static_cast<std::size_t>(x)]) <
                  1.0 / h + 1e-12);
        // quantized vectors survive exactly
        CHECK(back == v);

        // bottom-connectivity: every column is a single run touching the bottom
        for (int x = 0; x < w; ++x) {
            int transitions = 0;
            for (int y = 1; y < h; ++y)
                if (mask.at(x, y, 0) != mask.at(x, y - 1, 0)) ++transitions;
            CHECK(transitions <= 1);
            if (mask.at(x, 0, 0) == 1.0) CHECK(mask.at(x, h - 1, 0) == 1.0);
        }
    }

    // non-quantized values land within one pixel row
    std::vector<double> v{0.333, 0.777};
    const std::vector<double> back = boundary_from_mask(boundary_to_mask(v, 2, 10));
    CHECK(std::abs(back[0] - v[0]) <= 0.1);
    CHECK(std::abs(back[1] - v[1]) <= 0.1);
}

TEST_CASE("pyramid merge overwrite semantics", "[pipeline]") {
    PyramidGeometry geom;
    geom.orig_w = 100;
    geom.orig_h = 60;
    geom.net_w = 40;
    geom.net_h = 20;
    geom.crop_x = 30;
    geom.crop_y = 20;

    Tensor3 near = Tensor3::constant(Shape3{40, 20, 1}, 1.0);
    Tensor3 far = Tensor3::zeros(Shape3{40, 20, 1});
    const Tensor3 merged = pyramid_merge(near, far, geom);
    REQUIRE(merged.shape() == Shape3{100, 60, 1});
    for (int y = 0; y < 60; ++y)
        for (int x = 0; x < 100; ++x) {
            const bool inside = x >= 30 && x < 70 && y >= 20 && y < 40;
            CHECK(merged.at(x, y, 0) == (inside ? 0.0 : 1.0));
        }

    // pointwise contract on random pairs
    Rng rng(9);
    for (int iter = 0; iter < 10; ++iter) {
        Tensor3 n = random_mask(40, 20, rng);
        Tensor3 f = random_mask(40, 20, rng);
        const Tensor3 m = pyramid_merge(n, f, geom);
        const Tensor3 resized = resize_nearest(n, 100, 60);
        for (int y = 0; y < 60; ++y)
            for (int x = 0; x < 100; ++x) {
                const bool inside = x >= 30 && x < 70 && y >= 20 && y < 40;
                CHECK(m.at(x, y, 0) ==
                      (inside ? f.at(x - 30, y - 20, 0) : resized.at(x, y, 0)));
            }
    }

    // idempotence: when far already equals the crop of the resized near map
    Tensor3 n = random_mask(40, 20, rng);
    Tensor3 resized = resize_nearest(n, 100, 60);
    Tensor3 f = crop(resized, 30, 20, 40, 20);
    CHECK(pyramid_merge(n, f, geom) == resized);

    CHECK_THROWS_AS(pyramid_merge(near, Tensor3::zeros(Shape3{10, 10, 1}), geom), GeometryError);
}

TEST_CASE("sliding window counts and content", "[pipeline]") {
    Rng rng(11);
    // exact-fit frame: one window, identical to the frame itself
    RoadFrame fit;
    fit.rgb = Tensor3::uniform(Shape3{600, 160, 3}, rng, 0, 1);
    fit.mask = random_mask(600, 160, rng);
    AugmentOptions opt;
    const AugmentResult r = sliding_window_augment(fit, opt);
    CHECK(r.samples.size() == 1);   // scale 0.5 skipped, scale 1.0 fits once
    CHECK(r.skipped_scales == 1);
    CHECK(r.samples[0].input == make_input_tensor(fit.rgb));
    CHECK(r.samples[0].target == boundary_from_mask(*fit.mask));

    // benchmark-sized frame: 11x11 at scale 1.0 plus 1x2 at scale 0.5
    RoadFrame big;
    big.rgb = Tensor3::uniform(Shape3{1242, 375, 3}, rng, 0, 1);
    big.mask = random_mask(1242, 375, rng);
    const AugmentResult rb = sliding_window_augment(big, opt);
    // enumeration cross-check
    auto count_1d = [](int size, int window, int stride) {
        int n = 0;
        for (int p = 0; p + window <= size; p += stride) ++n;
        return n;
    };
    const int at_full = count_1d(1242, 600, 60) * count_1d(375, 160, 20);
    const int at_half = count_1d(621, 600, 60) * count_1d(187, 160, 20);
    CHECK(at_full == 121);
    CHECK(at_half == 2);
    CHECK(rb.samples.size() == static_cast<std::size_t>(at_full + at_half));
    CHECK(rb.skipped_scales == 0);

    RoadFrame no_mask;
    no_mask.rgb = fit.rgb;
    CHECK_THROWS_AS(sliding_window_augment(no_mask, opt), DataError);
}

TEST_CASE("input noise touches only the color channels", "[pipeline]") {
    Rng rng(13);
    RoadSample s;
    s.input = Tensor3::uniform(Shape3{100, 50, 5}, rng, 0, 1);
    s.target.assign(100, 0.3);

    Rng n0(5);
    const RoadSample same = add_noise(s, 0.0, n0);
    CHECK(same.input == s.input);

    Rng n1(5), n2(5);
    const RoadSample a = add_noise(s, 0.01, n1);
    const RoadSample b = add_noise(s, 0.01, n2);
    CHECK(a.input == b.input);  // reproducible under the seed
    CHECK(a.target == s.target);

    // index channels untouched; empirical sd of the color perturbation
    double sum = 0.0, sum2 = 0.0;
    std::int64_t n = 0;
    for (int y = 0; y < 50; ++y)
        for (int x = 0; x < 100; ++x) {
            CHECK(a.input.at(x, y, 3) == s.input.at(x, y, 3));
            CHECK(a.input.at(x, y, 4) == s.input.at(x, y, 4));
            for (int c = 0; c < 3; ++c) {
                const double d = a.input.at(x, y, c) - s.input.at(x, y, c);
                sum += d;
                sum2 += d * d;
                ++n;
            }
        }
    const double sd = std::sqrt(sum2 / n - (sum / n) * (sum / n));
    CHECK(n >= 15000);
    CHECK(std::abs(sd - 0.01) / 0.01 < 0.05);
}

TEST_CASE("metrics on a perfect prediction", "[pipeline]") {
    Rng rng(17);
    Tensor3 gt = random_mask(32, 16, rng);
    const SegMetrics m = compute_metrics(gt, gt);
    CHECK(m.pre == 1.0);
    CHECK(m.rec == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.ap_eq9 == 1.0);
    CHECK(m.fpr_eq6 == 0.0);
    CHECK(m.fnr == 0.0);
    CHECK(m.degenerate == 0);

    CHECK_THROWS_AS(compute_metrics(gt, Tensor3::zeros(Shape3{4, 4, 1})), ShapeError);
}

TEST_CASE("benchmark-table cross-checks", "[pipeline]") {
    // published rows: F1 recomputed from PRE/REC, and FNR = 100 - REC
    struct Row {
        double f1, pre, rec, fnr;
    };
    const Row rows[] = {
        {89.08, 88.12, 90.06, 9.94},   // hybrid network
        {81.84, 81.66, 82.02, 17.98},  // conv-only ablation
        {87.80, 86.01, 89.66, 10.34},  // MAP
        {89.12, 85.80, 92.71, 7.29},   // StixelNet
        {93.83, 94.00, 93.67, 6.33},   // Up-Conv-Poly
    };
    for (const Row& r : rows) {
        CHECK(std::abs(100.0 * f1_score(r.pre / 100.0, r.rec / 100.0) - r.f1) < 0.02);
        CHECK(std::abs(r.fnr - (100.0 - r.rec)) < 0.005);
    }
}

TEST_CASE("metric identities and symmetry", "[pipeline]") {
    Rng rng(19);
    for (int iter = 0; iter < 50; ++iter) {
        const std::int64_t tp = static_cast<std::int64_t>(rng.below(1000));
        const std::int64_t fp = static_cast<std::int64_t>(rng.below(1000));
        const std::int64_t tn = static_cast<std::int64_t>(rng.below(1000));
        const std::int64_t fn = static_cast<std::int64_t>(rng.below(1000));
        const SegMetrics m = metrics_from_counts(tp, fp, tn, fn);
        if (!(m.degenerate & kDegeneratePre)) CHECK(m.fpr_eq6 + m.pre == Catch::Approx(1.0).margin(1e-12));
        if (!(m.degenerate & kDegenerateRec)) CHECK(m.fnr + m.rec == Catch::Approx(1.0).margin(1e-12));

        // complementing both masks swaps TP<->TN and FP<->FN
        const SegMetrics c = metrics_from_counts(tn, fn, tp, fp);
        CHECK(c.tp == m.tn);
        CHECK(c.fp == m.fn);
        CHECK(c.tn == m.tp);
        CHECK(c.fn == m.fp);
    }

    const SegMetrics z = metrics_from_counts(0, 0, 10, 0);
    CHECK((z.degenerate & kDegeneratePre) != 0);
    CHECK((z.degenerate & kDegenerateRec) != 0);
    CHECK(z.pre == 0.0);
    CHECK(z.f1 == 0.0);
}
