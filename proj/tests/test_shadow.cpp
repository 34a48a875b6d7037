#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"
#include "vvtrack/background.hpp"
#include "vvtrack/frame_io.hpp"
#include "vvtrack/shadow.hpp"
#include "vvtrack/synthetic.hpp"

using namespace vvtrack;

namespace {

GradientField random_field(int w, int h, unsigned seed) {
    return {testutil::random_frame(w, h, seed), testutil::random_frame(w, h, seed + 1000)};
}

// Direct 2-D convolution with the truncated, border-renormalized Gaussian, then Sobel.
GrayFrame edge_oracle(const GrayFrame& f, double sigma) {
    const int r = static_cast<int>(std::ceil(3 * sigma));
    const int W = f.width(), H = f.height();
    GrayFrame blurred(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0, wsum = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (!f.contains(x + dx, y + dy)) continue;
                    const double wgt = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
                    acc += wgt * f(x + dx, y + dy);
                    wsum += wgt;
                }
            blurred(x, y) = acc / wsum;
        }
    GrayFrame mag(W, H);
    double peak = 0;
    const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double gx = 0, gy = 0;
            for (int j = -1; j <= 1; ++j)
                for (int i = -1; i <= 1; ++i) {
                    const double v = blurred.clamped(x + i, y + j);
                    gx += kx[j + 1][i + 1] * v;
                    gy += kx[i + 1][j + 1] * v;
                }
            mag(x, y) = std::hypot(gx, gy);
            peak = std::max(peak, mag(x, y));
        }
    for (double& v : mag.raw()) v /= peak;
    return mag;
}

}  // namespace

TEST_CASE("invariants of axis and gray pixels") {
    RgbFrame f(4, 1);
    f.set(0, 0, {1, 0, 0});
    f.set(1, 0, {0.3, 0.3, 0.3});
    f.set(2, 0, {0, 0, 0});
    f.set(3, 0, {0.8, 0.8, 0.8});
    const InvariantImages inv = invariant_images(f);
    CHECK(inv.inv1(0, 0) == 1.0);
    CHECK(inv.inv2(0, 0) == 0.0);
    CHECK(inv.inv1(1, 0) == doctest::Approx(1 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(inv.inv2(1, 0) == doctest::Approx(1 / std::sqrt(3.0)).epsilon(1e-12));
    CHECK(inv.inv1(2, 0) == 0.0);
    CHECK(std::abs(inv.inv1(1, 0) - inv.inv1(3, 0)) < 1e-12);
}

TEST_CASE("invariants are unit norm and scale invariant") {
    RgbFrame f(10, 10);
    f.r = testutil::random_frame(10, 10, 1);
    f.g = testutil::random_frame(10, 10, 2);
    f.b = testutil::random_frame(10, 10, 3);
    for (auto* p : {&f.r, &f.g, &f.b})
        for (double& v : p->raw()) v = 0.05 + 0.3 * v;  // 2.5x stays unclipped
    const InvariantImages base = invariant_images(f);
    for (std::size_t i = 0; i < base.inv1.size(); ++i) {
        const double b3 = f.b.raw()[i] / std::sqrt(f.r.raw()[i] * f.r.raw()[i] + f.g.raw()[i] * f.g.raw()[i] +
                                                    f.b.raw()[i] * f.b.raw()[i]);
        CHECK(base.inv1.raw()[i] * base.inv1.raw()[i] + base.inv2.raw()[i] * base.inv2.raw()[i] + b3 * b3 ==
              doctest::Approx(1.0).epsilon(1e-9));
    }
    for (double lambda : {0.3, 1.0, 2.5}) {
        RgbFrame s = f;
        for (auto* p : {&s.r, &s.g, &s.b})
            for (double& v : p->raw()) v *= lambda;
        const InvariantImages inv = invariant_images(s);
        for (std::size_t i = 0; i < inv.inv1.size(); ++i) {
            CHECK(std::abs(inv.inv1.raw()[i] - base.inv1.raw()[i]) < 1e-9);
            CHECK(std::abs(inv.inv2.raw()[i] - base.inv2.raw()[i]) < 1e-9);
        }
    }
}

TEST_CASE("edge strength of a constant frame is zero") {
    const GrayFrame e = edge_strength(GrayFrame(9, 9, 0.4), 1.0);
    for (double v : e.raw()) CHECK(v == 0.0);
}

TEST_CASE("step edge responds on the step and decays two columns away") {
    GrayFrame f(16, 16, 0.2);
    for (int y = 0; y < 16; ++y)
        for (int x = 8; x < 16; ++x) f(x, y) = 0.8;
    const GrayFrame e = edge_strength(f, 1.0);
    const GrayFrame o = edge_oracle(f, 1.0);
    for (std::size_t i = 0; i < e.size(); ++i) CHECK(e.raw()[i] == doctest::Approx(o.raw()[i]).epsilon(1e-9));
    const int y = 8;
    CHECK(e(7, y) == doctest::Approx(1.0));
    CHECK(e(8, y) == doctest::Approx(1.0));
    CHECK(e(7, y) >= 10 * e(5, y));
    CHECK(e(8, y) >= 10 * e(10, y));
}

TEST_CASE("edge strength max is 1 for non-constant frames") {
    for (unsigned seed = 0; seed < 10; ++seed) {
        const GrayFrame e = edge_strength(testutil::random_frame(12, 9, seed), 1.0 + 0.3 * seed);
        CHECK(*std::max_element(e.raw().begin(), e.raw().end()) == doctest::Approx(1.0));
        CHECK(*std::min_element(e.raw().begin(), e.raw().end()) >= 0.0);
    }
    CHECK_THROWS_AS(edge_strength(GrayFrame(3, 3), -1.0), InvalidArgument);
}

TEST_CASE("hard shadow mask literal cases") {
    auto one = [](double v) { return GrayFrame(1, 1, v); };
    CHECK(hard_shadow_mask(one(0.5), one(0.05), one(0.2), 0.3, 0.1)(0, 0) == 1);
    CHECK(hard_shadow_mask(one(0.2), one(0.0), one(0.0), 0.3, 0.1)(0, 0) == 0);
    CHECK(hard_shadow_mask(one(0.5), one(0.15), one(0.2), 0.3, 0.1)(0, 0) == 0);
}

TEST_CASE("hard shadow mask is monotone in its thresholds") {
    const GrayFrame eo = testutil::random_frame(16, 16, 1), e1 = testutil::random_frame(16, 16, 2),
                    e2 = testutil::random_frame(16, 16, 3);
    const double t1s[] = {0.1, 0.3, 0.5, 0.8};
    const double t2s[] = {0.05, 0.1, 0.2, 0.4};
    for (double t1 : t1s)
        for (double t2 : t2s) {
            const BinaryMask base = hard_shadow_mask(eo, e1, e2, t1, t2);
            const BinaryMask higher_t1 = hard_shadow_mask(eo, e1, e2, t1 + 0.1, t2);
            const BinaryMask lower_t2 = hard_shadow_mask(eo, e1, e2, t1, t2 / 2);
            for (std::size_t i = 0; i < base.size(); ++i) {
                CHECK(higher_t1.raw()[i] <= base.raw()[i]);
                CHECK(lower_t2.raw()[i] <= base.raw()[i]);
            }
        }
}

TEST_CASE("shadow masks are the union of hard and vague edges") {
    const auto seq = generate_synthetic(preset_scene("shadow", 1, 4), 1);
    const ShadowMasks m = detect_shadow_edges(seq.frames[0]);
    for (std::size_t i = 0; i < m.mask.size(); ++i) CHECK(m.mask.raw()[i] == (m.hard.raw()[i] | m.vague.raw()[i]));
    CHECK(testutil::count_set(m.hard) > 0);
    ShadowParams bad;
    bad.t2 = 0.5;
    CHECK_THROWS_AS(detect_shadow_edges(seq.frames[0], bad), InvalidArgument);
}

TEST_CASE("masked gradient selections") {
    const GrayFrame f = testutil::random_frame(8, 8, 5);
    const GradientField full = forward_gradient(f);
    const GradientField none = masked_gradient(f, BinaryMask(8, 8, 0));
    CHECK(none.gx == full.gx);
    CHECK(none.gy == full.gy);
    const GradientField all = masked_gradient(f, BinaryMask(8, 8, 1));
    for (double v : all.gx.raw()) CHECK(v == 0.0);
    for (double v : all.gy.raw()) CHECK(v == 0.0);
    const GradientField kept = masked_gradient(f, BinaryMask(8, 8, 1), GradientSelection::keep_masked);
    CHECK(kept.gx == full.gx);

    GrayFrame step(8, 8, 0.1);
    BinaryMask on_step(8, 8);
    for (int y = 0; y < 8; ++y) {
        for (int x = 4; x < 8; ++x) step(x, y) = 0.9;
        on_step(3, y) = 1;  // forward difference at x=3 carries the jump
    }
    const GradientField g = masked_gradient(step, on_step);
    for (double v : g.gx.raw()) CHECK(v == 0.0);
    for (double v : g.gy.raw()) CHECK(v == 0.0);
}

TEST_CASE("poisson of a zero field is zero") {
    PoissonStats st;
    const GrayFrame s = poisson_reconstruct({Plane<double>(10, 10), Plane<double>(10, 10)}, {}, &st);
    for (double v : s.raw()) CHECK(v == 0.0);
    CHECK(st.sweeps == 0);
}

TEST_CASE("poisson reconstructs an image from its gradient") {
    for (unsigned seed = 0; seed < 3; ++seed) {
        GrayFrame img = gaussian_blur(testutil::random_frame(32, 32, seed), 1.5);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) img(x, y) += 0.02 * x - 0.01 * y;
        PoissonStats st;
        const GrayFrame s = poisson_reconstruct(forward_gradient(img), {}, &st);
        CHECK(oracle::max_abs_after_mean_alignment(s, img) < 1e-3);
        CHECK(st.relative_residual < 1e-6);
        double mean = 0;
        for (double v : s.raw()) mean += v;
        CHECK(std::abs(mean) < 1e-9);
    }
}

TEST_CASE("poisson solve is linear in the field") {
    for (unsigned seed = 0; seed < 3; ++seed) {
        const GradientField g1 = random_field(16, 16, seed * 2), g2 = random_field(16, 16, seed * 2 + 1);
        GradientField sum{g1.gx, g1.gy};
        for (std::size_t i = 0; i < sum.gx.size(); ++i) {
            sum.gx.raw()[i] += g2.gx.raw()[i];
            sum.gy.raw()[i] += g2.gy.raw()[i];
        }
        PoissonParams tight;
        tight.tolerance = 1e-10;
        const GrayFrame a = poisson_reconstruct(g1, tight), b = poisson_reconstruct(g2, tight),
                        c = poisson_reconstruct(sum, tight);
        for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(c.raw()[i] - a.raw()[i] - b.raw()[i]) < 1e-6);
    }
}

TEST_CASE("poisson reports non-convergence with its residual") {
    PoissonParams p;
    p.max_sweeps = 3;
    try {
        poisson_reconstruct(random_field(24, 24, 9), p);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.iterations() == 3);
        CHECK(e.residual() > 1e-6);
    }
}

TEST_CASE("split with an empty mask keeps the original") {
    RgbFrame f = gray_to_rgb(testutil::random_frame(12, 10, 3));
    ShadowMasks m{BinaryMask(12, 10), BinaryMask(12, 10), BinaryMask(12, 10)};
    const ShadowSplit sp = split_shadow(f, m);
    const GrayFrame g = to_grayscale(f);
    const double gmax = *std::max_element(g.raw().begin(), g.raw().end());
    for (std::size_t i = 0; i < g.size(); ++i) {
        CHECK(sp.log_shadow.raw()[i] == 0.0);
        CHECK(sp.shadow_free.raw()[i] == doctest::Approx((g.raw()[i] + 1 / 256.0) / (gmax + 1 / 256.0)).epsilon(1e-12));
    }
}

TEST_CASE("split conserves the log image and normalizes to max 1") {
    const auto seq = generate_synthetic(preset_scene("shadow", 3, 8), 3);
    for (const auto& f : seq.frames) {
        const ShadowSplit sp = split_shadow(f, detect_shadow_edges(f));
        for (std::size_t i = 0; i < sp.log_input.size(); ++i)
            CHECK(sp.log_shadow.raw()[i] + sp.log_free.raw()[i] == doctest::Approx(sp.log_input.raw()[i]).epsilon(1e-12));
        CHECK(*std::max_element(sp.shadow.raw().begin(), sp.shadow.raw().end()) == 1.0);
        CHECK(*std::max_element(sp.shadow_free.raw().begin(), sp.shadow_free.raw().end()) == 1.0);
    }
}

TEST_CASE("shadow-free image flattens a cast shadow") {
    SyntheticScene scene;
    scene.background_level = 0.55;
    SceneObject obj = make_vehicle(linear_trajectory(70, 35, 0, 0, kVehicleW, kVehicleH, 1));
    obj.shadow = ShadowSpec{4, 24, 0.5};
    scene.objects.push_back(obj);
    const auto seq = generate_synthetic(scene, 1);
    const ShadowSplit sp = split_shadow(seq.frames[0], detect_shadow_edges(seq.frames[0]));
    const auto& truth = seq.truth[0];
    const BinaryMask near = dilate(truth.shadow, 6);
    const BinaryMask object_zone = dilate(truth.motion, 3);
    double in = 0, out = 0;
    long nin = 0, nout = 0;
    for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x) {
            if (truth.shadow(x, y)) {
                in += sp.shadow_free(x, y);
                ++nin;
            } else if (near(x, y) && !object_zone(x, y)) {
                out += sp.shadow_free(x, y);
                ++nout;
            }
        }
    REQUIRE(nin > 0);
    REQUIRE(nout > 0);
    const double ratio = (in / nin) / (out / nout);
    CHECK(ratio >= 0.85);
    CHECK(ratio <= 1.15);
}

TEST_CASE("blob extraction") {
    CHECK(extract_blobs(BinaryMask(10, 10), 1).empty());

    BinaryMask two(20, 10);
    for (int y = 2; y < 7; ++y)
        for (int x = 1; x < 6; ++x) {
            two(x, y) = 1;
            two(x + 10, y) = 1;
        }
    const auto blobs = extract_blobs(two, 10);
    REQUIRE(blobs.size() == 2);
    CHECK(blobs[0].area == 25);
    CHECK(blobs[1].area == 25);
    CHECK(blobs[0].bbox.x0 == 1);  // equal areas keep scan order
    CHECK(blobs[0].cx == doctest::Approx(3.5));

    BinaryMask diag(5, 5);
    diag(1, 1) = diag(2, 2) = diag(3, 3) = 1;
    const auto d = extract_blobs(diag, 1);
    REQUIRE(d.size() == 1);
    CHECK(d[0].area == 3);
    CHECK(extract_blobs(diag, 4).empty());
}

TEST_CASE("blob invariants on random masks") {
    for (unsigned seed = 0; seed < 10; ++seed) {
        const BinaryMask m = testutil::random_mask(30, 20, 0.4, seed);
        long total = 0;
        long prev_area = 1L << 30;
        for (const Blob& b : extract_blobs(m, 1)) {
            CHECK(testutil::count_set(b.mask) == b.area);
            CHECK(b.area <= prev_area);
            prev_area = b.area;
            CHECK(b.cx >= b.bbox.x0);
            CHECK(b.cx <= b.bbox.x1);
            CHECK(b.cy >= b.bbox.y0);
            CHECK(b.cy <= b.bbox.y1);
            total += b.area;
        }
        CHECK(total == testutil::count_set(m));
    }
}
