#include <array>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"
#include "vvtrack/background.hpp"
#include "vvtrack/error.hpp"
#include "vvtrack/frame_io.hpp"
#include "vvtrack/synthetic.hpp"

using namespace vvtrack;

namespace {

// Pearson correlation of two equally sized samples, two-pass form.
double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i] / n;
        mb += b[i] / n;
    }
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa / n < 1e-12 && sbb / n < 1e-12) return std::abs(ma - mb) < 1e-6 ? 1.0 : 0.0;
    if (saa / n < 1e-12 || sbb / n < 1e-12) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

std::vector<double> window(const GrayFrame& f, int x, int y) {
    std::vector<double> v;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) v.push_back(f.clamped(x + dx, y + dy));
    return v;
}

std::array<long, 256> folded_gaussian_histogram(double sigma_levels, long n) {
    std::array<long, 256> h{};
    for (int k = 0; k < 256; ++k) {
        const double s = sigma_levels * std::sqrt(2.0);
        const double mass = k == 0 ? std::erf(0.5 / s) : std::erf((k + 0.5) / s) - std::erf((k - 0.5) / s);
        h[static_cast<std::size_t>(k)] = std::lround(mass * static_cast<double>(n));
    }
    return h;
}

}  // namespace

TEST_CASE("radiometric similarity of identical windows is 1") {
    const GrayFrame f = testutil::random_frame(5, 5, 4);
    CHECK(radiometric_similarity(f, f, 2, 2, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("anti-correlated windows give -1") {
    GrayFrame a(3, 3), b(3, 3);
    const double v[9] = {0.1, 0.4, 0.2, 0.9, 0.3, 0.5, 0.7, 0.8, 0.6};
    for (int i = 0; i < 9; ++i) {
        a.raw()[static_cast<std::size_t>(i)] = v[i];
        b.raw()[static_cast<std::size_t>(i)] = 1.0 - v[i];
    }
    const double oracle = pearson(window(a, 1, 1), window(b, 1, 1));
    CHECK(oracle == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(radiometric_similarity(a, b, 1, 1, 1) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("flat window rules") {
    GrayFrame a(3, 3, 0.4), b(3, 3, 0.4), c(3, 3, 0.7);
    CHECK(radiometric_similarity(a, b, 1, 1, 1) == 1.0);
    CHECK(radiometric_similarity(a, c, 1, 1, 1) == 0.0);
    const GrayFrame noisy = testutil::random_frame(3, 3, 8);
    CHECK(radiometric_similarity(a, noisy, 1, 1, 1) == 0.0);
}

TEST_CASE("similarity matches the oracle on random windows") {
    for (unsigned seed = 0; seed < 30; ++seed) {
        const GrayFrame a = testutil::random_frame(6, 6, seed), b = testutil::random_frame(6, 6, seed + 100);
        for (int y = 1; y < 5; ++y)
            for (int x = 1; x < 5; ++x) {
                const double r = radiometric_similarity(a, b, x, y, 1);
                CHECK(r == doctest::Approx(pearson(window(a, x, y), window(b, x, y))).epsilon(1e-9));
                CHECK(r >= -1.0);
                CHECK(r <= 1.0);
            }
    }
}

TEST_CASE("similarity window must fit") {
    const GrayFrame f(5, 5, 0.5);
    CHECK_THROWS_AS(radiometric_similarity(f, f, 0, 2, 1), InvalidArgument);
    CHECK_THROWS_AS(radiometric_similarity(f, f, 2, 4, 1), InvalidArgument);
    CHECK_THROWS_AS(radiometric_similarity(f, GrayFrame(4, 5), 2, 2, 1), InvalidArgument);
}

TEST_CASE("unchanged frames produce empty masks") {
    const GrayFrame b = testutil::random_frame(20, 15, 5);
    const BackgroundState s = initialize_background(b);
    const MotionMasks m = motion_masks(b, b, s);
    CHECK(testutil::count_set(m.temporal) == 0);
    CHECK(testutil::count_set(m.difference) == 0);
    CHECK(testutil::count_set(m.fused) == 0);
}

TEST_CASE("moved square matches a brute-force evaluation") {
    const int W = 40, H = 30;
    GrayFrame bg(W, H, 0.2), prev = bg, curr = bg;
    for (int y = 5; y < 15; ++y)
        for (int x = 5; x < 15; ++x) prev(x, y) = 0.7;
    for (int y = 12; y < 22; ++y)
        for (int x = 18; x < 28; ++x) curr(x, y) = 0.7;
    BackgroundState s = initialize_background(bg);
    s.threshold = 0.1;
    const MotionMasks m = motion_masks(curr, prev, s);
    long mismatches = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double r = pearson(window(curr, x, y), window(prev, x, y));
            const bool im = 1.0 - r > 0.3;
            const bool fm = std::abs(curr(x, y) - bg(x, y)) > 0.1;
            mismatches += m.temporal(x, y) != im;
            mismatches += m.difference(x, y) != fm;
            mismatches += m.fused(x, y) != (im && fm);
            const bool new_square = x >= 18 && x < 28 && y >= 12 && y < 22;
            CHECK(bool(m.fused(x, y)) == new_square);
        }
    CHECK(mismatches == 0);
}

TEST_CASE("fused mask is the conjunction") {
    SyntheticScene scene = preset_scene("single", 8, 2);
    const auto seq = generate_synthetic(scene, 8);
    MotionDetector det;
    for (const auto& f : seq.frames) {
        const MotionMasks m = det.process(to_grayscale(f));
        for (std::size_t i = 0; i < m.fused.size(); ++i)
            CHECK(m.fused.raw()[i] == (m.temporal.raw()[i] && m.difference.raw()[i]));
    }
}

TEST_CASE("motion masks need an initialized state") {
    const GrayFrame f(4, 4);
    CHECK_THROWS_AS(motion_masks(f, f, BackgroundState{}), InvalidArgument);
}

TEST_CASE("update rate and recursion") {
    BackgroundState s = initialize_background(GrayFrame(4, 4, 0.5));
    s = update_background(s, GrayFrame(4, 4, 0.5));
    CHECK(s.last_rate == doctest::Approx(0.05));

    BackgroundState t = initialize_background(GrayFrame(4, 4, 0.5));
    t = update_background(t, GrayFrame(4, 4, 0.7), 0.05);
    CHECK(t.background(2, 2) == doctest::Approx(0.51).epsilon(1e-12));

    const GrayFrame target = testutil::random_frame(4, 4, 9);
    BackgroundState u = update_background(initialize_background(GrayFrame(4, 4, 0.1)), target, 1.0);
    CHECK(u.background == target);
}

TEST_CASE("first frame seeds the background verbatim") {
    const GrayFrame f = testutil::random_frame(7, 5, 10);
    CHECK(update_background(BackgroundState{}, f).background == f);
    CHECK(initialize_background(f).background == f);
}

TEST_CASE("history reaches six entries and the rate uses E(t-5)") {
    BackgroundState s = initialize_background(GrayFrame(2, 2, 0.5));
    const double levels[] = {0.5, 0.5, 0.5, 0.5, 0.5, 0.25, 0.25};
    for (double l : levels) s = update_background(s, GrayFrame(2, 2, l));
    CHECK(s.history.size() == 6);
    // E(t)=0.25, E(t-5)=0.5
    CHECK(s.last_rate == doctest::Approx(0.05 + 0.1 * 0.25 / 0.5));
    for (int i = 0; i < 6; ++i) s = update_background(s, GrayFrame(2, 2, 0.0));
    CHECK(s.last_rate == doctest::Approx(0.05));  // max(E) = 0 guard
}

TEST_CASE("update is a convex combination and the rate never drops below a") {
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> u(0, 1);
    BackgroundState s = initialize_background(testutil::random_frame(6, 6, 0));
    for (unsigned k = 1; k < 40; ++k) {
        const GrayFrame in = testutil::random_frame(6, 6, k);
        for (double& v : const_cast<GrayFrame&>(in).raw()) v *= u(rng);
        const GrayFrame before = s.background;
        s = update_background(s, in);
        CHECK(s.last_rate >= 0.05);
        for (std::size_t i = 0; i < in.size(); ++i) {
            CHECK(s.background.raw()[i] >= std::min(before.raw()[i], in.raw()[i]) - 1e-15);
            CHECK(s.background.raw()[i] <= std::max(before.raw()[i], in.raw()[i]) + 1e-15);
        }
    }
}

TEST_CASE("threshold fit on a delta spike") {
    std::array<long, 256> h{};
    h[0] = 1000;
    const NoiseModel m = fit_adaptive_threshold(h);
    CHECK(m.threshold == 0);
    CHECK(m.sigma == doctest::Approx(1e-6 / 255.0));
    CHECK(m.prior_background == doctest::Approx(1.0));
}

TEST_CASE("threshold fit recovers a Gaussian noise level") {
    const auto h = folded_gaussian_histogram(8.0, 1'000'000);
    const NoiseModel m = fit_adaptive_threshold(h);
    const oracle::ThresholdFit o = oracle::threshold_scan(h);
    CHECK(std::abs(m.sigma * 255.0 - 8.0) <= 0.8);
    CHECK(std::abs(m.threshold - o.T) <= 2);
    CHECK(m.prior_background <= 1.0);
    CHECK(m.prior_background >= 0.0);
}

TEST_CASE("threshold fit equals the oracle scan on random histograms") {
    std::mt19937 rng(17);
    for (int trial = 0; trial < 25; ++trial) {
        std::array<long, 256> h{};
        const double sigma = 2.0 + trial % 7;
        std::normal_distribution<double> noise(0, sigma);
        std::uniform_int_distribution<int> outlier(40, 200);
        for (int i = 0; i < 5000; ++i) ++h[static_cast<std::size_t>(std::min(255, int(std::lround(std::abs(noise(rng))))))];
        for (int i = 0; i < 300; ++i) ++h[static_cast<std::size_t>(outlier(rng))];
        const NoiseModel m = fit_adaptive_threshold(h);
        const oracle::ThresholdFit o = oracle::threshold_scan(h);
        CHECK(m.threshold == o.T);
        CHECK(m.sigma * 255.0 == doctest::Approx(o.sigma).epsilon(1e-9));
    }
}

TEST_CASE("threshold ties go to the smaller T") {
    // Bins beyond the support add identical error for every T past the last populated level.
    std::array<long, 256> h{};
    h[0] = 10;
    const NoiseModel m = fit_adaptive_threshold(h);
    CHECK(m.threshold == 0);
    std::array<long, 256> zero{};
    CHECK_THROWS_AS(fit_adaptive_threshold(zero), InvalidArgument);
}

TEST_CASE("clean_mask removes specks and fills holes") {
    BinaryMask speck(12, 12);
    speck(6, 6) = 1;
    CHECK(testutil::count_set(clean_mask(speck)) == 0);

    BinaryMask block(20, 20);
    for (int y = 5; y < 15; ++y)
        for (int x = 5; x < 15; ++x) block(x, y) = 1;
    BinaryMask holed = block;
    holed(9, 9) = 0;
    const BinaryMask cleaned = clean_mask(holed);
    CHECK(cleaned(9, 9) == 1);
    CHECK(cleaned == clean_mask(block));
    CHECK(testutil::count_set(cleaned) == 96);  // median rounds the four corners
}

TEST_CASE("open-close stage is idempotent on seeded random masks") {
    int full_pipeline_changes = 0;
    for (unsigned seed = 0; seed < 50; ++seed) {
        const BinaryMask m = testutil::random_mask(32, 24, 0.15 + 0.01 * (seed % 40), seed);
        const BinaryMask once = clean_mask(m);
        CHECK(close3(open3(once)) == once);
        const BinaryMask oc = close3(open3(m));
        CHECK(close3(open3(oc)) == oc);
        full_pipeline_changes += clean_mask(once) != once;
    }
    MESSAGE("clean_mask changed its own output on " << full_pipeline_changes << " of 50 masks");
}

TEST_CASE("the median stage alone breaks idempotence on a 3x3 square") {
    BinaryMask sq(9, 9);
    for (int y = 3; y < 6; ++y)
        for (int x = 3; x < 6; ++x) sq(x, y) = 1;
    CHECK(close3(open3(sq)) == sq);
    CHECK(testutil::count_set(median3(sq)) == 5);
}

TEST_CASE("static noisy sequence rarely fires after burn-in") {
    SyntheticScene scene;
    scene.noise_sigma = 0.02;
    scene.seed = 21;
    const auto seq = generate_synthetic(scene, 60);
    MotionDetector det;
    long fired = 0, total = 0;
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
        const MotionMasks m = det.process(to_grayscale(seq.frames[t]));
        if (t < 20) continue;
        fired += testutil::count_set(m.fused);
        total += static_cast<long>(m.fused.size());
    }
    CHECK(double(fired) / double(total) < 0.01);
}

TEST_CASE("background checkpoint round trip") {
    BackgroundState s = initialize_background(testutil::random_frame(5, 3, 77));
    for (unsigned k = 0; k < 8; ++k) s = update_background(s, testutil::random_frame(5, 3, k));
    s.threshold = 0.0784;
    std::istringstream in(save_background(s));
    const BackgroundState back = load_background(in);
    CHECK(back.background == s.background);
    CHECK(back.history == s.history);
    CHECK(back.threshold == s.threshold);
    CHECK(back.params.base_rate == s.params.base_rate);
    CHECK(back.params.selective_update == s.params.selective_update);
    CHECK(back.params.ghost_fraction == s.params.ghost_fraction);

    std::istringstream bad("vvtrack-background v9\n");
    CHECK_THROWS_AS(load_background(bad), DataError);
    std::string text = save_background(s);
    text.resize(text.rfind("row"));
    std::istringstream truncated(text);
    CHECK_THROWS_AS(load_background(truncated), DataError);
}

TEST_CASE("held pixels keep their background value") {
    BackgroundState s = initialize_background(GrayFrame(4, 4, 0.5));
    BinaryMask hold(4, 4);
    hold(1, 2) = 1;
    s = update_background(s, GrayFrame(4, 4, 0.7), 0.05, &hold);
    CHECK(s.background(1, 2) == 0.5);
    CHECK(s.background(0, 0) == doctest::Approx(0.51).epsilon(1e-12));
    BinaryMask wrong(3, 3);
    CHECK_THROWS_AS(update_background(s, GrayFrame(4, 4, 0.7), 0.05, &wrong), InvalidArgument);
}

TEST_CASE("ghost regions are the moving regions that did not change") {
    GrayFrame prev(12, 6, 0.5), curr(12, 6, 0.5);
    BinaryMask moving(12, 6);
    for (int y = 1; y < 5; ++y) {
        moving(1, y) = moving(2, y) = 1;  // left region: unchanged since the last frame
        moving(8, y) = moving(9, y) = 1;  // right region: one changed pixel in eight
    }
    curr(9, 3) = 0.9;
    const BinaryMask g = ghost_regions(moving, curr, prev, 0.1, 0.1);
    CHECK(g(1, 1) == 1);
    CHECK(g(2, 4) == 1);
    CHECK(g(8, 2) == 0);
    CHECK(g(5, 2) == 0);
    CHECK(testutil::count_set(g) == 8);
    // One changed pixel in eight is below a 0.2 share, so both regions are ghosts then.
    CHECK(testutil::count_set(ghost_regions(moving, curr, prev, 0.1, 0.2)) == 16);
}

TEST_CASE("moving rect masks reach F1 0.9 after burn-in, with or without ghost handling") {
    // Oracle: the generator's object pixels. The rect starts inside the first frame, so the model
    // begins with a ghost of it; the plain filter keeps that ghost well past the burn-in.
    SyntheticScene scene;
    scene.noise_sigma = 0.02;
    scene.seed = 5;
    SceneObject rect;
    rect.label = "rect";
    rect.albedo = {0.85, 0.85, 0.85};
    rect.trajectory = linear_trajectory(30, 60, 1.5, 0, 20, 20, 60);
    scene.objects.push_back(rect);
    const auto seq = generate_synthetic(scene, 60);
    const auto f1 = [&](const BackgroundParams& p) {
        MotionDetector det(p);
        long tp = 0, fp = 0, fn = 0;
        for (std::size_t t = 0; t < seq.frames.size(); ++t) {
            const BinaryMask m = clean_mask(det.process(to_grayscale(seq.frames[t])).fused);
            if (t < 20) continue;
            for (std::size_t i = 0; i < m.size(); ++i) {
                const bool a = m.raw()[i] != 0, b = seq.truth[t].motion.raw()[i] != 0;
                tp += a && b;
                fp += a && !b;
                fn += !a && b;
            }
        }
        return 2.0 * double(tp) / double(2 * tp + fp + fn);
    };
    CHECK(f1(BackgroundParams{}) >= 0.9);
    BackgroundParams plain;
    plain.selective_update = false;
    CHECK(f1(plain) < 0.9);
}

TEST_CASE("background params validation covers the update options") {
    BackgroundParams p;
    p.hold_radius = -1;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = {};
    p.ghost_fraction = 1.5;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
}
