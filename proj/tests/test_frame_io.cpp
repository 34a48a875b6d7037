#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "doctest.h"
#include "test_util.hpp"
#include "vvtrack/frame_io.hpp"
#include "vvtrack/synthetic.hpp"
#include "vvtrack/textio.hpp"

using namespace vvtrack;

TEST_CASE("grayscale uses the luma weights") {
    RgbFrame f(3, 1);
    f.set(0, 0, {1, 0, 0});
    f.set(1, 0, {1, 1, 1});
    f.set(2, 0, {0, 0, 0});
    const GrayFrame g = to_grayscale(f);
    CHECK(g(0, 0) == doctest::Approx(0.299).epsilon(1e-12));
    CHECK(g(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g(2, 0) == 0.0);
    CHECK(g(1, 0) <= 1.0);
}

TEST_CASE("grayscale is idempotent through gray replication") {
    RgbFrame f(16, 9);
    const GrayFrame r = testutil::random_frame(16, 9, 1), g = testutil::random_frame(16, 9, 2),
                    b = testutil::random_frame(16, 9, 3);
    f.r = r;
    f.g = g;
    f.b = b;
    const GrayFrame once = to_grayscale(f);
    const GrayFrame twice = to_grayscale(gray_to_rgb(once));
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice.raw()[i] == doctest::Approx(once.raw()[i]).epsilon(1e-12));
}

TEST_CASE("gray never exceeds the channel max") {
    for (unsigned seed = 0; seed < 20; ++seed) {
        RgbFrame f(8, 8);
        f.r = testutil::random_frame(8, 8, seed * 3);
        f.g = testutil::random_frame(8, 8, seed * 3 + 1);
        f.b = testutil::random_frame(8, 8, seed * 3 + 2);
        const GrayFrame g = to_grayscale(f);
        const GrayFrame v = hsv_value(f);
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.raw()[i] <= v.raw()[i] + 1e-12);
    }
}

TEST_CASE("ppm decoding maps bytes by /255") {
    std::string bytes = "P6\n# comment\n1 1\n255\n";
    bytes += static_cast<char>(255);
    bytes += static_cast<char>(0);
    bytes += static_cast<char>(0);
    const RgbFrame f = decode_pnm(bytes);
    CHECK(f.at(0, 0) == Rgb{1.0, 0.0, 0.0});
}

TEST_CASE("pgm decodes as replicated gray") {
    std::string bytes = "P5 2 1 255\n";
    bytes += static_cast<char>(51);
    bytes += static_cast<char>(204);
    const RgbFrame f = decode_pnm(bytes);
    CHECK(f.at(0, 0) == Rgb{0.2, 0.2, 0.2});
    CHECK(f.at(1, 0).g == doctest::Approx(0.8));
}

TEST_CASE("corrupt pnm inputs are data errors") {
    CHECK_THROWS_AS(decode_pnm("P3\n1 1\n255\n0 0 0"), DataError);
    CHECK_THROWS_AS(decode_pnm("P6\n2 2\n255\nabc"), DataError);
    CHECK_THROWS_AS(decode_pnm("P6\n1 1\n65535\n\x01\x02\x03\x04\x05\x06"), DataError);
    CHECK_THROWS_AS(decode_pnm("P6\n"), DataError);
}

TEST_CASE("ppm round trip is exact for 8-bit frames") {
    RgbFrame f(5, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) f.set(x, y, {(x * 40) / 255.0, (y * 60) / 255.0, ((x + y) * 17) / 255.0});
    CHECK(decode_pnm(encode_ppm(f)) == f);
}

TEST_CASE("read_sequence orders by index and rejects bad directories") {
    testutil::TempDir dir("seq");
    for (int i : {2, 0, 1}) {
        RgbFrame f(4, 3, {i / 255.0, 0, 0});
        write_ppm(dir.path() / format_frame_name("frame_%04d.ppm", i), f);
    }
    std::ofstream(dir.path() / "notes.txt") << "ignored";
    const auto frames = read_sequence(dir.path());
    REQUIRE(frames.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(frames[static_cast<std::size_t>(i)].at(0, 0).r == doctest::Approx(i / 255.0));

    testutil::TempDir empty("empty");
    CHECK_THROWS_AS(read_sequence(empty.path()), DataError);

    write_ppm(dir.path() / "frame_0003.ppm", RgbFrame(5, 3));
    CHECK_THROWS_AS(read_sequence(dir.path()), DataError);

    testutil::TempDir bad("bad");
    write_file_atomic(bad.path() / "frame_0000.ppm", "garbage");
    CHECK_THROWS_WITH_AS(read_sequence(bad.path()), doctest::Contains("frame_0000.ppm"), DataError);
}

TEST_CASE("frame name patterns") {
    CHECK(format_frame_name("frame_%04d.pgm", 7) == "frame_0007.pgm");
    CHECK(format_frame_name("f%d.ppm", 12) == "f12.ppm");
    CHECK_THROWS(format_frame_name("nopattern.ppm", 1));
}

TEST_CASE("rle mask round trip") {
    for (unsigned seed = 0; seed < 10; ++seed) {
        const BinaryMask m = testutil::random_mask(13, 7, 0.3, seed);
        CHECK(mask_from_rle(mask_to_rle(m)) == m);
    }
    BinaryMask ones(3, 2, 1);
    CHECK(mask_to_rle(ones)["runs"] == nlohmann::json::array({0, 6}));
    CHECK_THROWS_AS(mask_from_rle(nlohmann::json{{"w", 2}, {"h", 2}, {"runs", {1, 1}}}), DataError);
}

TEST_CASE("static scene has empty motion truth") {
    SyntheticScene scene;
    scene.noise_sigma = 0.02;
    scene.seed = 3;
    const auto seq = generate_synthetic(scene, 5);
    REQUIRE(seq.frames.size() == 5);
    for (const auto& t : seq.truth) CHECK(testutil::count_set(t.motion) == 0);
}

TEST_CASE("moving rect advances exactly by its velocity") {
    SyntheticScene scene;
    SceneObject obj;
    obj.label = "box";
    obj.trajectory = linear_trajectory(30, 50, 2, 0, 20, 10, 10);
    scene.objects.push_back(obj);
    const auto seq = generate_synthetic(scene, 10);
    for (std::size_t t = 1; t < seq.truth.size(); ++t) {
        const Box a = seq.truth[t - 1].objects.at(0).box, b = seq.truth[t].objects.at(0).box;
        CHECK(b.cx() - a.cx() == doctest::Approx(2.0));
        CHECK(b.cy() - a.cy() == doctest::Approx(0.0));
        CHECK(testutil::count_set(seq.truth[t].motion) == 200);
    }
}

TEST_CASE("generation is deterministic per seed") {
    const SyntheticScene scene = preset_scene("mixed", 6, 11);
    const auto a = generate_synthetic(scene, 6), b = generate_synthetic(scene, 6);
    for (std::size_t t = 0; t < a.frames.size(); ++t) CHECK(encode_ppm(a.frames[t]) == encode_ppm(b.frames[t]));
    const auto c = generate_synthetic(preset_scene("mixed", 6, 12), 6);
    bool differs = false;
    for (std::size_t t = 0; t < a.frames.size(); ++t) differs |= encode_ppm(a.frames[t]) != encode_ppm(c.frames[t]);
    CHECK(differs);
}

TEST_CASE("cast shadows attenuate the background only") {
    SyntheticScene scene;
    scene.background_level = 0.6;
    SceneObject obj = make_vehicle(linear_trajectory(60, 40, 0, 0, kVehicleW, kVehicleH, 1));
    obj.shadow = ShadowSpec{4, 24, 0.5};
    scene.objects.push_back(obj);
    const auto seq = generate_synthetic(scene, 1);
    const auto& truth = seq.truth[0];
    long shadow_px = 0;
    for (int y = 0; y < scene.height; ++y)
        for (int x = 0; x < scene.width; ++x) {
            CHECK_FALSE((truth.shadow(x, y) && truth.motion(x, y)));
            if (truth.shadow(x, y)) {
                ++shadow_px;
                CHECK(seq.frames[0].at(x, y).r == doctest::Approx(quantize8(0.3) / 255.0));
            }
        }
    CHECK(shadow_px == 30 * 14);
}

TEST_CASE("scene validation") {
    SyntheticScene scene;
    SceneObject obj;
    obj.trajectory = linear_trajectory(150, 60, 5, 0, 20, 10, 4);
    scene.objects.push_back(obj);
    CHECK_THROWS_AS(generate_synthetic(scene, 4), InvalidArgument);
    scene.objects[0].trajectory = linear_trajectory(50, 60, 0, 0, 20, 10, 4);
    scene.objects[0].shadow = ShadowSpec{1, 1, 1.0};
    CHECK_THROWS_AS(generate_synthetic(scene, 4), InvalidArgument);
    CHECK_THROWS_AS(generate_synthetic(SyntheticScene{}, 0), InvalidArgument);
}

TEST_CASE("truth json round trip") {
    const auto seq = generate_synthetic(preset_scene("cross2", 3, 5), 3);
    const FrameTruth& t = seq.truth[2];
    const FrameTruth back = truth_from_json(nlohmann::json::parse(truth_to_json(t).dump()));
    CHECK(back.frame == t.frame);
    CHECK(back.objects == t.objects);
    CHECK(back.motion == t.motion);
    CHECK(back.shadow == t.shadow);
}

TEST_CASE("presets generate within bounds") {
    for (const auto& name : preset_names())
        for (unsigned seed : {0u, 1u, 99u}) CHECK_NOTHROW(generate_synthetic(preset_scene(name, 40, seed), 40));
    CHECK_THROWS_AS(preset_scene("nope", 10, 0), InvalidArgument);
}
