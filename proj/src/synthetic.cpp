#include "vvtrack/synthetic.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "vvtrack/error.hpp"
#include "vvtrack/frame_io.hpp"

namespace vvtrack {

namespace {

bool inside(Shape shape, const ObjectPose& p, double px, double py) {
    if (shape == Shape::rect)
        return px >= p.cx - p.w / 2 && px < p.cx + p.w / 2 && py >= p.cy - p.h / 2 &&
               py < p.cy + p.h / 2;
    const double ux = (px - p.cx) / (p.w / 2), uy = (py - p.cy) / (p.h / 2);
    return ux * ux + uy * uy <= 1.0;
}

// Per-frame RNG stream derived from the scene seed.
std::mt19937_64 frame_rng(std::uint64_t seed, int frame) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(frame), 0x5eedu};
    return std::mt19937_64(seq);
}

double q8(double v) { return quantize8(v) / 255.0; }

}  // namespace

void validate_scene(const SyntheticScene& scene, int n_frames) {
    if (n_frames < 1) throw InvalidArgument("n_frames must be >= 1");
    if (scene.width <= 0 || scene.height <= 0) throw InvalidArgument("scene has zero size");
    if (scene.background && (scene.background->width() != scene.width ||
                             scene.background->height() != scene.height))
        throw InvalidArgument("background frame does not match scene size");
    if (scene.noise_sigma < 0) throw InvalidArgument("noise_sigma must be >= 0");
    for (std::size_t k = 0; k < scene.objects.size(); ++k) {
        const auto& obj = scene.objects[k];
        if (static_cast<int>(obj.trajectory.size()) < n_frames)
            throw InvalidArgument("object " + std::to_string(k) + " trajectory shorter than " +
                                  std::to_string(n_frames) + " frames");
        if (obj.shadow && !(obj.shadow->attenuation > 0 && obj.shadow->attenuation < 1))
            throw InvalidArgument("shadow attenuation must be in (0,1)");
        for (int t = 0; t < n_frames; ++t) {
            const Box b = obj.trajectory[static_cast<std::size_t>(t)].box();
            if (b.w <= 0 || b.h <= 0 || b.x < 0 || b.y < 0 || b.x + b.w > scene.width ||
                b.y + b.h > scene.height)
                throw InvalidArgument("object " + std::to_string(k) + " leaves the frame at t=" +
                                      std::to_string(t));
        }
    }
}

SyntheticSequence generate_synthetic(const SyntheticScene& scene, int n_frames) {
    validate_scene(scene, n_frames);
    const int W = scene.width, H = scene.height;
    SyntheticSequence seq;
    seq.frames.reserve(static_cast<std::size_t>(n_frames));
    seq.truth.reserve(static_cast<std::size_t>(n_frames));

    for (int t = 0; t < n_frames; ++t) {
        GrayFrame base = scene.background ? *scene.background : GrayFrame(W, H, scene.background_level);
        RgbFrame frame = gray_to_rgb(base);
        FrameTruth truth;
        truth.frame = t;
        truth.domain = scene.domain;
        truth.motion = BinaryMask(W, H);
        truth.shadow = BinaryMask(W, H);

        // Shadows attenuate the background only; overlapping shadows take the darker factor.
        GrayFrame attenuation(W, H, 1.0);
        for (const auto& obj : scene.objects) {
            if (!obj.shadow) continue;
            ObjectPose p = obj.trajectory[static_cast<std::size_t>(t)];
            p.cx += obj.shadow->dx;
            p.cy += obj.shadow->dy;
            const PixelRect r = pixel_cover(p.box(), W, H);
            for (int y = r.y0; y < r.y1; ++y)
                for (int x = r.x0; x < r.x1; ++x)
                    if (inside(obj.shape, p, x + 0.5, y + 0.5))
                        attenuation(x, y) = std::min(attenuation(x, y), obj.shadow->attenuation);
        }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (attenuation(x, y) < 1.0) {
                    const double v = base(x, y) * attenuation(x, y);
                    frame.set(x, y, {v, v, v});
                    truth.shadow(x, y) = 1;
                }

        for (std::size_t k = 0; k < scene.objects.size(); ++k) {
            const auto& obj = scene.objects[k];
            const ObjectPose& p = obj.trajectory[static_cast<std::size_t>(t)];
            const PixelRect r = pixel_cover(p.box(), W, H);
            const double top = p.cy - p.h / 2;
            for (int y = r.y0; y < r.y1; ++y)
                for (int x = r.x0; x < r.x1; ++x) {
                    if (!inside(obj.shape, p, x + 0.5, y + 0.5)) continue;
                    double gain = 1.0;
                    if (obj.stripe_period > 0 &&
                        static_cast<long>(std::floor((y + 0.5 - top) / obj.stripe_period)) % 2 == 1)
                        gain = 0.6;
                    frame.set(x, y, {obj.albedo.r * gain, obj.albedo.g * gain, obj.albedo.b * gain});
                    truth.motion(x, y) = 1;
                    truth.shadow(x, y) = 0;
                }
            truth.objects.push_back({static_cast<int>(k), obj.label, p.box()});
        }

        auto rng = frame_rng(scene.seed, t);
        std::normal_distribution<double> noise(0.0, scene.noise_sigma > 0 ? scene.noise_sigma : 1.0);
        for (auto* plane : {&frame.r, &frame.g, &frame.b})
            for (double& v : plane->raw()) {
                if (scene.noise_sigma > 0) v += noise(rng);
                v = q8(v);
            }

        seq.frames.push_back(std::move(frame));
        seq.truth.push_back(std::move(truth));
    }
    return seq;
}

std::vector<ObjectPose> linear_trajectory(double cx, double cy, double vx, double vy, double w,
                                          double h, int n_frames) {
    std::vector<ObjectPose> out;
    out.reserve(static_cast<std::size_t>(std::max(n_frames, 0)));
    for (int t = 0; t < n_frames; ++t) out.push_back({cx + vx * t, cy + vy * t, w, h});
    return out;
}

SceneObject make_walker(std::vector<ObjectPose> trajectory) {
    SceneObject o;
    o.label = "walker";
    o.shape = Shape::ellipse;
    o.albedo = {0.9, 0.55, 0.35};
    o.trajectory = std::move(trajectory);
    return o;
}

SceneObject make_vehicle(std::vector<ObjectPose> trajectory) {
    SceneObject o;
    o.label = "vehicle";
    o.shape = Shape::rect;
    o.albedo = {0.15, 0.25, 0.7};
    o.stripe_period = 4;
    o.trajectory = std::move(trajectory);
    return o;
}

GrayFrame make_background(const std::string& kind, int width, int height, std::uint64_t seed) {
    GrayFrame g(width, height, 0.45);
    if (kind == "plain") return g;
    if (kind == "stripes") {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) g(x, y) = ((x / 6) % 2) ? 0.55 : 0.35;
        return g;
    }
    if (kind == "checker") {
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) g(x, y) = (((x / 10) + (y / 10)) % 2) ? 0.58 : 0.32;
        return g;
    }
    if (kind == "blobs") {
        std::mt19937_64 rng(seed ^ 0xb10b5ull);
        std::uniform_real_distribution<double> ux(0, width), uy(0, height), ur(4, 12);
        for (int k = 0; k < 14; ++k) {
            const double cx = ux(rng), cy = uy(rng), rad = ur(rng);
            const double level = (k % 2) ? 0.6 : 0.3;
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= rad) g(x, y) = level;
        }
        return g;
    }
    throw InvalidArgument("unknown background kind: " + kind);
}

std::vector<std::string> preset_names() { return {"static", "single", "cross2", "shadow", "mixed"}; }

SyntheticScene preset_scene(const std::string& name, int n_frames, std::uint64_t seed) {
    if (n_frames < 1) throw InvalidArgument("n_frames must be >= 1");
    SyntheticScene s;
    s.seed = seed;
    s.noise_sigma = 0.02;
    const double span = std::max(n_frames - 1, 1);
    if (name == "static") return s;
    if (name == "single") {
        const double vx = std::min(2.0, (s.width - 2 * 24.0) / span);
        s.objects.push_back(make_vehicle(
            linear_trajectory(24, 60, vx, 0, kVehicleW, kVehicleH, n_frames)));
        return s;
    }
    if (name == "cross2") {
        const double v = std::min(2.0, (s.width - 2 * 20.0) / span);
        s.objects.push_back(
            make_walker(linear_trajectory(20, 58, v, 0, kWalkerW, kWalkerH, n_frames)));
        s.objects.push_back(make_vehicle(
            linear_trajectory(s.width - 20.0, 66, -v, 0, kVehicleW, kVehicleH, n_frames)));
        return s;
    }
    if (name == "shadow") {
        const double vx = std::min(2.0, (s.width - 2 * 24.0) / span);
        auto obj = make_vehicle(linear_trajectory(24, 40, vx, 0, kVehicleW, kVehicleH, n_frames));
        obj.shadow = ShadowSpec{4, 24, 0.5};
        s.objects.push_back(std::move(obj));
        return s;
    }
    if (name == "mixed") {
        std::mt19937_64 rng(seed ^ 0x313dull);
        std::uniform_int_distribution<int> count(2, 3);
        const int n = count(rng);
        for (int k = 0; k < n; ++k) {
            const bool walker = (k % 2 == 0) == ((seed & 1) == 0);
            const double w = walker ? kWalkerW : kVehicleW, h = walker ? kWalkerH : kVehicleH;
            std::uniform_real_distribution<double> ux(w / 2 + 1, s.width - w / 2 - 1),
                uy(h / 2 + 1, s.height - h / 2 - 1), uv(-1.0, 1.0);
            const double x0 = ux(rng), y0 = uy(rng);
            double x1 = ux(rng), y1 = uy(rng);
            // Keep speeds at most 1.5 px/frame.
            const double dist = std::hypot(x1 - x0, y1 - y0), max_len = 1.5 * span;
            if (dist > max_len) {
                x1 = x0 + (x1 - x0) * max_len / dist;
                y1 = y0 + (y1 - y0) * max_len / dist;
            }
            auto traj = linear_trajectory(x0, y0, (x1 - x0) / span, (y1 - y0) / span, w, h, n_frames);
            s.objects.push_back(walker ? make_walker(std::move(traj)) : make_vehicle(std::move(traj)));
        }
        return s;
    }
    throw InvalidArgument("unknown scene: " + name);
}

nlohmann::json truth_to_json(const FrameTruth& t) {
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : t.objects)
        objs.push_back({{"id", o.id}, {"label", o.label}, {"box", {o.box.x, o.box.y, o.box.w, o.box.h}}});
    return {{"frame", t.frame},
            {"domain", t.domain},
            {"objects", std::move(objs)},
            {"motion", mask_to_rle(t.motion)},
            {"shadow", mask_to_rle(t.shadow)}};
}

FrameTruth truth_from_json(const nlohmann::json& j) {
    try {
        FrameTruth t;
        t.frame = j.at("frame").get<int>();
        t.domain = j.value("domain", std::string{});
        for (const auto& o : j.at("objects")) {
            const auto& b = o.at("box");
            t.objects.push_back({o.at("id").get<int>(), o.value("label", std::string{}),
                                 Box{b.at(0).get<double>(), b.at(1).get<double>(),
                                     b.at(2).get<double>(), b.at(3).get<double>()}});
        }
        if (j.contains("motion")) t.motion = mask_from_rle(j.at("motion"));
        if (j.contains("shadow")) t.shadow = mask_from_rle(j.at("shadow"));
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad truth record: ") + e.what());
    }
}

}  // namespace vvtrack
