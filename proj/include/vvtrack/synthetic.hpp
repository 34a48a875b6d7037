#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vvtrack/image.hpp"

namespace vvtrack {

enum class Shape { rect, ellipse };

struct ObjectPose {
    double cx = 0, cy = 0, w = 0, h = 0;
    Box box() const { return Box::centered(cx, cy, w, h); }
};

// Cast shadow: the object silhouette shifted by (dx,dy) darkens the background by `attenuation`.
struct ShadowSpec {
    double dx = 0, dy = 0;
    double attenuation = 0.5;
};

struct SceneObject {
    std::string label;
    Shape shape = Shape::rect;
    Rgb albedo{0.8, 0.3, 0.25};
    // Horizontal stripes of this period in pixels (0 = solid); dark stripes at 60% albedo.
    int stripe_period = 0;
    std::vector<ObjectPose> trajectory;  // one pose per frame
    std::optional<ShadowSpec> shadow;
};

struct SyntheticScene {
    int width = 160;
    int height = 120;
    double background_level = 0.45;
    std::optional<GrayFrame> background;  // overrides background_level when set
    std::string domain = "plain";
    std::vector<SceneObject> objects;  // later objects occlude earlier ones
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

struct TruthObject {
    int id = 0;
    std::string label;
    Box box;
    bool operator==(const TruthObject&) const = default;
};

struct FrameTruth {
    int frame = 0;
    std::string domain;
    std::vector<TruthObject> objects;
    BinaryMask motion;  // object pixels
    BinaryMask shadow;  // shadowed background pixels (never object pixels)
};

struct SyntheticSequence {
    std::vector<RgbFrame> frames;
    std::vector<FrameTruth> truth;
};

// Throws InvalidArgument when a pose leaves the frame, a trajectory is too short,
// or an attenuation is outside (0,1).
void validate_scene(const SyntheticScene& scene, int n_frames);

// Deterministic in (scene, n_frames). Frames are quantized to 8-bit levels so that a
// PPM round trip reproduces them exactly.
SyntheticSequence generate_synthetic(const SyntheticScene& scene, int n_frames);

std::vector<ObjectPose> linear_trajectory(double cx, double cy, double vx, double vy, double w,
                                          double h, int n_frames);

// Object templates used by the presets and the recognition fixtures.
SceneObject make_walker(std::vector<ObjectPose> trajectory);
SceneObject make_vehicle(std::vector<ObjectPose> trajectory);
inline constexpr double kWalkerW = 14, kWalkerH = 28, kVehicleW = 30, kVehicleH = 14;

// Textured gray backgrounds: "plain", "stripes", "checker", "blobs".
GrayFrame make_background(const std::string& kind, int width, int height, std::uint64_t seed);

// Named scenes for the CLI: static, single, cross2, shadow, mixed.
SyntheticScene preset_scene(const std::string& name, int n_frames, std::uint64_t seed);
std::vector<std::string> preset_names();

nlohmann::json truth_to_json(const FrameTruth& t);
FrameTruth truth_from_json(const nlohmann::json& j);

}  // namespace vvtrack
