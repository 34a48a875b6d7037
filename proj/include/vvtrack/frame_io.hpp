#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vvtrack/image.hpp"

namespace vvtrack {

// gray = 0.299 R + 0.587 G + 0.114 B, clamped to [0,1].
GrayFrame to_grayscale(const RgbFrame& f);
// Value channel of HSV: max(R,G,B).
GrayFrame hsv_value(const RgbFrame& f);
RgbFrame gray_to_rgb(const GrayFrame& g);

// Binary PGM (P5) / PPM (P6), maxval 255. A P5 file loads as a gray-replicated RgbFrame.
RgbFrame read_pnm(const std::filesystem::path& path);
RgbFrame decode_pnm(std::string_view bytes, const std::string& source = "<memory>");
std::string encode_ppm(const RgbFrame& f);
std::string encode_pgm(const GrayFrame& f);
void write_ppm(const std::filesystem::path& path, const RgbFrame& f);
void write_pgm(const std::filesystem::path& path, const GrayFrame& f);
// 0 -> 0, nonzero -> 255.
void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& m);

// Expands a printf-style pattern holding one %d / %0Nd conversion.
std::string format_frame_name(std::string_view pattern, int index);

// Loads every file in `dir` matching `pattern` (e.g. "frame_%04d.ppm"), ordered by index.
std::vector<RgbFrame> read_sequence(const std::filesystem::path& dir,
                                    std::string_view pattern = "frame_%04d.ppm");
// Picks frame_%04d.ppm when such files exist, else frame_%04d.pgm.
std::string detect_frame_pattern(const std::filesystem::path& dir);

// Row-major run lengths, alternating 0-runs and 1-runs, starting with a (possibly empty) 0-run.
nlohmann::json mask_to_rle(const BinaryMask& m);
BinaryMask mask_from_rle(const nlohmann::json& j);

std::uint8_t quantize8(double v);

}  // namespace vvtrack
