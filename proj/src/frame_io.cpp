#include "vvtrack/frame_io.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <regex>

#include <nlohmann/json.hpp>

#include "vvtrack/error.hpp"
#include "vvtrack/textio.hpp"

namespace fs = std::filesystem;

namespace vvtrack {

GrayFrame to_grayscale(const RgbFrame& f) {
    GrayFrame g(f.width(), f.height());
    auto r = f.r.pixels(), gr = f.g.pixels(), b = f.b.pixels();
    auto out = g.pixels();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(0.299 * r[i] + 0.587 * gr[i] + 0.114 * b[i], 0.0, 1.0);
    return g;
}

GrayFrame hsv_value(const RgbFrame& f) {
    GrayFrame g(f.width(), f.height());
    auto r = f.r.pixels(), gr = f.g.pixels(), b = f.b.pixels();
    auto out = g.pixels();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max({r[i], gr[i], b[i]});
    return g;
}

RgbFrame gray_to_rgb(const GrayFrame& g) {
    RgbFrame f;
    f.r = g;
    f.g = g;
    f.b = g;
    return f;
}

std::uint8_t quantize8(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

namespace {

class PnmHeaderParser {
public:
    PnmHeaderParser(std::string_view bytes, const std::string& source)
        : bytes_(bytes), source_(source) {}

    int next_int() {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_])))
            fail("malformed header");
        long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
            v = v * 10 + (bytes_[pos_++] - '0');
            if (v > 1'000'000) fail("header value out of range");
        }
        return static_cast<int>(v);
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
            fail("malformed header");
        return pos_ + 1;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw DataError(source_ + ": " + what);
    }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            const char c = bytes_[pos_];
            if (c == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string_view bytes_;
    const std::string& source_;
    std::size_t pos_ = 2;
};

}  // namespace

RgbFrame decode_pnm(std::string_view bytes, const std::string& source) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw DataError(source + ": not a binary PGM/PPM file");
    const bool color = bytes[1] == '6';
    PnmHeaderParser p(bytes, source);
    const int w = p.next_int();
    const int h = p.next_int();
    const int maxval = p.next_int();
    if (w <= 0 || h <= 0) p.fail("zero-sized image");
    if (maxval != 255) p.fail("only maxval 255 is supported");
    const std::size_t start = p.raster_start();
    const std::size_t channels = color ? 3 : 1;
    const std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() - start < need) p.fail("truncated raster");

    RgbFrame f(w, h);
    const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + start);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = (static_cast<std::size_t>(y) * w + x) * channels;
            if (color)
                f.set(x, y, {px[i] / 255.0, px[i + 1] / 255.0, px[i + 2] / 255.0});
            else
                f.set(x, y, {px[i] / 255.0, px[i] / 255.0, px[i] / 255.0});
        }
    return f;
}

RgbFrame read_pnm(const fs::path& path) {
    return decode_pnm(read_file(path), path.string());
}

std::string encode_ppm(const RgbFrame& f) {
    std::string out = "P6\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) +
                      "\n255\n";
    out.reserve(out.size() + 3 * static_cast<std::size_t>(f.width()) * f.height());
    for (int y = 0; y < f.height(); ++y)
        for (int x = 0; x < f.width(); ++x) {
            out.push_back(static_cast<char>(quantize8(f.r(x, y))));
            out.push_back(static_cast<char>(quantize8(f.g(x, y))));
            out.push_back(static_cast<char>(quantize8(f.b(x, y))));
        }
    return out;
}

std::string encode_pgm(const GrayFrame& f) {
    std::string out = "P5\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) +
                      "\n255\n";
    for (double v : f.pixels()) out.push_back(static_cast<char>(quantize8(v)));
    return out;
}

void write_ppm(const fs::path& path, const RgbFrame& f) { write_file_atomic(path, encode_ppm(f)); }
void write_pgm(const fs::path& path, const GrayFrame& f) { write_file_atomic(path, encode_pgm(f)); }

void write_mask_pgm(const fs::path& path, const BinaryMask& m) {
    GrayFrame g(m.width(), m.height());
    for (std::size_t i = 0; i < m.size(); ++i) g.raw()[i] = m.raw()[i] ? 1.0 : 0.0;
    write_pgm(path, g);
}

namespace {

struct PatternParts {
    std::string prefix, suffix;
    int width = 0;  // zero-pad width, 0 for plain %d
};

PatternParts split_pattern(std::string_view pattern) {
    static const std::regex conv(R"(%(0(\d+))?d)");
    std::string pat(pattern);
    std::smatch m;
    if (!std::regex_search(pat, m, conv)) throw InvalidArgument("frame pattern needs a %d: " + pat);
    PatternParts parts;
    parts.prefix = m.prefix().str();
    parts.suffix = m.suffix().str();
    if (parts.suffix.find('%') != std::string::npos || parts.prefix.find('%') != std::string::npos)
        throw InvalidArgument("frame pattern must hold exactly one conversion: " + pat);
    if (m[2].matched) parts.width = std::stoi(m[2].str());
    return parts;
}

std::string regex_escape(const std::string& s) {
    static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
    return std::regex_replace(s, special, R"(\$&)");
}

}  // namespace

std::string format_frame_name(std::string_view pattern, int index) {
    const PatternParts p = split_pattern(pattern);
    std::string num = std::to_string(index);
    if (static_cast<int>(num.size()) < p.width)
        num.insert(0, static_cast<std::size_t>(p.width) - num.size(), '0');
    return p.prefix + num + p.suffix;
}

std::vector<RgbFrame> read_sequence(const fs::path& dir, std::string_view pattern) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    const PatternParts p = split_pattern(pattern);
    const std::regex name_re(regex_escape(p.prefix) + "(\\d+)" + regex_escape(p.suffix));

    std::map<long, fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        std::smatch m;
        if (!std::regex_match(name, m, name_re)) continue;
        const long idx = std::stol(m[1].str());
        if (!files.emplace(idx, entry.path()).second)
            throw DataError("duplicate frame index " + std::to_string(idx) + " in " + dir.string());
    }
    if (files.empty())
        throw DataError("empty sequence: no files matching '" + std::string(pattern) + "' in " +
                        dir.string());

    std::vector<RgbFrame> frames;
    frames.reserve(files.size());
    for (const auto& [idx, path] : files) {
        frames.push_back(read_pnm(path));
        if (frames.size() > 1 && (frames.back().width() != frames.front().width() ||
                                  frames.back().height() != frames.front().height()))
            throw DataError("mixed frame dimensions: " + path.string());
    }
    return frames;
}

std::string detect_frame_pattern(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    bool has_pgm = false;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("frame_", 0) != 0) continue;
        if (entry.path().extension() == ".ppm") return "frame_%04d.ppm";
        if (entry.path().extension() == ".pgm") has_pgm = true;
    }
    return has_pgm ? "frame_%04d.pgm" : "frame_%04d.ppm";
}

nlohmann::json mask_to_rle(const BinaryMask& m) {
    nlohmann::json runs = nlohmann::json::array();
    std::uint8_t current = 0;
    long run = 0;
    for (auto v : m.pixels()) {
        const std::uint8_t bit = v ? 1 : 0;
        if (bit != current) {
            runs.push_back(run);
            run = 0;
            current = bit;
        }
        ++run;
    }
    runs.push_back(run);
    return {{"w", m.width()}, {"h", m.height()}, {"runs", std::move(runs)}};
}

BinaryMask mask_from_rle(const nlohmann::json& j) {
    try {
        BinaryMask m(j.at("w").get<int>(), j.at("h").get<int>());
        std::size_t pos = 0;
        std::uint8_t bit = 0;
        for (const auto& r : j.at("runs")) {
            const long n = r.get<long>();
            if (n < 0 || pos + static_cast<std::size_t>(n) > m.size())
                throw DataError("RLE runs overflow mask");
            std::fill_n(m.raw().begin() + static_cast<long>(pos), n, bit);
            pos += static_cast<std::size_t>(n);
            bit ^= 1;
        }
        if (pos != m.size()) throw DataError("RLE runs do not cover mask");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad RLE mask: ") + e.what());
    }
}

}  // namespace vvtrack
