#include "vvtrack/background.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vvtrack/error.hpp"
#include "vvtrack/frame_io.hpp"
#include "vvtrack/textio.hpp"

namespace vvtrack {

void BackgroundParams::validate() const {
    if (window_radius < 1) throw InvalidArgument("window_radius must be >= 1");
    if (base_rate < 0.04 || base_rate > 0.06) throw InvalidArgument("base rate a must be in [0.04,0.06]");
    if (gain_slope < 0) throw InvalidArgument("gain slope b must be >= 0");
    if (similarity_threshold < 0 || similarity_threshold > 2)
        throw InvalidArgument("similarity threshold must be in [0,2]");
    if (initial_threshold < 0 || initial_threshold > 1)
        throw InvalidArgument("initial threshold must be in [0,1]");
    if (hold_radius < 0) throw InvalidArgument("hold radius must be >= 0");
    if (!(ghost_fraction >= 0 && ghost_fraction <= 1)) throw InvalidArgument("ghost fraction must be in [0,1]");
}

namespace {

constexpr double kFlatVariance = 1e-12;

// Window statistics with replicate-border sampling.
double similarity_clamped(const GrayFrame& f1, const GrayFrame& f2, int x, int y, int w) {
    double s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0;
    for (int dy = -w; dy <= w; ++dy)
        for (int dx = -w; dx <= w; ++dx) {
            const double a = f1.clamped(x + dx, y + dy), b = f2.clamped(x + dx, y + dy);
            s1 += a;
            s2 += b;
            s11 += a * a;
            s22 += b * b;
            s12 += a * b;
        }
    const double n = (2.0 * w + 1) * (2.0 * w + 1);
    const double m1 = s1 / n, m2 = s2 / n;
    const double v1 = std::max(s11 / n - m1 * m1, 0.0);
    const double v2 = std::max(s22 / n - m2 * m2, 0.0);
    const bool flat1 = v1 < kFlatVariance, flat2 = v2 < kFlatVariance;
    if (flat1 && flat2) return std::abs(m1 - m2) < 1e-6 ? 1.0 : 0.0;
    if (flat1 || flat2) return 0.0;
    return std::clamp((s12 / n - m1 * m2) / std::sqrt(v1 * v2), -1.0, 1.0);
}

void require_same_shape(const GrayFrame& a, const GrayFrame& b, const char* what) {
    if (!a.same_shape(b)) throw InvalidArgument(std::string(what) + ": frame dimensions differ");
}

double frame_mean(const GrayFrame& f) {
    if (f.empty()) return 0.0;
    return std::accumulate(f.raw().begin(), f.raw().end(), 0.0) / static_cast<double>(f.size());
}

}  // namespace

double radiometric_similarity(const GrayFrame& f1, const GrayFrame& f2, int x, int y, int w) {
    require_same_shape(f1, f2, "radiometric_similarity");
    if (w < 0 || x - w < 0 || y - w < 0 || x + w >= f1.width() || y + w >= f1.height())
        throw InvalidArgument("similarity window outside frame");
    return similarity_clamped(f1, f2, x, y, w);
}

BackgroundState initialize_background(const GrayFrame& first, const BackgroundParams& params) {
    params.validate();
    BackgroundState s;
    s.params = params;
    s.background = first;
    s.history.push_front(frame_mean(first));
    s.threshold = params.initial_threshold;
    s.initialized = true;
    return s;
}

MotionMasks motion_masks(const GrayFrame& curr, const GrayFrame& prev, const BackgroundState& state) {
    if (!state.initialized) throw InvalidArgument("motion_masks: background state not initialized");
    require_same_shape(curr, prev, "motion_masks");
    require_same_shape(curr, state.background, "motion_masks");
    const int W = curr.width(), H = curr.height(), w = state.params.window_radius;
    MotionMasks m{BinaryMask(W, H), BinaryMask(W, H), BinaryMask(W, H)};
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const double r = similarity_clamped(curr, prev, x, y, w);
            const bool temporal = (1.0 - r) > state.params.similarity_threshold;
            const bool diff = std::abs(curr(x, y) - state.background(x, y)) > state.threshold;
            m.temporal(x, y) = temporal;
            m.difference(x, y) = diff;
            m.fused(x, y) = temporal && diff;
        }
    return m;
}

BackgroundState update_background(BackgroundState state, const GrayFrame& curr,
                                  std::optional<double> forced_rate, const BinaryMask* hold) {
    if (!state.initialized) {
        return initialize_background(curr, state.params);
    }
    require_same_shape(curr, state.background, "update_background");
    if (hold && (hold->width() != curr.width() || hold->height() != curr.height()))
        throw InvalidArgument("update_background: hold mask size differs from the frame");
    const double now = frame_mean(curr);
    state.history.push_front(now);
    while (state.history.size() > 6) state.history.pop_back();

    double alpha;
    if (forced_rate) {
        alpha = *forced_rate;
    } else {
        const double older = state.history.back();  // E(t-5) once the history is full
        const double denom = std::max(now, older);
        const double gain = denom > 0 ? std::abs(now - older) / denom : 0.0;
        alpha = state.params.base_rate + state.params.gain_slope * gain;
    }
    alpha = std::clamp(alpha, 0.0, 1.0);
    state.last_rate = alpha;
    auto b = state.background.pixels();
    auto in = curr.pixels();
    for (std::size_t i = 0; i < b.size(); ++i)
        if (!hold || !hold->raw()[i]) b[i] = (1.0 - alpha) * b[i] + alpha * in[i];
    return state;
}

std::array<long, 256> difference_histogram(const GrayFrame& curr, const GrayFrame& prev) {
    require_same_shape(curr, prev, "difference_histogram");
    std::array<long, 256> h{};
    auto a = curr.pixels(), b = prev.pixels();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const int d = std::abs(int(quantize8(a[i])) - int(quantize8(b[i])));
        ++h[static_cast<std::size_t>(d)];
    }
    return h;
}

namespace {

// Probability mass of |n| falling in level k for n ~ N(0, sigma^2), sigma in levels.
double folded_bin_mass(int k, double sigma) {
    const double s = sigma * std::sqrt(2.0);
    if (k == 0) return std::erf(0.5 / s);
    return std::erf((k + 0.5) / s) - std::erf((k - 0.5) / s);
}

}  // namespace

NoiseModel fit_adaptive_threshold(const std::array<long, 256>& hist) {
    const long total = std::accumulate(hist.begin(), hist.end(), 0L);
    if (total <= 0) throw InvalidArgument("fit_adaptive_threshold: empty histogram");
    for (long c : hist)
        if (c < 0) throw InvalidArgument("fit_adaptive_threshold: negative bin");

    std::array<double, 256> p{};
    for (std::size_t k = 0; k < 256; ++k) p[k] = static_cast<double>(hist[k]) / total;

    constexpr double kSigmaFloor = 1e-6;
    // Errors within this distance of the incumbent count as ties, which go to the smaller T.
    constexpr double kTieTolerance = 1e-14;
    NoiseModel best;
    best.histogram = hist;
    best.fit_error = std::numeric_limits<double>::infinity();
    double prior = 0, second_moment = 0;
    for (int T = 0; T < 256; ++T) {
        prior += p[static_cast<std::size_t>(T)];
        second_moment += static_cast<double>(T) * T * p[static_cast<std::size_t>(T)];
        const double sigma =
            prior > 0 ? std::max(std::sqrt(second_moment / prior), kSigmaFloor) : kSigmaFloor;
        double err = 0;
        for (int k = 0; k < 256; ++k) {
            const double r = prior * folded_bin_mass(k, sigma) - p[static_cast<std::size_t>(k)];
            err += r * r;
        }
        if (err < best.fit_error - kTieTolerance) {
            best.fit_error = err;
            best.threshold = T;
            best.prior_background = prior;
            best.sigma = sigma / 255.0;
        }
    }
    return best;
}

BinaryMask erode3(const BinaryMask& m) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            std::uint8_t v = 1;
            for (int dy = -1; dy <= 1 && v; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (m.contains(x + dx, y + dy) && !m(x + dx, y + dy)) {
                        v = 0;
                        break;
                    }
            out(x, y) = v;
        }
    return out;
}

BinaryMask dilate(const BinaryMask& m, int radius) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            std::uint8_t v = 0;
            for (int dy = -radius; dy <= radius && !v; ++dy)
                for (int dx = -radius; dx <= radius; ++dx)
                    if (m.contains(x + dx, y + dy) && m(x + dx, y + dy)) {
                        v = 1;
                        break;
                    }
            out(x, y) = v;
        }
    return out;
}

BinaryMask dilate3(const BinaryMask& m) { return dilate(m, 1); }

BinaryMask median3(const BinaryMask& m) {
    BinaryMask out(m.width(), m.height());
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) {
            int ones = 0, n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (m.contains(x + dx, y + dy)) {
                        ++n;
                        ones += m(x + dx, y + dy) ? 1 : 0;
                    }
            out(x, y) = 2 * ones > n;
        }
    return out;
}

BinaryMask open3(const BinaryMask& m) { return dilate3(erode3(m)); }
BinaryMask close3(const BinaryMask& m) { return erode3(dilate3(m)); }

BinaryMask clean_mask(const BinaryMask& m) { return close3(open3(median3(m))); }

std::string save_background(const BackgroundState& s) {
    std::ostringstream out;
    out << "vvtrack-background v2\n";
    out << "size " << s.background.width() << ' ' << s.background.height() << '\n';
    const auto& p = s.params;
    out << "params " << p.window_radius << ' ' << format_double(p.base_rate) << ' '
        << format_double(p.gain_slope) << ' ' << format_double(p.similarity_threshold) << ' '
        << format_double(p.initial_threshold) << ' ' << (p.adaptive_threshold ? 1 : 0) << ' '
        << (p.selective_update ? 1 : 0) << ' ' << p.hold_radius << ' ' << format_double(p.ghost_fraction) << '\n';
    out << "threshold " << format_double(s.threshold) << '\n';
    out << "rate " << format_double(s.last_rate) << '\n';
    out << "history " << s.history.size();
    for (double v : s.history) out << ' ' << format_double(v);
    out << '\n';
    for (int y = 0; y < s.background.height(); ++y) {
        out << "row";
        for (int x = 0; x < s.background.width(); ++x) out << ' ' << format_double(s.background(x, y));
        out << '\n';
    }
    return out.str();
}

BackgroundState load_background(std::istream& in, const std::string& source) {
    LineReader r(in, source);
    r.expect_header("vvtrack-background", 2);
    auto size = r.expect("size");
    if (size.size() != 2) r.fail("size needs 2 values");
    const long W = LineReader::to_long(size[0]), H = LineReader::to_long(size[1]);
    if (W <= 0 || H <= 0 || W > 100000 || H > 100000) r.fail("bad size");
    BackgroundState s;
    auto p = r.expect("params");
    if (p.size() != 9) r.fail("params needs 9 values");
    s.params.window_radius = static_cast<int>(LineReader::to_long(p[0]));
    s.params.base_rate = parse_double(p[1]);
    s.params.gain_slope = parse_double(p[2]);
    s.params.similarity_threshold = parse_double(p[3]);
    s.params.initial_threshold = parse_double(p[4]);
    s.params.adaptive_threshold = LineReader::to_long(p[5]) != 0;
    s.params.selective_update = LineReader::to_long(p[6]) != 0;
    s.params.hold_radius = static_cast<int>(LineReader::to_long(p[7]));
    s.params.ghost_fraction = parse_double(p[8]);
    s.params.validate();
    auto t = r.expect("threshold");
    if (t.size() != 1) r.fail("threshold needs 1 value");
    s.threshold = parse_double(t[0]);
    if (s.threshold < 0 || s.threshold > 1) r.fail("threshold outside [0,1]");
    auto rate = r.expect("rate");
    if (rate.size() != 1) r.fail("rate needs 1 value");
    s.last_rate = parse_double(rate[0]);
    auto hist = r.expect("history");
    if (hist.empty()) r.fail("history needs a count");
    const long n = LineReader::to_long(hist[0]);
    if (n < 0 || n > 6 || static_cast<long>(hist.size()) != n + 1) r.fail("bad history");
    for (long i = 0; i < n; ++i) s.history.push_back(parse_double(hist[static_cast<std::size_t>(i + 1)]));
    s.background = GrayFrame(static_cast<int>(W), static_cast<int>(H));
    for (int y = 0; y < H; ++y) {
        auto row = r.expect("row");
        if (static_cast<long>(row.size()) != W) r.fail("row has wrong length");
        for (int x = 0; x < W; ++x) s.background(x, y) = parse_double(row[static_cast<std::size_t>(x)]);
    }
    s.initialized = true;
    return s;
}

BinaryMask ghost_regions(const BinaryMask& moving, const GrayFrame& curr, const GrayFrame& prev, double threshold,
                         double fraction) {
    require_same_shape(curr, prev, "ghost_regions");
    if (moving.width() != curr.width() || moving.height() != curr.height())
        throw InvalidArgument("ghost_regions: mask size differs from the frame");
    const int W = curr.width(), H = curr.height();
    BinaryMask out(W, H);
    std::vector<int> label(moving.size(), -1);
    std::vector<int> stack, members;
    for (int start = 0; start < W * H; ++start) {
        if (!moving.raw()[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) continue;
        members.clear();
        stack.assign(1, start);
        label[static_cast<std::size_t>(start)] = start;
        long changed = 0;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            members.push_back(i);
            const int x = i % W, y = i / W;
            changed += std::abs(curr(x, y) - prev(x, y)) > threshold;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
                    const auto j = static_cast<std::size_t>(ny * W + nx);
                    if (!moving.raw()[j] || label[j] >= 0) continue;
                    label[j] = start;
                    stack.push_back(ny * W + nx);
                }
        }
        if (static_cast<double>(changed) < fraction * static_cast<double>(members.size()))
            for (const int i : members) out.raw()[static_cast<std::size_t>(i)] = 1;
    }
    return out;
}

MotionDetector::MotionDetector(BackgroundParams params) : params_(params) { params_.validate(); }

MotionMasks MotionDetector::process(const GrayFrame& frame) {
    if (!state_.initialized) {
        state_ = initialize_background(frame, params_);
        prev_ = frame;
        const int W = frame.width(), H = frame.height();
        return {BinaryMask(W, H), BinaryMask(W, H), BinaryMask(W, H)};
    }
    if (params_.adaptive_threshold) {
        noise_ = fit_adaptive_threshold(difference_histogram(frame, prev_));
        state_.threshold = noise_->threshold / 255.0;
    }
    MotionMasks masks = motion_masks(frame, prev_, state_);
    if (params_.selective_update) {
        BinaryMask hold = params_.hold_radius > 0 ? dilate(masks.fused, params_.hold_radius) : masks.fused;
        const BinaryMask ghosts = params_.ghost_fraction > 0
                                      ? ghost_regions(masks.fused, frame, prev_, state_.threshold, params_.ghost_fraction)
                                      : BinaryMask(frame.width(), frame.height());
        const BinaryMask absorb = params_.hold_radius > 0 ? dilate(ghosts, params_.hold_radius) : ghosts;
        for (std::size_t i = 0; i < hold.size(); ++i)
            if (absorb.raw()[i]) hold.raw()[i] = 0;
        state_ = update_background(std::move(state_), frame, std::nullopt, &hold);
        auto b = state_.background.pixels();
        const auto in = frame.pixels();
        for (std::size_t i = 0; i < b.size(); ++i)
            if (absorb.raw()[i]) b[i] = in[i];
    } else {
        state_ = update_background(std::move(state_), frame);
    }
    prev_ = frame;
    return masks;
}

}  // namespace vvtrack
