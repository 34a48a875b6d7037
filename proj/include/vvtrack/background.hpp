#pragma once

#include <array>
#include <deque>
#include <iosfwd>
#include <optional>
#include <string>

#include "vvtrack/image.hpp"

namespace vvtrack {

struct BackgroundParams {
    int window_radius = 1;         // radiometric similarity window is (2w+1)^2
    double base_rate = 0.05;       // a, in [0.04, 0.06]
    double gain_slope = 0.1;       // b
    double similarity_threshold = 0.3;  // temporal mask fires when 1 - R exceeds this
    double initial_threshold = 0.1;     // T_b before the first fit
    bool adaptive_threshold = true;
    // Pixels where M fired, grown by hold_radius, keep their background value for the frame, so a
    // passing object leaves no trail in B. Off gives the plain recursive filter everywhere.
    bool selective_update = true;
    int hold_radius = 1;
    // With selective updates, a connected region of M in which fewer than this share of pixels
    // changed since the last frame is a ghost (background uncovered by an object that left) and is
    // copied into B at once. 0 disables.
    double ghost_fraction = 0.03;

    void validate() const;
};

struct BackgroundState {
    BackgroundParams params;
    GrayFrame background;            // B^t
    std::deque<double> history;      // frame means, newest first, at most 6
    double threshold = 0.1;          // T_b in [0,1]
    double last_rate = 0.0;          // alpha used by the last update
    bool initialized = false;
};

// Frame-difference histogram and the fitted zero-mean Gaussian noise model.
struct NoiseModel {
    std::array<long, 256> histogram{};  // |I^t - I^{t-1}| in gray levels
    double prior_background = 0.0;      // p(B)
    double sigma = 0.0;                 // noise std-dev in [0,1] intensity units
    int threshold = 0;                  // T in gray levels
    double fit_error = 0.0;             // e_Min at T
};

struct MotionMasks {
    BinaryMask temporal;    // I_m
    BinaryMask difference;  // F_m
    BinaryMask fused;       // M = I_m AND F_m
};

// Normalized cross-correlation of the (2w+1)^2 windows centered at (x,y).
// Both windows flat: 1 if their means agree within 1e-6, else 0. One flat: 0.
double radiometric_similarity(const GrayFrame& f1, const GrayFrame& f2, int x, int y, int w);

BackgroundState initialize_background(const GrayFrame& first, const BackgroundParams& params = {});

MotionMasks motion_masks(const GrayFrame& curr, const GrayFrame& prev, const BackgroundState& state);

// alpha = a + b |E(t) - E(t-5)| / max(E(t), E(t-5)); B' = B + alpha (I - B).
// `forced_rate` bypasses the adaptive rate. Pixels set in `hold` keep B.
BackgroundState update_background(BackgroundState state, const GrayFrame& curr,
                                  std::optional<double> forced_rate = std::nullopt, const BinaryMask* hold = nullptr);

std::array<long, 256> difference_histogram(const GrayFrame& curr, const GrayFrame& prev);

// Connected (8-neighbour) regions of `moving` where fewer than `fraction` of the pixels differ
// between curr and prev by more than `threshold`.
BinaryMask ghost_regions(const BinaryMask& moving, const GrayFrame& curr, const GrayFrame& prev, double threshold,
                         double fraction);

// Exhaustive search of T in 0..255 minimizing the Gaussian fit error of the
// difference histogram; ties go to the smaller T.
NoiseModel fit_adaptive_threshold(const std::array<long, 256>& hist);

// 3x3 median, then 3x3 opening, then 3x3 closing. Out-of-frame pixels are ignored.
// The open-close stage is idempotent; the median stage is not, so clean_mask(clean_mask(m))
// can still shave corners that a single pass keeps.
BinaryMask clean_mask(const BinaryMask& m);
BinaryMask open3(const BinaryMask& m);
BinaryMask close3(const BinaryMask& m);
BinaryMask erode3(const BinaryMask& m);
BinaryMask dilate3(const BinaryMask& m);
BinaryMask median3(const BinaryMask& m);
BinaryMask dilate(const BinaryMask& m, int radius);

std::string save_background(const BackgroundState& s);
BackgroundState load_background(std::istream& in, const std::string& source = "<stream>");

// Per-frame driver: fits T_b on the frame difference, computes masks, updates B.
class MotionDetector {
public:
    explicit MotionDetector(BackgroundParams params = {});

    // Masks for this frame. The first frame only seeds the model and yields empty masks.
    MotionMasks process(const GrayFrame& frame);

    const BackgroundState& state() const noexcept { return state_; }
    const std::optional<NoiseModel>& last_noise_model() const noexcept { return noise_; }

private:
    BackgroundParams params_;
    BackgroundState state_;
    GrayFrame prev_;
    std::optional<NoiseModel> noise_;
};

}  // namespace vvtrack
