#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vvtrack/image.hpp"
#include "vvtrack/vocabulary.hpp"

namespace vvtrack {

inline constexpr int kPatchSide = 32;
inline constexpr int kPatchDim = kPatchSide * kPatchSide;

// Box centre and a multiplicative scale on the species' template size.
struct State {
    double cx = 0, cy = 0, s = 1;
    bool operator==(const State&) const = default;
};

struct Particle {
    State x, v, pbest;
    double pbest_fit = 0;
};

struct TrackerParams {
    int particles = 50;
    int iterations = 20;
    double anneal = 0.3;                         // c: disturbance covariance is sigma0 * exp(-c n)
    std::array<double, 3> sigma0{64, 64, 0.0025};  // diagonal, (cx, cy, s)
    int subspace_rank = 8;                       // q
    int window = 16;                             // W
    int update_every = 5;                        // u
    double tau = 0.1;                            // per-pixel acceptance threshold in selective updates
    double eta = 4;                              // repulsion magnitude, px
    double floor = 1e-12;                        // likelihood floor
    int patience = 10;                           // L: frames at the floor before a track ends
    double sigma_o2 = 0.05 * kPatchDim;          // residual variance of the observation model
    int early_stop = 3;                          // iterations without a gbest change
    bool freeze_scale = false;
    bool predict_motion = true;                  // constant-velocity prediction seeds each frame
    double min_scale = 0.5, max_scale = 2.0;     // s is clamped here; a shrinking box otherwise fits any flat patch
    double mask_margin = 1.0;                    // px added around a winner's box when a loser masks it
    double min_visible = 0.25;                   // share of samples, in frame and unmasked, a candidate needs
    double residual_cap = 0.2;                   // per-sample residual beyond which a sample counts as an outlier
    std::uint64_t seed = 0;

    void validate() const;
};

using StepRng = std::mt19937_64;

// Mean patch plus an orthonormal basis of the mean-removed appearance.
struct Subspace {
    Vec mean;
    std::vector<Vec> basis;  // each kPatchDim long

    Vec reconstruct(const Vec& o) const;  // mean + U U^T (o - mean)
    // mean + U c with c fitted by least squares on the samples where keep[j] holds.
    Vec reconstruct(const Vec& o, const std::vector<bool>& keep) const;
};

struct Species {
    int id = 0;
    std::string label;
    std::vector<Particle> particles;
    State gbest;
    double gbest_fit = 0;
    State previous;           // gbest at the end of the last frame
    State velocity{0, 0, 0};  // last frame-to-frame gbest displacement; s component unused
    double w = 0, h = 0;  // box size at s = 1
    Subspace model;
    std::deque<Vec> window;
    int frames_since_recompute = 0;
    std::set<int> occluded_with;
    std::vector<Box> excluded;  // winners' boxes, masked out of observe after losing a competition
    int frames_at_floor = 0;
    bool terminated = false;

    Box box(const State& x) const { return Box::centered(x.cx, x.cy, w * x.s, h * x.s); }
    Box box() const { return box(gbest); }
};

// 32x32 bilinear resampling of the box; samples outside the frame replicate the border.
Vec sample_patch(const GrayFrame& f, const Box& box);

// exp(-||o - recon(o)||^2 / sigma_o^2) over the patch samples not inside `sp.excluded`, the masked
// residual rescaled to the full patch; floored.
double observe(const GrayFrame& f, const Species& sp, const State& x, const TrackerParams& params);

// Disturbance covariance diagonal at iteration n.
std::array<double, 3> annealed_sigma(const TrackerParams& params, int n);

using Fitness = std::function<double(const State&)>;

struct SwarmStep {
    std::array<double, 3> force{0, 0, 0};  // repulsion, scaled by |r3| per particle
    bool zero_noise = false;               // test hook: epsilon forced to 0
};

// One annealed-Gaussian PSO iteration over the particles; gbest only ever improves.
void step_swarm(std::vector<Particle>& particles, State& gbest, double& gbest_fit, const Fitness& fitness, int n,
                StepRng& rng, const TrackerParams& params, const SwarmStep& extra = {});

void step_particles(Species& sp, const GrayFrame& f, int n, StepRng& rng, const TrackerParams& params);

// Scatters particles around gbest for a new frame and re-scores pbest and gbest on it.
// Particle 0 sits on gbest and particle 1 on `previous`.
void reset_swarm(Species& sp, const GrayFrame& f, StepRng& rng, const TrackerParams& params);

struct CompetitionArena {
    int k1 = 0, k2 = 0;  // species ids, k1 < k2
    Box overlap;
    std::array<double, 2> power{0, 0};
    std::array<double, 2> interactive{0, 0};
    int winner = -1;  // species id
};

std::vector<CompetitionArena> detect_occlusion(const std::vector<Species>& species);

// Shares of two powers; the pair sums to exactly 1. Zero total splits evenly.
std::array<double, 2> normalize_powers(double p1, double p2);

// Scores how well each species, fitted to its samples outside the overlap, predicts the samples inside
// it (per-sample error on the full-patch scale) and picks the winner (ties to the lower id).
void compete(CompetitionArena& arena, const GrayFrame& f, const std::vector<Species>& species,
             const TrackerParams& params);

// eta * overlap_area / box_area(k1) along the unit vector from k2's centre to k1's centre.
// Coincident centres draw a direction from rng.
std::array<double, 3> repulsion_force(const Species& k1, const Species& k2, double eta, StepRng& rng);

void step_with_repulsion(Species& sp, const Species& other, const GrayFrame& f, int n, StepRng& rng,
                         const TrackerParams& params);

struct UpdateStats {
    int overlap_pixels = 0;
    int accepted_overlap_pixels = 0;
    bool recomputed = false;
};

// Appends the gbest patch to the window, overlap pixels gated by reconstruction error.
UpdateStats selective_update(Species& sp, const GrayFrame& f, const std::vector<CompetitionArena>& arenas,
                             const TrackerParams& params);

// Mean and top-q left singular vectors of the mean-removed window.
Subspace learn_subspace(const std::deque<Vec>& window, int rank);

Species init_species(int id, const std::string& label, const GrayFrame& f, const Box& box,
                     const TrackerParams& params);

struct InitialTrack {
    Box box;
    std::string label;
};

struct TrackRecord {
    int frame = 0;
    int id = 0;
    std::string label;
    double cx = 0, cy = 0, s = 1, w = 0, h = 0;
    double fit = 0;

    Box box() const { return Box::centered(cx, cy, w, h); }
};

struct TrackingResult {
    std::vector<TrackRecord> records;  // frame-major, ids ascending within a frame
    std::vector<std::pair<int, int>> terminated;  // (id, frame at which the track ended)
};

// Tracks start on frames[start_frame] from the given boxes; ids are assigned in order.
TrackingResult track_sequence(const std::vector<GrayFrame>& frames, const std::vector<InitialTrack>& initial,
                              const TrackerParams& params, int start_frame = 0);

nlohmann::json track_to_json(const TrackRecord& r);
TrackRecord track_from_json(const nlohmann::json& j);
std::string tracks_to_jsonl(const std::vector<TrackRecord>& records);
std::vector<TrackRecord> tracks_from_jsonl(const std::string& text, const std::string& source = "<memory>");

// One fixed colour per id; box outlines drawn one pixel wide.
Rgb track_color(int id);
RgbFrame draw_tracks(const RgbFrame& f, const std::vector<TrackRecord>& records);

}  // namespace vvtrack
