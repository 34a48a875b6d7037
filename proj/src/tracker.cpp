#include "vvtrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vvtrack/error.hpp"

namespace vvtrack {

void TrackerParams::validate() const {
    if (particles < 1) throw InvalidArgument("tracker particles must be >= 1");
    if (iterations < 1) throw InvalidArgument("tracker iterations must be >= 1");
    if (anneal < 0) throw InvalidArgument("tracker anneal must be >= 0");
    for (double s : sigma0)
        if (s < 0) throw InvalidArgument("tracker sigma0 entries must be >= 0");
    if (subspace_rank < 1 || subspace_rank > kPatchDim) throw InvalidArgument("subspace_rank must be in [1,1024]");
    if (window < 1) throw InvalidArgument("tracker window must be >= 1");
    if (update_every < 1) throw InvalidArgument("update_every must be >= 1");
    if (!(tau > 0)) throw InvalidArgument("tau must be > 0");
    if (eta < 0) throw InvalidArgument("eta must be >= 0");
    if (!(floor > 0) || floor >= 1) throw InvalidArgument("likelihood floor must be in (0,1)");
    if (patience < 1) throw InvalidArgument("patience must be >= 1");
    if (!(sigma_o2 > 0)) throw InvalidArgument("sigma_o2 must be > 0");
    if (early_stop < 1) throw InvalidArgument("early_stop must be >= 1");
    if (!(mask_margin >= 0)) throw InvalidArgument("mask_margin must be >= 0");
    if (!(min_visible > 0) || min_visible > 1) throw InvalidArgument("min_visible must be in (0,1]");
    if (!(residual_cap > 0)) throw InvalidArgument("residual_cap must be > 0");
    if (!(min_scale > 0) || !(max_scale >= min_scale)) throw InvalidArgument("scale range must satisfy 0 < min <= max");
}

Vec Subspace::reconstruct(const Vec& o) const {
    Vec r = mean;
    for (const Vec& u : basis) {
        double dot = 0;
        for (std::size_t j = 0; j < o.size(); ++j) dot += u[j] * (o[j] - mean[j]);
        for (std::size_t j = 0; j < o.size(); ++j) r[j] += dot * u[j];
    }
    return r;
}

Vec Subspace::reconstruct(const Vec& o, const std::vector<bool>& keep) const {
    const auto q = static_cast<Eigen::Index>(basis.size());
    Vec r = mean;
    if (q == 0) return r;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q);
    for (std::size_t j = 0; j < o.size(); ++j) {
        if (!keep[j]) continue;
        for (Eigen::Index a = 0; a < q; ++a) {
            const double ua = basis[static_cast<std::size_t>(a)][j];
            rhs(a) += ua * (o[j] - mean[j]);
            for (Eigen::Index b = 0; b <= a; ++b) G(a, b) += ua * basis[static_cast<std::size_t>(b)][j];
        }
    }
    // A small ridge keeps directions the visible samples cannot see at zero.
    for (Eigen::Index a = 0; a < q; ++a) {
        G(a, a) += 1e-9;
        for (Eigen::Index b = 0; b < a; ++b) G(b, a) = G(a, b);
    }
    const Eigen::VectorXd c = G.ldlt().solve(rhs);
    for (Eigen::Index a = 0; a < q; ++a)
        for (std::size_t j = 0; j < o.size(); ++j) r[j] += c(a) * basis[static_cast<std::size_t>(a)][j];
    return r;
}

namespace {

// Continuous coordinates of patch sample j.
std::pair<double, double> sample_point(const Box& b, int j) {
    const int i = j % kPatchSide, k = j / kPatchSide;
    return {b.x + (i + 0.5) * b.w / kPatchSide, b.y + (k + 0.5) * b.h / kPatchSide};
}

bool inside(const Box& b, double x, double y) { return x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h; }

bool in_any(const std::vector<Box>& boxes, double x, double y) {
    return std::any_of(boxes.begin(), boxes.end(), [&](const Box& b) { return inside(b, x, y); });
}

Box grow(const Box& b, double d) { return {b.x - d, b.y - d, b.w + 2 * d, b.h + 2 * d}; }

double frame_overlap(const GrayFrame& f, const Box& b) {
    return intersection_area(b, Box{0, 0, static_cast<double>(f.width()), static_cast<double>(f.height())});
}

// A sample that misses by more than `cap` is an outlier (a stray occluder pixel, a mask edge) and
// costs no more than cap^2.
double capped_square(double d, double cap) { return std::min(d * d, cap * cap); }

// Squared residual over samples selected by `keep`; returns the number of samples used.
template <class Keep>
int residual(const GrayFrame& f, const Species& sp, const Box& b, double cap, Keep&& keep, double* out) {
    const Vec o = sample_patch(f, b);
    std::vector<bool> mask(kPatchDim);
    int used = 0;
    for (int j = 0; j < kPatchDim; ++j) {
        const auto [x, y] = sample_point(b, j);
        mask[static_cast<std::size_t>(j)] = keep(x, y);
        used += mask[static_cast<std::size_t>(j)];
    }
    // Coefficients come from the kept samples only, so masked pixels cannot leak in.
    const Vec r = used == kPatchDim ? sp.model.reconstruct(o) : sp.model.reconstruct(o, mask);
    double e = 0;
    for (std::size_t j = 0; j < o.size(); ++j)
        if (mask[j]) e += capped_square(o[j] - r[j], cap);
    *out = e;
    return used;
}

}  // namespace

Vec sample_patch(const GrayFrame& f, const Box& box) {
    if (f.empty()) throw InvalidArgument("sample_patch: empty frame");
    Vec o(kPatchDim);
    const int W = f.width(), H = f.height();
    for (int j = 0; j < kPatchDim; ++j) {
        const auto [px, py] = sample_point(box, j);
        const double u = std::clamp(px - 0.5, 0.0, W - 1.0), v = std::clamp(py - 0.5, 0.0, H - 1.0);
        const int x0 = std::min(static_cast<int>(u), W - 1), y0 = std::min(static_cast<int>(v), H - 1);
        const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
        const double ax = u - x0, ay = v - y0;
        o[static_cast<std::size_t>(j)] = (1 - ay) * ((1 - ax) * f(x0, y0) + ax * f(x1, y0)) +
                                         ay * ((1 - ax) * f(x0, y1) + ax * f(x1, y1));
    }
    return o;
}

double observe(const GrayFrame& f, const Species& sp, const State& x, const TrackerParams& params) {
    const Box b = sp.box(x);
    if (!(x.s > 0) || frame_overlap(f, b) <= 0) return params.floor;
    const double W = f.width(), H = f.height();
    double e = 0;
    // Off-frame samples are border copies, not observations.
    const int used = residual(
        f, sp, b, params.residual_cap,
        [&](double px, double py) { return px >= 0 && py >= 0 && px < W && py < H && !in_any(sp.excluded, px, py); },
        &e);
    // Too little of the candidate is seen to judge it; the swarm then stays on its prediction.
    if (used < params.min_visible * kPatchDim) return params.floor;
    // Scaled to a full patch so candidates hiding more of themselves gain nothing.
    e *= static_cast<double>(kPatchDim) / used;
    return std::max(params.floor, std::exp(-e / params.sigma_o2));
}

std::array<double, 3> annealed_sigma(const TrackerParams& params, int n) {
    if (n < 0) throw InvalidArgument("iteration index must be >= 0");
    const double k = std::exp(-params.anneal * n);
    return {params.sigma0[0] * k, params.sigma0[1] * k, params.sigma0[2] * k};
}

void step_swarm(std::vector<Particle>& particles, State& gbest, double& gbest_fit, const Fitness& fitness, int n,
                StepRng& rng, const TrackerParams& params, const SwarmStep& extra) {
    const auto sig = annealed_sigma(params, n);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const bool has_force = extra.force[0] != 0 || extra.force[1] != 0 || extra.force[2] != 0;
    for (auto& p : particles) {
        const double r3 = has_force ? std::abs(gauss(rng)) : 0.0;
        double* x[3] = {&p.x.cx, &p.x.cy, &p.x.s};
        double* v[3] = {&p.v.cx, &p.v.cy, &p.v.s};
        const double pb[3] = {p.pbest.cx, p.pbest.cy, p.pbest.s};
        const double gb[3] = {gbest.cx, gbest.cy, gbest.s};
        for (int d = 0; d < 3; ++d) {
            const double r1 = std::abs(gauss(rng)), r2 = std::abs(gauss(rng));
            const double eps = gauss(rng) * std::sqrt(sig[static_cast<std::size_t>(d)]);
            *v[d] = r1 * (pb[d] - *x[d]) + r2 * (gb[d] - *x[d]) + (extra.zero_noise ? 0.0 : eps) +
                    r3 * extra.force[static_cast<std::size_t>(d)];
        }
        if (params.freeze_scale) p.v.s = 0;
        p.x.cx += p.v.cx;
        p.x.cy += p.v.cy;
        p.x.s = std::clamp(p.x.s + p.v.s, params.min_scale, params.max_scale);
        const double fit = fitness(p.x);
        if (fit > p.pbest_fit) {
            p.pbest = p.x;
            p.pbest_fit = fit;
        }
        if (fit > gbest_fit) {
            gbest = p.x;
            gbest_fit = fit;
        }
    }
}

void step_particles(Species& sp, const GrayFrame& f, int n, StepRng& rng, const TrackerParams& params) {
    step_swarm(sp.particles, sp.gbest, sp.gbest_fit, [&](const State& x) { return observe(f, sp, x, params); }, n, rng,
               params);
}

void reset_swarm(Species& sp, const GrayFrame& f, StepRng& rng, const TrackerParams& params) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    sp.gbest_fit = observe(f, sp, sp.gbest, params);
    const State g = sp.gbest;
    sp.particles.assign(static_cast<std::size_t>(params.particles), Particle{});
    for (std::size_t i = 0; i < sp.particles.size(); ++i) {
        Particle& p = sp.particles[i];
        p.x = i == 1 ? sp.previous : g;
        if (i > 1) {
            p.x.cx += gauss(rng) * std::sqrt(params.sigma0[0]);
            p.x.cy += gauss(rng) * std::sqrt(params.sigma0[1]);
            const double ds = gauss(rng) * std::sqrt(params.sigma0[2]);
            if (!params.freeze_scale) p.x.s = std::clamp(p.x.s + ds, params.min_scale, params.max_scale);
        }
        p.v = {0, 0, 0};
        p.pbest = p.x;
        p.pbest_fit = observe(f, sp, p.x, params);
        if (p.pbest_fit > sp.gbest_fit) {
            sp.gbest = p.x;
            sp.gbest_fit = p.pbest_fit;
        }
    }
}

std::vector<CompetitionArena> detect_occlusion(const std::vector<Species>& species) {
    std::vector<const Species*> live;
    for (const auto& s : species)
        if (!s.terminated) live.push_back(&s);
    std::sort(live.begin(), live.end(), [](const Species* a, const Species* b) { return a->id < b->id; });
    std::vector<CompetitionArena> arenas;
    for (std::size_t i = 0; i < live.size(); ++i)
        for (std::size_t j = i + 1; j < live.size(); ++j) {
            const Box a = live[i]->box(), b = live[j]->box();
            if (iou(a, b) <= 0) continue;
            CompetitionArena ar;
            ar.k1 = live[i]->id;
            ar.k2 = live[j]->id;
            const double x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
            ar.overlap = {x0, y0, std::min(a.x + a.w, b.x + b.w) - x0, std::min(a.y + a.h, b.y + b.h) - y0};
            arenas.push_back(ar);
        }
    return arenas;
}

std::array<double, 2> normalize_powers(double p1, double p2) {
    if (!(p1 >= 0) || !(p2 >= 0)) throw InvalidArgument("powers must be >= 0");
    const double total = p1 + p2;
    if (total == 0) return {0.5, 0.5};
    // The larger share is formed as 1 - smaller, which makes the pair sum round to exactly 1.
    if (p1 <= p2) {
        const double a = p1 / total;
        return {a, 1.0 - a};
    }
    const double b = p2 / total;
    return {1.0 - b, b};
}

namespace {

const Species& find_species(const std::vector<Species>& species, int id) {
    for (const auto& s : species)
        if (s.id == id) return s;
    throw InvalidArgument("no species with id " + std::to_string(id));
}

}  // namespace

void compete(CompetitionArena& arena, const GrayFrame& f, const std::vector<Species>& species,
             const TrackerParams& params) {
    if (arena.overlap.area() <= 0) throw InvalidArgument("compete: empty overlap");
    const int ids[2] = {arena.k1, arena.k2};
    for (int k = 0; k < 2; ++k) {
        const Species& sp = find_species(species, ids[k]);
        const Box b = sp.box();
        const Vec o = sample_patch(f, b);
        std::vector<bool> clear(kPatchDim);
        int used = 0;
        for (int j = 0; j < kPatchDim; ++j) {
            const auto [x, y] = sample_point(b, j);
            clear[static_cast<std::size_t>(j)] = !inside(arena.overlap, x, y);
            used += !clear[static_cast<std::size_t>(j)];
        }
        // Each model is fitted to its uncontested samples and judged on how well it predicts the
        // contested ones; fitting the overlap itself would let any rich model explain the occluder.
        const Vec r = used == kPatchDim ? sp.model.reconstruct(o) : sp.model.reconstruct(o, clear);
        double e = 0;
        for (std::size_t j = 0; j < o.size(); ++j)
            if (!clear[j]) e += capped_square(o[j] - r[j], params.residual_cap);
        // Per-sample error on the full-patch scale, so the side with the denser grid is not penalised;
        // a side with no sample in the overlap has no evidence against it.
        arena.power[static_cast<std::size_t>(k)] =
            used == 0 ? 1.0 : std::exp(-e * static_cast<double>(kPatchDim) / used / params.sigma_o2);
    }
    arena.interactive = normalize_powers(arena.power[0], arena.power[1]);
    arena.winner = arena.interactive[1] > arena.interactive[0] ? arena.k2 : arena.k1;
}

std::array<double, 3> repulsion_force(const Species& k1, const Species& k2, double eta, StepRng& rng) {
    const Box a = k1.box(), b = k2.box();
    const double overlap = intersection_area(a, b);
    if (overlap <= 0 || a.area() <= 0) return {0, 0, 0};
    double dx = a.cx() - b.cx(), dy = a.cy() - b.cy();
    const double len = std::hypot(dx, dy);
    if (len == 0) {
        const double angle = std::uniform_real_distribution<double>(0, 2 * std::numbers::pi)(rng);
        dx = std::cos(angle);
        dy = std::sin(angle);
    } else {
        dx /= len;
        dy /= len;
    }
    const double mag = eta * overlap / a.area();
    return {mag * dx, mag * dy, 0};
}

void step_with_repulsion(Species& sp, const Species& other, const GrayFrame& f, int n, StepRng& rng,
                         const TrackerParams& params) {
    SwarmStep extra;
    extra.force = repulsion_force(sp, other, params.eta, rng);
    step_swarm(sp.particles, sp.gbest, sp.gbest_fit, [&](const State& x) { return observe(f, sp, x, params); }, n, rng,
               params, extra);
}

Subspace learn_subspace(const std::deque<Vec>& window, int rank) {
    if (window.empty()) throw InvalidArgument("learn_subspace: empty window");
    const std::size_t D = window.front().size();
    const int n = static_cast<int>(window.size());
    Subspace s;
    s.mean.assign(D, 0.0);
    for (const Vec& p : window)
        for (std::size_t j = 0; j < D; ++j) s.mean[j] += p[j] / n;
    Eigen::MatrixXd A(static_cast<Eigen::Index>(D), n);
    for (int c = 0; c < n; ++c)
        for (std::size_t j = 0; j < D; ++j)
            A(static_cast<Eigen::Index>(j), c) = window[static_cast<std::size_t>(c)][j] - s.mean[j];
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    const int keep = std::min<int>(rank, static_cast<int>(sv.size()));
    for (int k = 0; k < keep; ++k) {
        // Directions with no energy carry no appearance information.
        if (sv(k) <= 1e-9 * std::max(sv(0), 1e-300)) break;
        Vec u(D);
        for (std::size_t j = 0; j < D; ++j) u[j] = svd.matrixU()(static_cast<Eigen::Index>(j), k);
        s.basis.push_back(std::move(u));
    }
    return s;
}

UpdateStats selective_update(Species& sp, const GrayFrame& f, const std::vector<CompetitionArena>& arenas,
                             const TrackerParams& params) {
    UpdateStats st;
    std::vector<Box> overlaps;
    for (const auto& a : arenas)
        if (a.k1 == sp.id || a.k2 == sp.id) overlaps.push_back(a.overlap);
    const Box b = sp.box();
    Vec o = sample_patch(f, b);
    if (!overlaps.empty()) {
        std::vector<bool> clear(kPatchDim);
        for (int j = 0; j < kPatchDim; ++j) {
            const auto [x, y] = sample_point(b, j);
            clear[static_cast<std::size_t>(j)] = !in_any(overlaps, x, y);
        }
        // Overlap pixels are judged against a reconstruction fitted to the clear ones.
        const Vec r = sp.model.reconstruct(o, clear);
        for (int j = 0; j < kPatchDim; ++j) {
            if (clear[static_cast<std::size_t>(j)]) continue;
            ++st.overlap_pixels;
            const auto k = static_cast<std::size_t>(j);
            if (std::abs(o[k] - r[k]) < params.tau)
                ++st.accepted_overlap_pixels;
            else
                o[k] = r[k];
        }
    }
    sp.window.push_back(std::move(o));
    while (static_cast<int>(sp.window.size()) > params.window) sp.window.pop_front();
    if (++sp.frames_since_recompute >= params.update_every) {
        sp.model = learn_subspace(sp.window, params.subspace_rank);
        sp.frames_since_recompute = 0;
        st.recomputed = true;
    }
    return st;
}

Species init_species(int id, const std::string& label, const GrayFrame& f, const Box& box,
                     const TrackerParams& params) {
    params.validate();
    if (box.area() <= 0) throw InvalidArgument("initial track box is empty");
    if (frame_overlap(f, box) <= 0) throw InvalidArgument("initial track box lies outside the frame");
    Species sp;
    sp.id = id;
    sp.label = label;
    sp.w = box.w;
    sp.h = box.h;
    sp.gbest = {box.cx(), box.cy(), 1.0};
    sp.previous = sp.gbest;
    Vec patch = sample_patch(f, box);
    sp.model.mean = patch;
    sp.window.push_back(std::move(patch));
    sp.gbest_fit = observe(f, sp, sp.gbest, params);
    sp.particles.assign(static_cast<std::size_t>(params.particles), Particle{sp.gbest, {0, 0, 0}, sp.gbest, sp.gbest_fit});
    return sp;
}

namespace {

TrackRecord record_of(int frame, const Species& sp) {
    const Box b = sp.box();
    return {frame, sp.id, sp.label, sp.gbest.cx, sp.gbest.cy, sp.gbest.s, b.w, b.h, sp.gbest_fit};
}

}  // namespace

TrackingResult track_sequence(const std::vector<GrayFrame>& frames, const std::vector<InitialTrack>& initial,
                              const TrackerParams& params, int start_frame) {
    params.validate();
    if (initial.empty()) throw InvalidArgument("track_sequence needs at least one initial detection");
    if (start_frame < 0 || start_frame >= static_cast<int>(frames.size()))
        throw InvalidArgument("track_sequence: start frame out of range");
    StepRng rng(params.seed);
    std::vector<Species> species;
    for (std::size_t i = 0; i < initial.size(); ++i)
        species.push_back(init_species(static_cast<int>(i), initial[i].label,
                                       frames[static_cast<std::size_t>(start_frame)], initial[i].box, params));
    TrackingResult out;
    for (const auto& sp : species) out.records.push_back(record_of(start_frame, sp));

    for (int t = start_frame + 1; t < static_cast<int>(frames.size()); ++t) {
        const GrayFrame& f = frames[static_cast<std::size_t>(t)];
        for (auto& sp : species) {
            sp.excluded.clear();
            sp.occluded_with.clear();
            if (sp.terminated) continue;
            // Arenas are judged where the species are expected to be, so an occluder is masked
            // from the first frame it covers.
            sp.previous = sp.gbest;
            sp.gbest.cx += sp.velocity.cx;
            sp.gbest.cy += sp.velocity.cy;
        }
        // Arenas and winners are fixed for the frame so each species optimises one fitness.
        auto arenas = detect_occlusion(species);
        for (auto& a : arenas) {
            compete(a, f, species, params);
            for (auto& sp : species) {
                if (sp.id != a.k1 && sp.id != a.k2) continue;
                sp.occluded_with.insert(sp.id == a.k1 ? a.k2 : a.k1);
                // The loser masks the winner's whole support, which is its overlap wherever the loser
                // moves, grown by the one-pixel reach of bilinear sampling.
                if (sp.id != a.winner) sp.excluded.push_back(grow(find_species(species, a.winner).box(), params.mask_margin));
            }
        }
        for (auto& sp : species) {
            if (sp.terminated) continue;
            const Species* rival = nullptr;
            double best_overlap = 0;
            for (const auto& a : arenas) {
                if (a.k1 != sp.id && a.k2 != sp.id) continue;
                if (a.overlap.area() > best_overlap) {
                    best_overlap = a.overlap.area();
                    rival = &find_species(species, a.k1 == sp.id ? a.k2 : a.k1);
                }
            }
            reset_swarm(sp, f, rng, params);
            int unchanged = 0;
            for (int n = 0; n < params.iterations; ++n) {
                const State before = sp.gbest;
                if (rival)
                    step_with_repulsion(sp, *rival, f, n, rng, params);
                else
                    step_particles(sp, f, n, rng, params);
                unchanged = sp.gbest == before ? unchanged + 1 : 0;
                if (unchanged >= params.early_stop) break;
            }
            if (params.predict_motion) sp.velocity = {sp.gbest.cx - sp.previous.cx, sp.gbest.cy - sp.previous.cy, 0};
        }
        // Update gates follow this frame's competitions at the final boxes: the loser checks every
        // pixel the winner may cover, the winner checks the shared region.
        std::vector<CompetitionArena> gates = detect_occlusion(species);
        for (const auto& a : arenas) {
            const Species& win = find_species(species, a.winner);
            CompetitionArena g = a;
            g.k1 = a.winner == a.k1 ? a.k2 : a.k1;
            g.k2 = -1;
            g.overlap = grow(win.box(), params.mask_margin);
            gates.push_back(g);
        }
        for (auto& sp : species) {
            if (sp.terminated) continue;
            selective_update(sp, f, gates, params);
            sp.frames_at_floor = sp.gbest_fit <= params.floor ? sp.frames_at_floor + 1 : 0;
            if (sp.frames_at_floor >= params.patience) {
                sp.terminated = true;
                out.terminated.emplace_back(sp.id, t);
                continue;
            }
            out.records.push_back(record_of(t, sp));
        }
    }
    return out;
}

nlohmann::json track_to_json(const TrackRecord& r) {
    return {{"frame", r.frame}, {"id", r.id}, {"label", r.label}, {"cx", r.cx}, {"cy", r.cy},
            {"s", r.s},         {"w", r.w},   {"h", r.h},         {"fit", r.fit}};
}

TrackRecord track_from_json(const nlohmann::json& j) {
    try {
        TrackRecord r;
        r.frame = j.at("frame").get<int>();
        r.id = j.at("id").get<int>();
        r.label = j.value("label", std::string());
        r.cx = j.at("cx").get<double>();
        r.cy = j.at("cy").get<double>();
        r.s = j.at("s").get<double>();
        r.w = j.at("w").get<double>();
        r.h = j.at("h").get<double>();
        r.fit = j.at("fit").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad track record: ") + e.what());
    }
}

std::string tracks_to_jsonl(const std::vector<TrackRecord>& records) {
    std::string out;
    for (const auto& r : records) out += track_to_json(r).dump() + "\n";
    return out;
}

std::vector<TrackRecord> tracks_from_jsonl(const std::string& text, const std::string& source) {
    std::vector<TrackRecord> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(track_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(source + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

Rgb track_color(int id) {
    static const Rgb palette[] = {{1, 0, 0}, {0, 1, 0}, {0, 0.4, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}, {1, 0.5, 0}, {1, 1, 1}};
    const int n = static_cast<int>(std::size(palette));
    return palette[((id % n) + n) % n];
}

RgbFrame draw_tracks(const RgbFrame& f, const std::vector<TrackRecord>& records) {
    RgbFrame out = f;
    const int W = f.width(), H = f.height();
    for (const auto& r : records) {
        const Box b = r.box();
        const int x0 = static_cast<int>(std::floor(b.x)), y0 = static_cast<int>(std::floor(b.y));
        const int x1 = static_cast<int>(std::floor(b.x + b.w)), y1 = static_cast<int>(std::floor(b.y + b.h));
        const Rgb c = track_color(r.id);
        auto put = [&](int x, int y) {
            if (x >= 0 && x < W && y >= 0 && y < H) out.set(x, y, c);
        };
        for (int x = x0; x <= x1; ++x) {
            put(x, y0);
            put(x, y1);
        }
        for (int y = y0; y <= y1; ++y) {
            put(x0, y);
            put(x1, y);
        }
    }
    return out;
}

}  // namespace vvtrack
