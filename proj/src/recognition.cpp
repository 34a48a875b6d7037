#include "vvtrack/recognition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "vvtrack/error.hpp"
#include "vvtrack/shadow.hpp"
#include "vvtrack/textio.hpp"

namespace vvtrack {

int OccurrenceTable::class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i)
        if (classes[i] == name) return static_cast<int>(i);
    return -1;
}

void VotingParams::validate() const {
    descriptors.validate();
    quantize.validate();
    if (region_margin < 0) throw InvalidArgument("region_margin must be >= 0");
}

void MeanShiftParams::validate() const {
    if (!(b0 > 0)) throw InvalidArgument("mean-shift b0 must be > 0");
    if (max_iterations < 1) throw InvalidArgument("mean-shift max_iterations must be >= 1");
    if (!(shift_tolerance > 0)) throw InvalidArgument("mean-shift tolerance must be > 0");
    if (!(seed_fraction >= 0 && seed_fraction <= 1)) throw InvalidArgument("mean-shift seed_fraction must be in [0,1]");
}

void RecognitionParams::validate() const {
    voting.validate();
    meanshift.validate();
    if (score_fraction < 0 || score_fraction > 1) throw InvalidArgument("score_fraction must be in [0,1]");
    if (nms_iou < 0 || nms_iou > 1) throw InvalidArgument("nms_iou must be in [0,1]");
    if (!(part_energy_per_part > 0)) throw InvalidArgument("part_energy_per_part must be > 0");
    if (part_search_radius < 0) throw InvalidArgument("part_search_radius must be >= 0");
}

namespace {

bool in_region(const Descriptor& d, const Box& b, double margin) {
    return d.x >= b.x - margin && d.x < b.x + b.w + margin && d.y >= b.y - margin && d.y < b.y + b.h + margin;
}

}  // namespace

OccurrenceTable learn_occurrences(const std::vector<TrainingExample>& examples, const std::vector<std::string>& classes,
                                  const Codebook& cb, const VotingParams& params) {
    params.validate();
    if (classes.empty()) throw InvalidArgument("learn_occurrences: no classes");
    if (cb.size() == 0) throw InvalidArgument("learn_occurrences: empty codebook");
    const std::size_t C = classes.size(), K = static_cast<std::size_t>(cb.size());

    using Key = std::tuple<double, double, double, double>;
    std::vector<std::vector<std::map<Key, double>>> acc(C, std::vector<std::map<Key, double>>(K));
    std::vector<double> sum_w(C, 0), sum_h(C, 0);
    std::vector<long> count(C, 0);
    long used = 0;
    for (const auto& ex : examples) {
        if (ex.class_id < 0 || ex.class_id >= static_cast<int>(C)) throw InvalidArgument("training example class out of range");
        if (ex.box.area() <= 0) throw InvalidArgument("training example has an empty box");
        const auto c = static_cast<std::size_t>(ex.class_id);
        sum_w[c] += ex.box.w;
        sum_h[c] += ex.box.h;
        ++count[c];
        const double scale = std::max(ex.box.w, ex.box.h);
        for (const auto& d : extract_descriptors(ex.frame, params.descriptors)) {
            if (d.is_zero() || !in_region(d, ex.box, params.region_margin)) continue;
            ++used;
            for (const auto& [word, w] : quantize(d.values, cb, params.quantize).soft)
                acc[c][static_cast<std::size_t>(word)][{ex.box.cx() - d.x, ex.box.cy() - d.y, scale, d.scale}] += w;
        }
    }
    for (std::size_t c = 0; c < C; ++c)
        if (count[c] == 0) throw InvalidArgument("learn_occurrences: class '" + classes[c] + "' has no examples");
    if (used == 0) throw DataError("learn_occurrences: no descriptors inside any training box");

    OccurrenceTable t;
    t.classes = classes;
    t.words = cb.size();
    t.occurrences.assign(C, std::vector<std::vector<Occurrence>>(K));
    for (std::size_t c = 0; c < C; ++c) {
        t.templates.push_back({sum_w[c] / count[c], sum_h[c] / count[c]});
        for (std::size_t k = 0; k < K; ++k) {
            double total = 0;
            for (const auto& [key, w] : acc[c][k]) total += w;
            for (const auto& [key, w] : acc[c][k]) {
                const auto [dx, dy, s, fs] = key;
                t.occurrences[c][k].push_back({dx, dy, s, fs, w / total});
            }
        }
    }
    return t;
}

std::vector<Vote> cast_votes(const std::vector<Descriptor>& descs, const Codebook& cb, const OccurrenceTable& table,
                             int class_id, const QuantizeParams& qp) {
    if (class_id < 0 || class_id >= static_cast<int>(table.classes.size())) throw InvalidArgument("cast_votes: bad class");
    if (table.words != cb.size()) throw InvalidArgument("cast_votes: table and codebook sizes differ");
    const auto& occ = table.occurrences[static_cast<std::size_t>(class_id)];
    std::vector<Vote> votes;
    for (const auto& d : descs) {
        if (d.is_zero()) continue;
        for (const auto& [word, p] : quantize(d.values, cb, qp).soft)
            for (const auto& o : occ[static_cast<std::size_t>(word)]) {
                const double f = d.scale / o.feature_scale;
                votes.push_back({d.x + o.dx * f, d.y + o.dy * f, o.scale * f, p * o.weight});
            }
    }
    return votes;
}

double vote_mass(const std::vector<Descriptor>& descs, const Codebook& cb, const OccurrenceTable& table, int class_id,
                 const QuantizeParams& qp) {
    const auto& occ = table.occurrences.at(static_cast<std::size_t>(class_id));
    std::vector<double> word_mass(occ.size(), 0.0);
    for (std::size_t k = 0; k < occ.size(); ++k)
        for (const auto& o : occ[k]) word_mass[k] += o.weight;
    double total = 0;
    for (const auto& d : descs) {
        if (d.is_zero()) continue;
        for (const auto& [word, p] : quantize(d.values, cb, qp).soft) total += p * word_mass[static_cast<std::size_t>(word)];
    }
    return total;
}

namespace {

double kernel_volume(double b) { return 4.0 / 3.0 * std::numbers::pi * b * b * b; }

// Uniform grid over (x,y) holding vote indices; cells are at least as wide as the largest bandwidth.
class VoteIndex {
public:
    VoteIndex(const std::vector<Vote>& votes, double cell) : votes_(votes), cell_(cell) {
        for (std::size_t i = 0; i < votes.size(); ++i) cells_[key(cell_of(votes[i].x), cell_of(votes[i].y))].push_back(i);
    }

    template <class F>
    void for_each_near(double x, double y, F&& f) const {
        const long cx = cell_of(x), cy = cell_of(y);
        for (long j = cy - 1; j <= cy + 1; ++j)
            for (long i = cx - 1; i <= cx + 1; ++i) {
                const auto it = cells_.find(key(i, j));
                if (it == cells_.end()) continue;
                for (std::size_t v : it->second) f(votes_[v]);
            }
    }

private:
    long cell_of(double v) const { return static_cast<long>(std::floor(v / cell_)); }
    static std::int64_t key(long i, long j) { return (static_cast<std::int64_t>(i) << 32) ^ static_cast<std::uint32_t>(j); }

    const std::vector<Vote>& votes_;
    double cell_;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

double density_indexed(const VoteIndex& idx, double x, double y, double s, double b0) {
    const double b = b0 * s;
    double acc = 0;
    idx.for_each_near(x, y, [&](const Vote& v) {
        const double u = ((x - v.x) * (x - v.x) + (y - v.y) * (y - v.y) + (s - v.s) * (s - v.s)) / (b * b);
        if (u < 1) acc += v.weight * (1 - u);
    });
    return acc / kernel_volume(b);
}

}  // namespace

double vote_density(const std::vector<Vote>& votes, double x, double y, double s, double b0) {
    if (!(s > 0) || !(b0 > 0)) throw InvalidArgument("vote_density: scale and b0 must be > 0");
    const double b = b0 * s;
    double acc = 0;
    for (const auto& v : votes) {
        const double u = ((x - v.x) * (x - v.x) + (y - v.y) * (y - v.y) + (s - v.s) * (s - v.s)) / (b * b);
        if (u < 1) acc += v.weight * (1 - u);
    }
    return acc / kernel_volume(b);
}

std::vector<ObjectHypothesis> meanshift_modes(const std::vector<Vote>& votes, const MeanShiftParams& params) {
    params.validate();
    std::vector<Vote> live;
    double max_s = 0;
    for (const auto& v : votes)
        if (v.weight > 0 && v.s > 0) {
            live.push_back(v);
            max_s = std::max(max_s, v.s);
        }
    if (live.empty()) return {};
    // The bandwidth grows with s, and a window may drift up in scale; size cells for the largest.
    const VoteIndex index(live, params.b0 * max_s * 1.5);

    // One seed per occupied (x,y,s) cell of side b/2, at the cell's first vote in vote order. Light
    // cells are skipped: their climbs end in modes that heavier neighbours reach or that score too low.
    std::vector<Vote> seeds;
    {
        std::map<std::tuple<long, long, long>, std::pair<std::size_t, double>> cells;
        std::vector<std::tuple<long, long, long>> order;
        for (std::size_t i = 0; i < live.size(); ++i) {
            const Vote& v = live[i];
            const double c = params.b0 * v.s / 2;
            const auto key = std::make_tuple(static_cast<long>(std::floor(v.x / c)), static_cast<long>(std::floor(v.y / c)),
                                             static_cast<long>(std::floor(v.s / c)));
            auto [it, fresh] = cells.emplace(key, std::make_pair(i, 0.0));
            if (fresh) order.push_back(key);
            it->second.second += v.weight;
        }
        double heaviest = 0;
        for (const auto& [_, c] : cells) heaviest = std::max(heaviest, c.second);
        for (const auto& key : order) {
            const auto& c = cells.at(key);
            if (c.second >= params.seed_fraction * heaviest) seeds.push_back(live[c.first]);
        }
    }

    std::vector<ObjectHypothesis> modes;
    for (const auto& seed : seeds) {
        double x = seed.x, y = seed.y, s = seed.s;
        for (int it = 0; it < params.max_iterations; ++it) {
            const double b = params.b0 * s;
            double wx = 0, wy = 0, ws = 0, wsum = 0;
            index.for_each_near(x, y, [&](const Vote& v) {
                const double u = ((x - v.x) * (x - v.x) + (y - v.y) * (y - v.y) + (s - v.s) * (s - v.s)) / (b * b);
                if (u < 1) {
                    wx += v.weight * v.x;
                    wy += v.weight * v.y;
                    ws += v.weight * v.s;
                    wsum += v.weight;
                }
            });
            if (wsum <= 0) break;
            const double nx = wx / wsum, ny = wy / wsum, ns = ws / wsum;
            const double shift = std::sqrt((nx - x) * (nx - x) + (ny - y) * (ny - y) + (ns - s) * (ns - s));
            x = nx;
            y = ny;
            s = ns;
            if (shift < params.shift_tolerance) break;
        }
        const double score = density_indexed(index, x, y, s, params.b0);
        if (score > 0) modes.push_back({0, x, y, s, score});
    }
    std::stable_sort(modes.begin(), modes.end(), [](const ObjectHypothesis& a, const ObjectHypothesis& b) {
        return std::tie(b.score, a.x, a.y) < std::tie(a.score, b.x, b.y);
    });
    std::vector<ObjectHypothesis> kept;
    for (const auto& m : modes) {
        bool merged = false;
        for (const auto& k : kept) {
            const double b = params.b0 * k.s;
            const double d2 = (m.x - k.x) * (m.x - k.x) + (m.y - k.y) * (m.y - k.y) + (m.s - k.s) * (m.s - k.s);
            if (d2 <= (b / 2) * (b / 2)) {
                merged = true;
                break;
            }
        }
        if (!merged) kept.push_back(m);
    }
    return kept;
}

namespace {

// Lower envelope of parabolas f(q) + w (p - q)^2 evaluated for p = p0 .. p0+m-1.
void dt1d(const std::vector<double>& f, double w, int p0, int m, std::vector<double>& out, std::vector<int>& arg) {
    const int n = static_cast<int>(f.size());
    std::vector<int> v(static_cast<std::size_t>(n));
    std::vector<double> z(static_cast<std::size_t>(n) + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    auto at = [&](int i) { return static_cast<std::size_t>(i); };
    for (int q = 1; q < n; ++q) {
        for (;;) {
            const int r = v[at(k)];
            const double s = ((f[at(q)] + w * q * q) - (f[at(r)] + w * r * r)) / (2 * w * (q - r));
            if (s <= z[at(k)] && k > 0) {
                --k;
                continue;
            }
            if (s <= z[at(k)]) {
                // New parabola dominates everything kept so far.
                v[0] = q;
                z[1] = std::numeric_limits<double>::infinity();
                k = 0;
            } else {
                ++k;
                v[at(k)] = q;
                z[at(k)] = s;
                z[at(k) + 1] = std::numeric_limits<double>::infinity();
            }
            break;
        }
    }
    out.assign(static_cast<std::size_t>(m), 0.0);
    arg.assign(static_cast<std::size_t>(m), 0);
    int j = 0;
    for (int i = 0; i < m; ++i) {
        const int p = p0 + i;
        while (z[at(j) + 1] < p) ++j;
        // Rounded breakpoints can misplace p by one parabola; compare the neighbours exactly.
        double best = std::numeric_limits<double>::infinity();
        int best_q = -1;
        for (int c = std::max(0, j - 1); c <= std::min(k, j + 1); ++c) {
            const int q = v[at(c)];
            const double d = p - q;
            const double val = f[at(q)] + w * (d * d);
            if (val < best || (val == best && q < best_q)) {
                best = val;
                best_q = q;
            }
        }
        out[at(i)] = best;
        arg[at(i)] = best_q;
    }
}

}  // namespace

DistanceTransform distance_transform(const Plane<double>& cost, double wx, double wy, int x0, int y0, int out_w,
                                     int out_h) {
    if (cost.empty()) throw InvalidArgument("distance_transform: empty grid");
    if (!(wx > 0) || !(wy > 0)) throw InvalidArgument("distance_transform: weights must be > 0");
    if (out_w < 1 || out_h < 1) throw InvalidArgument("distance_transform: empty output window");
    for (double v : cost.raw())
        if (!std::isfinite(v)) throw InvalidArgument("distance_transform: costs must be finite");
    const int W = cost.width(), H = cost.height();
    Plane<double> rows(out_w, H);
    Plane<int> row_arg(out_w, H);
    std::vector<double> f, out;
    std::vector<int> arg;
    for (int y = 0; y < H; ++y) {
        f.assign(cost.raw().begin() + static_cast<long>(y) * W, cost.raw().begin() + static_cast<long>(y + 1) * W);
        dt1d(f, wx, x0, out_w, out, arg);
        for (int x = 0; x < out_w; ++x) {
            rows(x, y) = out[static_cast<std::size_t>(x)];
            row_arg(x, y) = arg[static_cast<std::size_t>(x)];
        }
    }
    DistanceTransform dt{Plane<double>(out_w, out_h), Plane<int>(out_w, out_h), Plane<int>(out_w, out_h), x0, y0};
    f.resize(static_cast<std::size_t>(H));
    for (int x = 0; x < out_w; ++x) {
        for (int y = 0; y < H; ++y) f[static_cast<std::size_t>(y)] = rows(x, y);
        dt1d(f, wy, y0, out_h, out, arg);
        for (int y = 0; y < out_h; ++y) {
            const int qy = arg[static_cast<std::size_t>(y)];
            dt.value(x, y) = out[static_cast<std::size_t>(y)];
            dt.arg_y(x, y) = qy;
            dt.arg_x(x, y) = row_arg(x, qy);
        }
    }
    return dt;
}

DistanceTransform distance_transform(const Plane<double>& cost, double wx, double wy) {
    return distance_transform(cost, wx, wy, 0, 0, cost.width(), cost.height());
}

PartMatch match_parts(const std::vector<Plane<double>>& costs, const std::vector<std::pair<int, int>>& offsets,
                      const std::vector<std::pair<double, double>>& weights) {
    if (costs.empty() || costs[0].empty()) throw InvalidArgument("match_parts: empty grid");
    if (offsets.size() != costs.size() || weights.size() != costs.size())
        throw InvalidArgument("match_parts: per-part offsets and weights required");
    const int W = costs[0].width(), H = costs[0].height();
    for (const auto& c : costs)
        if (!c.same_shape(costs[0])) throw InvalidArgument("match_parts: cost maps differ in size");

    std::vector<DistanceTransform> dts;
    for (std::size_t i = 1; i < costs.size(); ++i)
        dts.push_back(distance_transform(costs[i], weights[i].first, weights[i].second, offsets[i].first,
                                         offsets[i].second, W, H));
    PartMatch best;
    best.energy = std::numeric_limits<double>::infinity();
    int bx = 0, by = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double e = costs[0](x, y);
            for (const auto& dt : dts) e += dt.value(x, y);
            if (e < best.energy) {
                best.energy = e;
                bx = x;
                by = y;
            }
        }
    best.locations.emplace_back(bx, by);
    for (const auto& dt : dts) best.locations.emplace_back(dt.arg_x(bx, by), dt.arg_y(bx, by));
    return best;
}

void PartModel::validate() const {
    if (parts.empty()) throw InvalidArgument("part model has no parts");
    for (std::size_t i = 1; i < parts.size(); ++i)
        if (!(parts[i].wx > 0) || !(parts[i].wy > 0)) throw InvalidArgument("part deformation weights must be > 0");
    if (!(reference_scale > 0)) throw InvalidArgument("part model reference scale must be > 0");
    if (tables.classes.size() != parts.size()) throw InvalidArgument("part model needs one table per part");
}

PartMatch match_parts(const PartModel& model, const std::vector<Plane<double>>& costs, double scale) {
    model.validate();
    const double f = scale / model.reference_scale;
    std::vector<std::pair<int, int>> offsets;
    std::vector<std::pair<double, double>> weights;
    for (const auto& p : model.parts) {
        offsets.emplace_back(static_cast<int>(std::lround(p.dx * f)), static_cast<int>(std::lround(p.dy * f)));
        weights.emplace_back(p.wx / (f * f), p.wy / (f * f));
    }
    return match_parts(costs, offsets, weights);
}

PartModel learn_part_model(const std::vector<TrainingExample>& examples, int class_id,
                           const std::vector<std::string>& classes, const Codebook& cb, const VotingParams& params,
                           double deformation_sigma) {
    if (!(deformation_sigma > 0)) throw InvalidArgument("deformation_sigma must be > 0");
    PartModel m;
    m.class_name = classes.at(static_cast<std::size_t>(class_id));
    std::vector<TrainingExample> part_examples;
    double scale_sum = 0;
    double off[3][2] = {{0, 0}, {0, 0}, {0, 0}};
    long n = 0;
    for (const auto& ex : examples) {
        if (ex.class_id != class_id) continue;
        const Box& b = ex.box;
        const double s = std::max(b.w, b.h);
        Box halves[2];
        if (b.h >= b.w) {
            halves[0] = {b.x, b.y, b.w, b.h / 2};
            halves[1] = {b.x, b.y + b.h / 2, b.w, b.h / 2};
        } else {
            halves[0] = {b.x, b.y, b.w / 2, b.h};
            halves[1] = {b.x + b.w / 2, b.y, b.w / 2, b.h};
        }
        part_examples.push_back({ex.frame, 0, b});
        for (int i = 0; i < 2; ++i) {
            part_examples.push_back({ex.frame, i + 1, halves[i]});
            off[i + 1][0] += (halves[i].cx() - b.cx()) / s;
            off[i + 1][1] += (halves[i].cy() - b.cy()) / s;
        }
        scale_sum += s;
        ++n;
    }
    if (n == 0) throw InvalidArgument("learn_part_model: no examples of class '" + m.class_name + "'");
    m.reference_scale = scale_sum / n;
    const double sigma = deformation_sigma * m.reference_scale;
    const char* names[3] = {"root", "part1", "part2"};
    for (int i = 0; i < 3; ++i)
        m.parts.push_back({names[i], off[i][0] / n * m.reference_scale, off[i][1] / n * m.reference_scale,
                           1 / (sigma * sigma), 1 / (sigma * sigma)});
    // Part tables share one pseudo-class namespace; their templates keep each part's own scale.
    m.tables = learn_occurrences(part_examples, {names[0], names[1], names[2]}, cb, params);
    return m;
}

Vec box_bow(const std::vector<Descriptor>& descs, const Box& box, const Codebook& cb, const QuantizeParams& qp) {
    std::vector<Descriptor> inside;
    for (const auto& d : descs)
        if (in_region(d, box, 0.0)) inside.push_back(d);
    return bow_histogram(inside, cb, std::nullopt, qp);
}

Box hypothesis_box(const ObjectHypothesis& h, const ObjectTemplate& t) {
    const double f = h.s / t.scale();
    return Box::centered(h.x, h.y, t.w * f, t.h * f);
}

namespace {

// -log of the blurred vote response, normalized by its frame maximum, over a window.
Plane<double> part_cost_map(const std::vector<Vote>& votes, int W, int H, const PixelRect& win, double s,
                            double scale_tolerance) {
    GrayFrame response(W, H);
    for (const auto& v : votes) {
        if (std::abs(v.s - s) > scale_tolerance * s) continue;
        const int x = static_cast<int>(std::floor(v.x)), y = static_cast<int>(std::floor(v.y));
        if (response.contains(x, y)) response(x, y) += v.weight;
    }
    response = gaussian_blur(response, 1.0);
    const double peak = *std::max_element(response.raw().begin(), response.raw().end());
    Plane<double> cost(win.x1 - win.x0, win.y1 - win.y0);
    for (int y = win.y0; y < win.y1; ++y)
        for (int x = win.x0; x < win.x1; ++x) {
            const double r = peak > 0 ? response(x, y) / peak : 0.0;
            cost(x - win.x0, y - win.y0) = -std::log(r + 1e-3);
        }
    return cost;
}

}  // namespace

std::vector<Recognition> recognize_frame(const GrayFrame& f, const RecognitionModels& models,
                                         const RecognitionParams& params) {
    params.validate();
    const auto& table = models.occurrences;
    const std::vector<Descriptor> descs = extract_descriptors(f, params.voting.descriptors);
    if (std::all_of(descs.begin(), descs.end(), [](const Descriptor& d) { return d.is_zero(); })) return {};

    std::vector<ObjectHypothesis> hyps;
    for (int c = 0; c < static_cast<int>(table.classes.size()); ++c) {
        for (auto h : meanshift_modes(cast_votes(descs, models.codebook, table, c, params.voting.quantize), params.meanshift)) {
            h.class_id = c;
            hyps.push_back(h);
        }
    }
    if (hyps.empty()) return {};
    double best = 0;
    for (const auto& h : hyps) best = std::max(best, h.score);
    std::stable_sort(hyps.begin(), hyps.end(), [](const ObjectHypothesis& a, const ObjectHypothesis& b) {
        return std::tie(b.score, a.class_id) < std::tie(a.score, b.class_id);
    });

    std::vector<Recognition> accepted;
    for (auto h : hyps) {
        if (h.score < params.score_fraction * best) break;
        const std::string& name = table.classes[static_cast<std::size_t>(h.class_id)];
        const ObjectTemplate& tpl = table.templates[static_cast<std::size_t>(h.class_id)];
        Recognition r{h, name, hypothesis_box(h, tpl), std::nullopt};

        const auto pm = std::find_if(models.parts.begin(), models.parts.end(),
                                     [&](const PartModel& m) { return m.class_name == name; });
        if (pm != models.parts.end()) {
            const int rad = std::max(1, static_cast<int>(std::lround(params.part_search_radius * h.s)));
            const int cx = static_cast<int>(std::floor(h.x)), cy = static_cast<int>(std::floor(h.y));
            const PixelRect win = intersect({cx - rad, cy - rad, cx + rad + 1, cy + rad + 1}, {0, 0, f.width(), f.height()});
            if (win.empty()) continue;
            std::vector<Plane<double>> costs;
            // Each part votes at its own scale, fixed relative to the root by the templates.
            const auto& tpls = pm->tables.templates;
            for (int p = 0; p < static_cast<int>(pm->parts.size()); ++p)
                costs.push_back(part_cost_map(cast_votes(descs, models.codebook, pm->tables, p, params.voting.quantize),
                                              f.width(), f.height(), win,
                                              h.s * tpls[static_cast<std::size_t>(p)].scale() / tpls[0].scale(), 0.25));
            const PartMatch match = match_parts(*pm, costs, h.s);
            r.part_energy = match.energy;
            if (match.energy > params.part_energy_per_part * static_cast<double>(pm->parts.size())) continue;
            r.hypothesis.x = win.x0 + match.locations[0].first + 0.5;
            r.hypothesis.y = win.y0 + match.locations[0].second + 0.5;
            r.box = hypothesis_box(r.hypothesis, tpl);
        }
        if (params.verify_with_svm && models.svm) {
            const Vec bow = box_bow(descs, r.box, models.codebook, params.voting.quantize);
            if (std::accumulate(bow.begin(), bow.end(), 0.0) == 0) continue;
            const Prediction p = predict(*models.svm, bow);
            if (models.svm->classes[static_cast<std::size_t>(p.label)] != name) continue;
        }
        const bool suppressed = std::any_of(accepted.begin(), accepted.end(),
                                            [&](const Recognition& a) { return iou(a.box, r.box) > params.nms_iou; });
        if (!suppressed) accepted.push_back(std::move(r));
    }
    return accepted;
}

DomainResult recognize_domain(const GrayFrame& f, const Codebook& cb, const SvmModel& domain_svm,
                              const DescriptorParams& dp, const QuantizeParams& qp) {
    const Vec h = bow_histogram(extract_descriptors(f, dp), cb, std::nullopt, qp);
    const std::size_t k = domain_svm.classes.size();
    DomainResult r;
    if (std::accumulate(h.begin(), h.end(), 0.0) == 0) {
        r.label = "unknown";
        r.distribution.assign(k, 1.0 / static_cast<double>(k));
        return r;
    }
    const Prediction p = predict(domain_svm, h);
    const double total = std::accumulate(p.votes.begin(), p.votes.end(), 0.0);
    for (double v : p.votes) r.distribution.push_back(v / total);
    r.label = domain_svm.classes[static_cast<std::size_t>(p.label)];
    return r;
}

std::string save_occurrences(const OccurrenceTable& t) {
    std::ostringstream out;
    out << "vvtrack-occurrences v1\n";
    out << "classes " << t.classes.size();
    for (const auto& c : t.classes) out << ' ' << c;
    out << '\n';
    out << "words " << t.words << '\n';
    for (std::size_t c = 0; c < t.classes.size(); ++c)
        out << "template " << c << ' ' << format_double(t.templates[c].w) << ' ' << format_double(t.templates[c].h) << '\n';
    long n = 0;
    for (const auto& cls : t.occurrences)
        for (const auto& w : cls) n += static_cast<long>(w.size());
    out << "occurrences " << n << '\n';
    for (std::size_t c = 0; c < t.occurrences.size(); ++c)
        for (std::size_t k = 0; k < t.occurrences[c].size(); ++k)
            for (const auto& o : t.occurrences[c][k])
                out << "occ " << c << ' ' << k << ' ' << format_double(o.dx) << ' ' << format_double(o.dy) << ' '
                    << format_double(o.scale) << ' ' << format_double(o.feature_scale) << ' ' << format_double(o.weight)
                    << '\n';
    return out.str();
}

OccurrenceTable load_occurrences(std::istream& in, const std::string& source) {
    LineReader r(in, source);
    r.expect_header("vvtrack-occurrences", 1);
    OccurrenceTable t;
    const auto cls = r.expect("classes");
    if (cls.empty()) r.fail("classes needs a count");
    const long nc = LineReader::to_long(cls[0]);
    if (nc < 1 || static_cast<long>(cls.size()) != nc + 1) r.fail("bad class list");
    t.classes.assign(cls.begin() + 1, cls.end());
    const auto words = r.expect("words");
    if (words.size() != 1) r.fail("words needs a count");
    t.words = static_cast<int>(LineReader::to_long(words[0]));
    if (t.words < 1 || t.words > 1'000'000) r.fail("bad word count");
    for (long c = 0; c < nc; ++c) {
        const auto tp = r.expect("template");
        if (tp.size() != 3 || LineReader::to_long(tp[0]) != c) r.fail("bad template line");
        t.templates.push_back({parse_double(tp[1]), parse_double(tp[2])});
    }
    t.occurrences.assign(static_cast<std::size_t>(nc), std::vector<std::vector<Occurrence>>(static_cast<std::size_t>(t.words)));
    const auto count = r.expect("occurrences");
    if (count.size() != 1) r.fail("occurrences needs a count");
    const long n = LineReader::to_long(count[0]);
    if (n < 0) r.fail("negative occurrence count");
    for (long i = 0; i < n; ++i) {
        const auto o = r.expect("occ");
        if (o.size() != 7) r.fail("occ needs 7 values");
        const long c = LineReader::to_long(o[0]), k = LineReader::to_long(o[1]);
        if (c < 0 || c >= nc || k < 0 || k >= t.words) r.fail("occ index out of range");
        t.occurrences[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)].push_back(
            {parse_double(o[2]), parse_double(o[3]), parse_double(o[4]), parse_double(o[5]), parse_double(o[6])});
    }
    return t;
}

std::string save_part_model(const PartModel& m) {
    std::ostringstream out;
    out << "vvtrack-parts v1\n";
    out << "class " << m.class_name << '\n';
    out << "reference " << format_double(m.reference_scale) << '\n';
    out << "parts " << m.parts.size() << '\n';
    for (const auto& p : m.parts)
        out << "part " << p.name << ' ' << format_double(p.dx) << ' ' << format_double(p.dy) << ' ' << format_double(p.wx)
            << ' ' << format_double(p.wy) << '\n';
    out << save_occurrences(m.tables);
    return out.str();
}

PartModel load_part_model(std::istream& in, const std::string& source) {
    PartModel m;
    {
        LineReader r(in, source);
        r.expect_header("vvtrack-parts", 1);
        const auto c = r.expect("class");
        if (c.size() != 1) r.fail("class needs a name");
        m.class_name = c[0];
        const auto ref = r.expect("reference");
        if (ref.size() != 1) r.fail("reference needs a value");
        m.reference_scale = parse_double(ref[0]);
        const auto np = r.expect("parts");
        if (np.size() != 1) r.fail("parts needs a count");
        const long n = LineReader::to_long(np[0]);
        if (n < 1 || n > 64) r.fail("bad part count");
        for (long i = 0; i < n; ++i) {
            const auto p = r.expect("part");
            if (p.size() != 5) r.fail("part needs 5 values");
            m.parts.push_back({p[0], parse_double(p[1]), parse_double(p[2]), parse_double(p[3]), parse_double(p[4])});
        }
    }
    m.tables = load_occurrences(in, source);
    try {
        m.validate();
    } catch (const InvalidArgument& e) {
        throw DataError(source + ": " + e.what());
    }
    return m;
}

nlohmann::json hypothesis_to_json(int frame, const Recognition& r) {
    nlohmann::json j{{"frame", frame},
                     {"class", r.label},
                     {"x", r.hypothesis.x},
                     {"y", r.hypothesis.y},
                     {"s", r.hypothesis.s},
                     {"score", r.hypothesis.score},
                     {"box", {r.box.x, r.box.y, r.box.w, r.box.h}}};
    if (r.part_energy) j["part_energy"] = *r.part_energy;
    return j;
}

}  // namespace vvtrack
