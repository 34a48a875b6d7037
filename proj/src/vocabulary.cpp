#include "vvtrack/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "vvtrack/error.hpp"
#include "vvtrack/textio.hpp"

namespace vvtrack {

bool Descriptor::is_zero() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

void DescriptorParams::validate() const {
    if (stride < 1) throw InvalidArgument("descriptor stride must be >= 1");
    if (patch < 4 || patch % 4 != 0) throw InvalidArgument("descriptor patch must be a positive multiple of 4");
    if (levels < 1) throw InvalidArgument("descriptor levels must be >= 1");
}

namespace {

constexpr int kCells = 4;
constexpr int kOrientations = 8;

void normalize_descriptor(Vec& v) {
    auto l2 = [&] { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); };
    double n = l2();
    if (n == 0) return;
    for (double& x : v) x = std::min(x / n, 0.2);
    n = l2();
    for (double& x : v) x /= n;
}

GrayFrame half_size(const GrayFrame& f) {
    GrayFrame out(f.width() / 2, f.height() / 2);
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            out(x, y) = 0.25 * (f(2 * x, 2 * y) + f(2 * x + 1, 2 * y) + f(2 * x, 2 * y + 1) +
                                f(2 * x + 1, 2 * y + 1));
    return out;
}

}  // namespace

Descriptor describe_patch(const GrayFrame& f, int x0, int y0, int patch) {
    if (patch < 4 || patch % 4 != 0) throw InvalidArgument("patch must be a positive multiple of 4");
    if (x0 < 0 || y0 < 0 || x0 + patch > f.width() || y0 + patch > f.height())
        throw InvalidArgument("patch outside frame");
    Descriptor d;
    d.values.assign(kDescriptorDim, 0.0);
    d.x = x0 + patch / 2.0;
    d.y = y0 + patch / 2.0;
    d.scale = patch;
    const double cell = static_cast<double>(patch) / kCells;
    for (int py = 0; py < patch; ++py)
        for (int px = 0; px < patch; ++px) {
            const int x = x0 + px, y = y0 + py;
            const double gx = 0.5 * (f.clamped(x + 1, y) - f.clamped(x - 1, y));
            const double gy = 0.5 * (f.clamped(x, y + 1) - f.clamped(x, y - 1));
            const double mag = std::hypot(gx, gy);
            if (mag == 0) continue;
            double theta = std::atan2(gy, gx);
            if (theta < 0) theta += 2 * std::numbers::pi;
            const double o = theta / (2 * std::numbers::pi) * kOrientations;
            const int o0 = static_cast<int>(std::floor(o)) % kOrientations;
            const double fo = o - std::floor(o);

            const double u = (px + 0.5) / cell - 0.5, v = (py + 0.5) / cell - 0.5;
            const int cu = static_cast<int>(std::floor(u)), cv = static_cast<int>(std::floor(v));
            const double fu = u - cu, fv = v - cv;
            for (int dv = 0; dv <= 1; ++dv)
                for (int du = 0; du <= 1; ++du) {
                    const int bu = cu + du, bv = cv + dv;
                    if (bu < 0 || bu >= kCells || bv < 0 || bv >= kCells) continue;
                    const double ws = (du ? fu : 1 - fu) * (dv ? fv : 1 - fv);
                    const std::size_t base = static_cast<std::size_t>((bv * kCells + bu) * kOrientations);
                    d.values[base + static_cast<std::size_t>(o0)] += mag * ws * (1 - fo);
                    d.values[base + static_cast<std::size_t>((o0 + 1) % kOrientations)] += mag * ws * fo;
                }
        }
    normalize_descriptor(d.values);
    return d;
}

std::vector<Descriptor> extract_descriptors(const GrayFrame& f, const DescriptorParams& params) {
    params.validate();
    if (f.width() < params.patch || f.height() < params.patch)
        throw InvalidArgument("frame smaller than descriptor patch");
    std::vector<Descriptor> out;
    GrayFrame level = f;
    double factor = 1.0;
    for (int l = 0; l < params.levels; ++l) {
        if (level.width() < params.patch || level.height() < params.patch) break;
        for (int y0 = 0; y0 + params.patch <= level.height(); y0 += params.stride)
            for (int x0 = 0; x0 + params.patch <= level.width(); x0 += params.stride) {
                Descriptor d = describe_patch(level, x0, y0, params.patch);
                d.x *= factor;
                d.y *= factor;
                d.scale *= factor;
                out.push_back(std::move(d));
            }
        level = half_size(level);
        factor *= 2;
    }
    return out;
}

double squared_distance(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw InvalidArgument("vector dimensions differ");
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

namespace {

struct Run {
    std::vector<Vec> centroids;
    std::vector<int> assignment;
    std::vector<double> sse_history;
    int iterations = 0;
};

// Nearest centroid, ties to the lowest index.
std::pair<int, double> nearest(const Vec& p, const std::vector<Vec>& centroids) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(p, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return {best, best_d};
}

std::vector<Vec> kmeanspp_seeds(const std::vector<Vec>& points, int k, std::mt19937_64& rng) {
    std::vector<Vec> seeds;
    std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
    seeds.push_back(points[first(rng)]);
    std::vector<double> d2(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], seeds[0]);
    while (static_cast<int>(seeds.size()) < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        if (total <= 0) throw InvalidArgument("kmeans: fewer distinct points than clusters");
        std::uniform_real_distribution<double> u(0.0, total);
        const double target = u(rng);
        double acc = 0;
        std::size_t pick = points.size();
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (d2[i] <= 0) continue;
            acc += d2[i];
            pick = i;
            if (acc >= target) break;
        }
        seeds.push_back(points[pick]);
        for (std::size_t i = 0; i < points.size(); ++i)
            d2[i] = std::min(d2[i], squared_distance(points[i], seeds.back()));
    }
    return seeds;
}

Run lloyd(const std::vector<Vec>& points, int k, std::mt19937_64& rng, int max_iterations) {
    Run run;
    run.centroids = kmeanspp_seeds(points, k, rng);
    const std::size_t dim = points.front().size();
    run.assignment.assign(points.size(), -1);
    for (int it = 0; it < max_iterations; ++it) {
        bool changed = false;
        double sse = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto [c, d] = nearest(points[i], run.centroids);
            changed |= c != run.assignment[i];
            run.assignment[i] = c;
            sse += d;
        }
        run.sse_history.push_back(sse);
        run.iterations = it + 1;
        if (!changed && it > 0) break;

        std::vector<Vec> sums(static_cast<std::size_t>(k), Vec(dim, 0.0));
        std::vector<long> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto c = static_cast<std::size_t>(run.assignment[i]);
            ++counts[c];
            for (std::size_t j = 0; j < dim; ++j) sums[c][j] += points[i][j];
        }
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c)
            if (counts[c] > 0)
                for (std::size_t j = 0; j < dim; ++j) run.centroids[c][j] = sums[c][j] / counts[c];
        // An empty cluster takes the point lying farthest from its own (updated) centroid.
        for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = 0;
            double far_d = -1;
            for (std::size_t i = 0; i < points.size(); ++i) {
                const double d = squared_distance(points[i], run.centroids[static_cast<std::size_t>(run.assignment[i])]);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            run.centroids[c] = points[far];
            --counts[static_cast<std::size_t>(run.assignment[far])];
            run.assignment[far] = static_cast<int>(c);
            counts[c] = 1;
        }
    }
    return run;
}

}  // namespace

KMeansResult kmeans(const std::vector<Vec>& points, int k, std::uint64_t seed, const KMeansParams& params) {
    if (k < 1) throw InvalidArgument("kmeans: K must be >= 1");
    if (static_cast<int>(points.size()) < k)
        throw InvalidArgument("kmeans: " + std::to_string(points.size()) + " points for K=" + std::to_string(k));
    if (params.max_iterations < 1 || params.restarts < 1) throw InvalidArgument("kmeans: bad iteration settings");
    const std::size_t dim = points.front().size();
    for (const auto& p : points)
        if (p.size() != dim) throw InvalidArgument("kmeans: points differ in dimension");

    std::mt19937_64 rng(seed);
    std::optional<Run> best;
    for (int r = 0; r < params.restarts; ++r) {
        Run run = lloyd(points, k, rng, params.max_iterations);
        if (!best || run.sse_history.back() < best->sse_history.back()) best = std::move(run);
    }
    KMeansResult out;
    out.codebook.words = std::move(best->centroids);
    out.codebook.seed = seed;
    out.assignment = std::move(best->assignment);
    out.sse_history = std::move(best->sse_history);
    out.iterations = best->iterations;
    return out;
}

std::string save_codebook(const Codebook& cb) {
    std::ostringstream out;
    out << "vvtrack-codebook v1\n";
    out << "dims " << cb.size() << ' ' << cb.dim() << ' ' << cb.seed << '\n';
    for (const auto& w : cb.words) {
        out << "word";
        for (double v : w) out << ' ' << format_double(v);
        out << '\n';
    }
    return out.str();
}

Codebook load_codebook(std::istream& in, const std::string& source) {
    LineReader r(in, source);
    r.expect_header("vvtrack-codebook", 1);
    const auto dims = r.expect("dims");
    if (dims.size() != 3) r.fail("dims needs K, dim, seed");
    const long k = LineReader::to_long(dims[0]), dim = LineReader::to_long(dims[1]);
    if (k < 1 || dim < 1 || k > 1'000'000 || dim > 100'000) r.fail("bad codebook dimensions");
    Codebook cb;
    try {
        cb.seed = std::stoull(dims[2]);
    } catch (const std::exception&) {
        r.fail("bad seed");
    }
    for (long i = 0; i < k; ++i) {
        const auto toks = r.expect("word");
        if (static_cast<long>(toks.size()) != dim) r.fail("word has wrong dimension");
        Vec w;
        w.reserve(toks.size());
        for (const auto& t : toks) w.push_back(parse_double(t));
        cb.words.push_back(std::move(w));
    }
    return cb;
}

void QuantizeParams::validate() const {
    if (neighbors < 1) throw InvalidArgument("soft neighbors must be >= 1");
    if (!(soft_sigma > 0)) throw InvalidArgument("soft sigma must be > 0");
}

Quantized quantize(const Vec& d, const Codebook& cb, const QuantizeParams& params) {
    params.validate();
    if (cb.size() == 0) throw InvalidArgument("quantize: empty codebook");
    std::vector<std::pair<double, int>> dist;
    dist.reserve(static_cast<std::size_t>(cb.size()));
    for (int i = 0; i < cb.size(); ++i) dist.emplace_back(squared_distance(d, cb.words[static_cast<std::size_t>(i)]), i);
    const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(params.neighbors), dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(m), dist.end());
    Quantized q;
    q.hard = dist.front().second;
    const double d0 = dist.front().first;
    const double inv = 1.0 / (2 * params.soft_sigma * params.soft_sigma);
    double total = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const double w = std::exp(-(dist[i].first - d0) * inv);
        q.soft.emplace_back(dist[i].second, w);
        total += w;
    }
    for (auto& [idx, w] : q.soft) w /= total;
    return q;
}

Vec bow_histogram(const std::vector<Descriptor>& descs, const Codebook& cb, const std::optional<Vec>& idf,
                  const QuantizeParams& params) {
    Vec h(static_cast<std::size_t>(cb.size()), 0.0);
    if (idf && static_cast<int>(idf->size()) != cb.size()) throw InvalidArgument("idf length differs from codebook");
    for (const auto& d : descs) {
        if (d.is_zero()) continue;
        for (const auto& [idx, w] : quantize(d.values, cb, params).soft)
            h[static_cast<std::size_t>(idx)] += w * (idf ? (*idf)[static_cast<std::size_t>(idx)] : 1.0);
    }
    const double total = std::accumulate(h.begin(), h.end(), 0.0);
    if (total > 0)
        for (double& v : h) v /= total;
    return h;
}

Vec compute_idf(const std::vector<std::vector<Descriptor>>& images, const Codebook& cb) {
    const std::size_t K = static_cast<std::size_t>(cb.size());
    std::vector<long> hits(K, 0);
    for (const auto& img : images) {
        std::vector<bool> seen(K, false);
        for (const auto& d : img)
            if (!d.is_zero()) seen[static_cast<std::size_t>(quantize(d.values, cb).hard)] = true;
        for (std::size_t i = 0; i < K; ++i) hits[i] += seen[i];
    }
    Vec idf(K);
    const double n = static_cast<double>(images.size());
    for (std::size_t i = 0; i < K; ++i) idf[i] = std::max(0.0, std::log(n / (1.0 + hits[i])));
    return idf;
}

HistogramPyramid build_pyramid(const std::vector<Vec>& points, int levels, double base_side) {
    if (levels < 1) throw InvalidArgument("pyramid needs >= 1 level");
    if (!(base_side > 0)) throw InvalidArgument("pyramid base side must be > 0");
    HistogramPyramid p;
    p.levels = levels;
    p.base_side = base_side;
    p.dim = points.empty() ? 0 : static_cast<int>(points.front().size());
    p.point_count = static_cast<long>(points.size());
    p.bins.resize(static_cast<std::size_t>(levels));
    for (const auto& x : points) {
        if (static_cast<int>(x.size()) != p.dim) throw InvalidArgument("pyramid points differ in dimension");
        std::vector<long> key(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) key[j] = static_cast<long>(std::floor(x[j] / base_side));
        for (int i = 0; i < levels; ++i) {
            ++p.bins[static_cast<std::size_t>(i)][key];
            // floor(floor(x/s)/2) == floor(x/2s): coarser keys derive from finer ones.
            for (long& c : key) c = c >= 0 ? c / 2 : -((-c + 1) / 2);
        }
    }
    return p;
}

long histogram_intersection(const std::map<std::vector<long>, long>& a, const std::map<std::vector<long>, long>& b) {
    long total = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (ia->first < ib->first) {
            ++ia;
        } else if (ib->first < ia->first) {
            ++ib;
        } else {
            total += std::min(ia->second, ib->second);
            ++ia;
            ++ib;
        }
    }
    return total;
}

double pmk(const HistogramPyramid& y, const HistogramPyramid& z) {
    if (y.levels != z.levels || y.base_side != z.base_side ||
        (y.dim != z.dim && y.point_count > 0 && z.point_count > 0))
        throw InvalidArgument("pmk: pyramid geometry differs");
    double kappa = 0;
    long prev = 0;
    for (int i = 0; i < y.levels; ++i) {
        const long cur = histogram_intersection(y.bins[static_cast<std::size_t>(i)], z.bins[static_cast<std::size_t>(i)]);
        kappa += std::ldexp(1.0, -i) * static_cast<double>(cur - prev);
        prev = cur;
    }
    return kappa;
}

}  // namespace vvtrack
