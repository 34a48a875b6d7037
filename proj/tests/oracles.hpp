#pragma once

// Independent reference implementations shared by the unit tests and the acceptance binary.
// Each one is the slow, obvious version of something the library does fast.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "vvtrack/image.hpp"

namespace oracle {

using vvtrack::GrayFrame;
using vvtrack::Plane;
using Vec = std::vector<double>;

inline double max_abs_after_mean_alignment(const GrayFrame& a, const GrayFrame& b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a.raw()[i];
        mb += b.raw()[i];
    }
    ma /= static_cast<double>(a.size());
    mb /= static_cast<double>(b.size());
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs((a.raw()[i] - ma) - (b.raw()[i] - mb)));
    return worst;
}

// Scan of the Gaussian fit error over T, with the bin mass integrated numerically.
struct ThresholdFit {
    int T;
    double sigma;
};
inline ThresholdFit threshold_scan(const std::array<long, 256>& h) {
    double total = 0;
    for (long c : h) total += static_cast<double>(c);
    auto bin_mass = [](int k, double sigma) {
        // Simpson integration of the folded normal density over the bin.
        const double lo = k == 0 ? 0.0 : k - 0.5, hi = k + 0.5;
        const int n = 200;
        const double step = (hi - lo) / n;
        auto pdf = [&](double x) {
            return 2.0 / (sigma * std::sqrt(2 * M_PI)) * std::exp(-0.5 * x * x / (sigma * sigma));
        };
        double acc = pdf(lo) + pdf(hi);
        for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * pdf(lo + i * step);
        return acc * step / 3.0;
    };
    ThresholdFit best{-1, 0};
    double best_err = 1e300;
    for (int T = 0; T < 256; ++T) {
        double pb = 0, m2 = 0;
        for (int d = 0; d <= T; ++d) {
            pb += h[static_cast<std::size_t>(d)] / total;
            m2 += double(d) * d * h[static_cast<std::size_t>(d)] / total;
        }
        const double sigma = std::max(std::sqrt(m2 / pb), 1e-6);
        double err = 0;
        for (int k = 0; k < 256; ++k) {
            const double q = sigma < 1e-3 ? (k == 0 ? 1.0 : 0.0) : bin_mass(k, sigma);
            const double r = pb * q - h[static_cast<std::size_t>(k)] / total;
            err += r * r;
        }
        if (err < best_err - 1e-14) {
            best_err = err;
            best = {T, sigma};
        }
    }
    return best;
}

// Smallest SSE over every split of the points into two non-empty groups.
inline double best_two_partition_sse(const std::vector<Vec>& pts) {
    const int n = static_cast<int>(pts.size());
    const std::size_t dim = pts[0].size();
    double best = std::numeric_limits<double>::infinity();
    for (int mask = 1; mask < (1 << n) - 1; ++mask) {
        double sse = 0;
        for (int side = 0; side < 2; ++side) {
            Vec mean(dim, 0.0);
            int count = 0;
            for (int i = 0; i < n; ++i)
                if (((mask >> i) & 1) == side) {
                    for (std::size_t d = 0; d < dim; ++d) mean[d] += pts[static_cast<std::size_t>(i)][d];
                    ++count;
                }
            for (double& v : mean) v /= count;
            for (int i = 0; i < n; ++i)
                if (((mask >> i) & 1) == side)
                    for (std::size_t d = 0; d < dim; ++d) {
                        const double e = pts[static_cast<std::size_t>(i)][d] - mean[d];
                        sse += e * e;
                    }
        }
        best = std::min(best, sse);
    }
    return best;
}

// Direct pyramid match: count matched pairs per level by brute-force bin comparison.
inline double pmk(const std::vector<Vec>& y, const std::vector<Vec>& z, int levels, double base) {
    double kappa = 0;
    long prev = 0;
    for (int i = 0; i < levels; ++i) {
        const double side = base * std::pow(2.0, i);
        auto key = [&](const Vec& p) {
            std::vector<long> k;
            for (double v : p) k.push_back(static_cast<long>(std::floor(v / side)));
            return k;
        };
        std::vector<bool> used(z.size(), false);
        long matched = 0;
        for (const auto& a : y)
            for (std::size_t j = 0; j < z.size(); ++j)
                if (!used[j] && key(a) == key(z[j])) {
                    used[j] = true;
                    ++matched;
                    break;
                }
        kappa += std::pow(0.5, i) * static_cast<double>(matched - prev);
        prev = matched;
    }
    return kappa;
}

// min over q of f(q) + wx dx^2 + wy dy^2 for the point p, with the first minimizer in row-major order.
inline double distance_transform_at(const Plane<double>& f, double wx, double wy, int px, int py, int* ax, int* ay) {
    double best = std::numeric_limits<double>::infinity();
    for (int qy = 0; qy < f.height(); ++qy)
        for (int qx = 0; qx < f.width(); ++qx) {
            const double dx = px - qx, dy = py - qy;
            const double v = (f(qx, qy) + wx * (dx * dx)) + wy * (dy * dy);
            if (v < best) {
                best = v;
                *ax = qx;
                *ay = qy;
            }
        }
    return best;
}

// Star-model energy minimized over every root position and every child position.
inline double star_energy(const std::vector<Plane<double>>& costs, const std::vector<std::pair<int, int>>& offsets,
                          const std::vector<std::pair<double, double>>& weights) {
    const int w = costs[0].width(), h = costs[0].height();
    double best = std::numeric_limits<double>::infinity();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double e = costs[0](x, y);
            for (std::size_t p = 1; p < costs.size(); ++p) {
                int ax = 0, ay = 0;
                e += distance_transform_at(costs[p], weights[p].first, weights[p].second, x + offsets[p].first,
                                           y + offsets[p].second, &ax, &ay);
            }
            best = std::min(best, e);
        }
    return best;
}

}  // namespace oracle
