#include "vvtrack/shadow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vvtrack/background.hpp"
#include "vvtrack/error.hpp"
#include "vvtrack/frame_io.hpp"

namespace vvtrack {

void ShadowParams::validate() const {
    if (sigma < 0) throw InvalidArgument("shadow sigma must be >= 0");
    if (!(t2 >= 0 && t2 < t1 && t1 <= 1)) throw InvalidArgument("need 0 <= t2 < t1 <= 1");
    if (vague_radius < 0) throw InvalidArgument("vague_radius must be >= 0");
    if (!(poisson.omega > 0 && poisson.omega < 2)) throw InvalidArgument("SOR omega must be in (0,2)");
    if (poisson.tolerance <= 0 || poisson.max_sweeps < 1)
        throw InvalidArgument("bad Poisson solver settings");
}

InvariantImages invariant_images(const RgbFrame& f) {
    InvariantImages out{GrayFrame(f.width(), f.height()), GrayFrame(f.width(), f.height())};
    for (int y = 0; y < f.height(); ++y)
        for (int x = 0; x < f.width(); ++x) {
            const Rgb c = f.at(x, y);
            const double n = std::sqrt(c.r * c.r + c.g * c.g + c.b * c.b);
            if (n > 0) {
                out.inv1(x, y) = c.r / n;
                out.inv2(x, y) = c.g / n;
            }
        }
    return out;
}

GrayFrame gaussian_blur(const GrayFrame& f, double sigma) {
    if (sigma < 0) throw InvalidArgument("gaussian_blur: sigma must be >= 0");
    if (sigma == 0 || f.empty()) return f;
    const int radius = static_cast<int>(std::ceil(3 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    for (int i = -radius; i <= radius; ++i)
        k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));

    const int W = f.width(), H = f.height();
    GrayFrame tmp(W, H), out(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0, wsum = 0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = x + i;
                if (xx < 0 || xx >= W) continue;
                const double w = k[static_cast<std::size_t>(i + radius)];
                acc += w * f(xx, y);
                wsum += w;
            }
            tmp(x, y) = acc / wsum;
        }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double acc = 0, wsum = 0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = y + i;
                if (yy < 0 || yy >= H) continue;
                const double w = k[static_cast<std::size_t>(i + radius)];
                acc += w * tmp(x, yy);
                wsum += w;
            }
            out(x, y) = acc / wsum;
        }
    return out;
}

GrayFrame edge_strength(const GrayFrame& f, double sigma) {
    const GrayFrame s = gaussian_blur(f, sigma);
    GrayFrame e(f.width(), f.height());
    double peak = 0;
    for (int y = 0; y < f.height(); ++y)
        for (int x = 0; x < f.width(); ++x) {
            const double gx = (s.clamped(x + 1, y - 1) + 2 * s.clamped(x + 1, y) + s.clamped(x + 1, y + 1)) -
                              (s.clamped(x - 1, y - 1) + 2 * s.clamped(x - 1, y) + s.clamped(x - 1, y + 1));
            const double gy = (s.clamped(x - 1, y + 1) + 2 * s.clamped(x, y + 1) + s.clamped(x + 1, y + 1)) -
                              (s.clamped(x - 1, y - 1) + 2 * s.clamped(x, y - 1) + s.clamped(x + 1, y - 1));
            e(x, y) = std::sqrt(gx * gx + gy * gy);
            peak = std::max(peak, e(x, y));
        }
    // Blurring a constant frame leaves round-off residue; treat it as no edge.
    if (peak > 1e-12)
        for (double& v : e.raw()) v /= peak;
    else
        std::fill(e.raw().begin(), e.raw().end(), 0.0);
    return e;
}

BinaryMask hard_shadow_mask(const GrayFrame& e_ori, const GrayFrame& e_inv1, const GrayFrame& e_inv2,
                            double t1, double t2) {
    if (!e_ori.same_shape(e_inv1) || !e_ori.same_shape(e_inv2))
        throw InvalidArgument("hard_shadow_mask: edge maps differ in size");
    BinaryMask hs(e_ori.width(), e_ori.height());
    for (std::size_t i = 0; i < hs.size(); ++i)
        hs.raw()[i] = e_ori.raw()[i] > t1 && std::min(e_inv1.raw()[i], e_inv2.raw()[i]) < t2;
    return hs;
}

ShadowMasks detect_shadow_edges(const RgbFrame& f, const ShadowParams& params) {
    params.validate();
    const InvariantImages inv = invariant_images(f);
    const GrayFrame e_ori = edge_strength(hsv_value(f), params.sigma);
    const GrayFrame e1 = edge_strength(inv.inv1, params.sigma);
    const GrayFrame e2 = edge_strength(inv.inv2, params.sigma);
    ShadowMasks m;
    m.hard = hard_shadow_mask(e_ori, e1, e2, params.t1, params.t2);
    m.vague = dilate(m.hard, params.vague_radius);
    m.mask = BinaryMask(f.width(), f.height());
    for (std::size_t i = 0; i < m.mask.size(); ++i) m.mask.raw()[i] = m.hard.raw()[i] | m.vague.raw()[i];
    return m;
}

GrayFrame log_image(const GrayFrame& f) {
    GrayFrame out(f.width(), f.height());
    for (std::size_t i = 0; i < f.size(); ++i) out.raw()[i] = std::log(f.raw()[i] + 1.0 / 256.0);
    return out;
}

GradientField forward_gradient(const GrayFrame& f) {
    const int W = f.width(), H = f.height();
    GradientField g{Plane<double>(W, H), Plane<double>(W, H)};
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (x + 1 < W) g.gx(x, y) = f(x + 1, y) - f(x, y);
            if (y + 1 < H) g.gy(x, y) = f(x, y + 1) - f(x, y);
        }
    return g;
}

GradientField masked_gradient(const GrayFrame& f_log, const BinaryMask& mask, GradientSelection selection) {
    if (!f_log.same_shape(mask)) throw InvalidArgument("masked_gradient: mask size differs");
    GradientField g = forward_gradient(f_log);
    const bool keep = selection == GradientSelection::keep_masked;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const bool masked = mask.raw()[i] != 0;
        if (masked != keep) {
            g.gx.raw()[i] = 0;
            g.gy.raw()[i] = 0;
        }
    }
    return g;
}

GrayFrame divergence(const GradientField& g) {
    if (!g.gx.same_shape(g.gy)) throw InvalidArgument("gradient components differ in size");
    const int W = g.gx.width(), H = g.gx.height();
    auto fx = [&](int x, int y) { return (x >= 0 && x < W - 1) ? g.gx(x, y) : 0.0; };
    auto fy = [&](int x, int y) { return (y >= 0 && y < H - 1) ? g.gy(x, y) : 0.0; };
    GrayFrame d(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) d(x, y) = fx(x, y) - fx(x - 1, y) + fy(x, y) - fy(x, y - 1);
    return d;
}

namespace {

double residual_norm(const GrayFrame& s, const GrayFrame& div) {
    const int W = s.width(), H = s.height();
    double acc = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double lap = 0;
            const double c = s(x, y);
            if (x > 0) lap += s(x - 1, y) - c;
            if (x + 1 < W) lap += s(x + 1, y) - c;
            if (y > 0) lap += s(x, y - 1) - c;
            if (y + 1 < H) lap += s(x, y + 1) - c;
            const double r = div(x, y) - lap;
            acc += r * r;
        }
    return std::sqrt(acc);
}

}  // namespace

GrayFrame poisson_reconstruct(const GradientField& g, const PoissonParams& params, PoissonStats* stats) {
    const GrayFrame div = divergence(g);
    const int W = div.width(), H = div.height();
    GrayFrame s(W, H, 0.0);
    const double div_norm = std::sqrt(std::inner_product(div.raw().begin(), div.raw().end(),
                                                         div.raw().begin(), 0.0));
    if (stats) *stats = {};
    if (div_norm == 0 || div.empty()) return s;

    constexpr int kCheckEvery = 4;
    const double omega = params.omega;
    double rel = std::numeric_limits<double>::infinity();
    int sweep = 0;
    while (sweep < params.max_sweeps) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double sum = 0;
                int deg = 0;
                if (x > 0) { sum += s(x - 1, y); ++deg; }
                if (x + 1 < W) { sum += s(x + 1, y); ++deg; }
                if (y > 0) { sum += s(x, y - 1); ++deg; }
                if (y + 1 < H) { sum += s(x, y + 1); ++deg; }
                if (deg == 0) continue;
                const double gs = (sum - div(x, y)) / deg;
                s(x, y) += omega * (gs - s(x, y));
            }
        ++sweep;
        if (sweep % kCheckEvery == 0 || sweep == params.max_sweeps) {
            rel = residual_norm(s, div) / div_norm;
            if (rel < params.tolerance) break;
        }
    }
    if (stats) *stats = {sweep, rel};
    if (!(rel < params.tolerance))
        throw ConvergenceError("poisson_reconstruct: no convergence after " + std::to_string(sweep) +
                                   " sweeps, relative residual " + std::to_string(rel),
                               rel, sweep);
    const double mean = std::accumulate(s.raw().begin(), s.raw().end(), 0.0) / static_cast<double>(s.size());
    for (double& v : s.raw()) v -= mean;
    return s;
}

ShadowSplit split_shadow(const RgbFrame& f, const ShadowMasks& masks, const PoissonParams& params) {
    ShadowSplit out;
    out.log_input = log_image(to_grayscale(f));
    out.log_shadow = poisson_reconstruct(
        masked_gradient(out.log_input, masks.mask, GradientSelection::keep_masked), params);
    out.log_free = GrayFrame(f.width(), f.height());
    for (std::size_t i = 0; i < out.log_free.size(); ++i)
        out.log_free.raw()[i] = out.log_input.raw()[i] - out.log_shadow.raw()[i];

    auto exp_normalized = [](const GrayFrame& g) {
        GrayFrame o(g.width(), g.height());
        if (g.empty()) return o;
        const double peak = *std::max_element(g.raw().begin(), g.raw().end());
        for (std::size_t i = 0; i < g.size(); ++i) o.raw()[i] = std::exp(g.raw()[i] - peak);
        return o;
    };
    out.shadow = exp_normalized(out.log_shadow);
    out.shadow_free = exp_normalized(out.log_free);
    return out;
}

std::vector<Blob> extract_blobs(const BinaryMask& m, int min_area) {
    const int W = m.width(), H = m.height();
    Plane<int> label(W, H, -1);
    std::vector<Blob> blobs;
    std::vector<std::pair<int, int>> stack, pixels;
    int next = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!m(x, y) || label(x, y) >= 0) continue;
            pixels.clear();
            stack.assign(1, {x, y});
            label(x, y) = next;
            while (!stack.empty()) {
                auto [px, py] = stack.back();
                stack.pop_back();
                pixels.emplace_back(px, py);
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = px + dx, ny = py + dy;
                        if (m.contains(nx, ny) && m(nx, ny) && label(nx, ny) < 0) {
                            label(nx, ny) = next;
                            stack.emplace_back(nx, ny);
                        }
                    }
            }
            ++next;
            if (static_cast<long>(pixels.size()) < min_area) continue;
            Blob b;
            b.bbox = {W, H, 0, 0};
            double sx = 0, sy = 0;
            for (auto [px, py] : pixels) {
                b.bbox.x0 = std::min(b.bbox.x0, px);
                b.bbox.y0 = std::min(b.bbox.y0, py);
                b.bbox.x1 = std::max(b.bbox.x1, px + 1);
                b.bbox.y1 = std::max(b.bbox.y1, py + 1);
                sx += px + 0.5;
                sy += py + 0.5;
            }
            b.area = static_cast<long>(pixels.size());
            b.cx = sx / b.area;
            b.cy = sy / b.area;
            b.mask = BinaryMask(b.bbox.x1 - b.bbox.x0, b.bbox.y1 - b.bbox.y0);
            for (auto [px, py] : pixels) b.mask(px - b.bbox.x0, py - b.bbox.y0) = 1;
            blobs.push_back(std::move(b));
        }
    std::stable_sort(blobs.begin(), blobs.end(),
                     [](const Blob& a, const Blob& b) { return a.area > b.area; });
    return blobs;
}

}  // namespace vvtrack
