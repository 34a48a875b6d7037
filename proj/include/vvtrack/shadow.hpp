#pragma once

#include <vector>

#include "vvtrack/image.hpp"

namespace vvtrack {

// L2-normalized red and green channels; black pixels map to 0.
struct InvariantImages {
    GrayFrame inv1, inv2;
};

// Forward differences. gx at the last column and gy at the last row carry no flux.
struct GradientField {
    Plane<double> gx, gy;
};

struct ShadowMasks {
    BinaryMask hard;   // HS
    BinaryMask vague;  // VS: penumbra band around HS
    BinaryMask mask;   // HS | VS
};

struct Blob {
    PixelRect bbox;
    BinaryMask mask;  // bbox-local
    double cx = 0, cy = 0;
    long area = 0;
};

struct PoissonParams {
    double omega = 1.9;
    double tolerance = 1e-6;  // relative residual
    int max_sweeps = 20000;
};

struct ShadowParams {
    double sigma = 1.0;
    double t1 = 0.3;
    double t2 = 0.1;
    int vague_radius = 2;
    PoissonParams poisson;

    void validate() const;
};

enum class GradientSelection {
    remove_masked,  // (1 - mask) * grad: feeds the shadow-free channel
    keep_masked,    // mask * grad: feeds the shadow channel
};

InvariantImages invariant_images(const RgbFrame& f);

// Separable Gaussian truncated at 3 sigma, weights renormalized at the borders.
GrayFrame gaussian_blur(const GrayFrame& f, double sigma);

// Blur, Sobel magnitude, divide by the frame max (all-zero when the max is below 1e-12).
GrayFrame edge_strength(const GrayFrame& f, double sigma);

// 1 where e_ori > t1 and min(e_inv1, e_inv2) < t2.
BinaryMask hard_shadow_mask(const GrayFrame& e_ori, const GrayFrame& e_inv1,
                            const GrayFrame& e_inv2, double t1, double t2);

ShadowMasks detect_shadow_edges(const RgbFrame& f, const ShadowParams& params = {});

// log(I + 1/256)
GrayFrame log_image(const GrayFrame& f);

GradientField forward_gradient(const GrayFrame& f);
GradientField masked_gradient(const GrayFrame& f_log, const BinaryMask& mask,
                              GradientSelection selection = GradientSelection::remove_masked);
GrayFrame divergence(const GradientField& g);

struct PoissonStats {
    int sweeps = 0;
    double relative_residual = 0;
};

// Solves lap(s) = div(g) with Neumann boundaries by SOR Gauss-Seidel; returns the
// zero-mean solution. Throws ConvergenceError when max_sweeps is exhausted.
GrayFrame poisson_reconstruct(const GradientField& g, const PoissonParams& params = {},
                              PoissonStats* stats = nullptr);

struct ShadowSplit {
    GrayFrame log_input;    // i
    GrayFrame log_shadow;   // s
    GrayFrame log_free;     // r = i - s
    GrayFrame shadow;       // S, max 1
    GrayFrame shadow_free;  // R, max 1
};

ShadowSplit split_shadow(const RgbFrame& f, const ShadowMasks& masks,
                         const PoissonParams& params = {});

// 8-connected components with area >= min_area, largest first, ties in scan order.
std::vector<Blob> extract_blobs(const BinaryMask& m, int min_area);

}  // namespace vvtrack
