#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vvtrack/image.hpp"

namespace vvtrack {

using Vec = std::vector<double>;

inline constexpr int kDescriptorDim = 128;

// 128-d gradient-orientation histogram at a patch center (x,y) of side s pixels.
// Unit L2 norm, or all-zero for a patch without gradients.
struct Descriptor {
    Vec values;
    double x = 0, y = 0, scale = 0;

    bool is_zero() const;
};

struct DescriptorParams {
    int stride = 8;
    int patch = 16;   // multiple of 4
    int levels = 1;   // image pyramid levels; level l halves the frame l times

    void validate() const;
};

// Patches start at multiples of the stride and must fit inside the frame.
std::vector<Descriptor> extract_descriptors(const GrayFrame& f, const DescriptorParams& params = {});
// One descriptor of the patch with top-left (x0,y0) and side `patch` (single scale).
Descriptor describe_patch(const GrayFrame& f, int x0, int y0, int patch);

struct Codebook {
    std::vector<Vec> words;
    std::uint64_t seed = 0;

    int size() const noexcept { return static_cast<int>(words.size()); }
    int dim() const noexcept { return words.empty() ? 0 : static_cast<int>(words.front().size()); }
};

struct KMeansParams {
    int max_iterations = 100;
    int restarts = 10;  // independent k-means++ runs; the lowest final SSE wins
};

struct KMeansResult {
    Codebook codebook;
    std::vector<int> assignment;
    std::vector<double> sse_history;  // SSE after each assignment step of the winning run
    int iterations = 0;
};

KMeansResult kmeans(const std::vector<Vec>& points, int k, std::uint64_t seed,
                    const KMeansParams& params = {});

std::string save_codebook(const Codebook& cb);
Codebook load_codebook(std::istream& in, const std::string& source = "<stream>");

double squared_distance(const Vec& a, const Vec& b);

struct QuantizeParams {
    int neighbors = 5;         // m
    double soft_sigma = 0.2;   // sigma_q

    void validate() const;
};

struct Quantized {
    int hard = -1;
    std::vector<std::pair<int, double>> soft;  // (word, p(C_i|f)), sums to 1
};

// Nearest word with ties to the lowest index; soft weights over the m nearest words.
Quantized quantize(const Vec& d, const Codebook& cb, const QuantizeParams& params = {});

// Soft counts times idf, L1-normalized. All-zero descriptors carry no word and are skipped.
Vec bow_histogram(const std::vector<Descriptor>& descs, const Codebook& cb,
                  const std::optional<Vec>& idf = std::nullopt, const QuantizeParams& params = {});

// idf_i = max(0, log(N / (1 + n_i))), n_i = images whose descriptors hit word i (hard).
Vec compute_idf(const std::vector<std::vector<Descriptor>>& images, const Codebook& cb);

// Multi-resolution histograms over point space; level i bins have side base_side * 2^i
// and share the origin, so each bin nests inside one bin of the next level.
struct HistogramPyramid {
    int levels = 0;
    double base_side = 1.0;
    int dim = 0;
    long point_count = 0;
    std::vector<std::map<std::vector<long>, long>> bins;
};

HistogramPyramid build_pyramid(const std::vector<Vec>& points, int levels, double base_side);
long histogram_intersection(const std::map<std::vector<long>, long>& a,
                            const std::map<std::vector<long>, long>& b);
// sum_i 2^-i (I_i - I_{i-1}), I_{-1} = 0.
double pmk(const HistogramPyramid& y, const HistogramPyramid& z);

}  // namespace vvtrack
