#pragma once

#include <algorithm>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vvtrack/classifier.hpp"
#include "vvtrack/image.hpp"
#include "vvtrack/vocabulary.hpp"

namespace vvtrack {

// Offset from feature location to object center, both measured at training time.
struct Occurrence {
    double dx = 0, dy = 0;
    double scale = 1;          // object scale at training
    double feature_scale = 1;  // descriptor scale at training
    double weight = 0;
};

struct ObjectTemplate {
    double w = 0, h = 0;  // box size at scale == max(w,h)
    double scale() const { return std::max(w, h); }
};

// occurrences[class][word]; weights per (class, word) sum to 1 when non-empty.
struct OccurrenceTable {
    std::vector<std::string> classes;
    std::vector<ObjectTemplate> templates;
    int words = 0;
    std::vector<std::vector<std::vector<Occurrence>>> occurrences;

    int class_index(const std::string& name) const;  // -1 when absent
};

struct TrainingExample {
    GrayFrame frame;
    int class_id = 0;
    Box box;  // object extent; center is the voting target, scale is max(w,h)
};

struct VotingParams {
    DescriptorParams descriptors{4, 16, 1};
    QuantizeParams quantize;
    double region_margin = 4;  // descriptors centred within the box grown by this many px belong to it

    void validate() const;
};

OccurrenceTable learn_occurrences(const std::vector<TrainingExample>& examples,
                                  const std::vector<std::string>& classes, const Codebook& cb,
                                  const VotingParams& params = {});

struct Vote {
    double x = 0, y = 0, s = 0;
    double weight = 0;
};

// Each descriptor at l votes at l + offset * (s_f / feature_scale) with weight
// p(C_i|f) * occurrence weight.
std::vector<Vote> cast_votes(const std::vector<Descriptor>& descs, const Codebook& cb, const OccurrenceTable& table,
                             int class_id, const QuantizeParams& qp = {});

// Total vote mass, summed word by word: sum_f sum_i p(C_i|f) * (sum of occurrence weights of C_i).
double vote_mass(const std::vector<Descriptor>& descs, const Codebook& cb, const OccurrenceTable& table,
                 int class_id, const QuantizeParams& qp = {});

struct ObjectHypothesis {
    int class_id = 0;
    double x = 0, y = 0, s = 0;
    double score = 0;
};

struct MeanShiftParams {
    double b0 = 0.1;
    int max_iterations = 100;
    double shift_tolerance = 1e-3;
    double seed_fraction = 0.3;   // seed cells lighter than this share of the heaviest cell are skipped

    void validate() const;
};

// Balloon density with an Epanechnikov kernel, K(0) = 1, bandwidth b = b0 * s, volume 4/3 pi b^3.
double vote_density(const std::vector<Vote>& votes, double x, double y, double s, double b0);

// Modes sorted by score (descending). class_id is left at 0.
std::vector<ObjectHypothesis> meanshift_modes(const std::vector<Vote>& votes, const MeanShiftParams& params = {});

// Separable squared-distance transform D(p) = min_q f(q) + wx (px-qx)^2 + wy (py-qy)^2 over the
// output window [x0, x0+out_w) x [y0, y0+out_h); argmin ties go to the lowest scan-order q.
struct DistanceTransform {
    Plane<double> value;
    Plane<int> arg_x, arg_y;
    int x0 = 0, y0 = 0;
};
DistanceTransform distance_transform(const Plane<double>& cost, double wx, double wy, int x0, int y0,
                                     int out_w, int out_h);
DistanceTransform distance_transform(const Plane<double>& cost, double wx, double wy);

struct PartSpec {
    std::string name;
    double dx = 0, dy = 0;  // child anchor relative to the root, at reference scale
    double wx = 1, wy = 1;  // diagonal Mahalanobis weights, > 0
};

// Star model. parts[0] is the root; its offset and weights are unused.
struct PartModel {
    std::string class_name;
    std::vector<PartSpec> parts;
    double reference_scale = 1;
    OccurrenceTable tables;  // one pseudo-class per part, same order as parts

    void validate() const;
};

struct PartMatch {
    std::vector<std::pair<int, int>> locations;  // per part, grid coordinates
    double energy = 0;
};

// Exact minimiser of m_1(l_1) + sum_i min_{l_i} (m_i(l_i) + |l_i - (l_1 + o_i)|^2_M).
// `offsets` holds integer anchor offsets for each child (index 0 ignored).
PartMatch match_parts(const std::vector<Plane<double>>& costs, const std::vector<std::pair<int, int>>& offsets,
                      const std::vector<std::pair<double, double>>& weights);
PartMatch match_parts(const PartModel& model, const std::vector<Plane<double>>& costs, double scale);

// Children are the two halves of the box along its longer axis.
PartModel learn_part_model(const std::vector<TrainingExample>& examples, int class_id,
                           const std::vector<std::string>& classes, const Codebook& cb,
                           const VotingParams& params = {}, double deformation_sigma = 0.1);

struct RecognitionParams {
    VotingParams voting;
    MeanShiftParams meanshift;
    double score_fraction = 0.25;  // hypotheses below this share of the frame's best score are dropped
    double nms_iou = 0.3;
    double part_energy_per_part = 2.0;  // gate: energy <= this * number of parts
    double part_search_radius = 0.5;    // fraction of the scale searched around a hypothesis
    bool verify_with_svm = true;

    void validate() const;
};

struct Recognition {
    ObjectHypothesis hypothesis;
    std::string label;
    Box box;
    std::optional<double> part_energy;
};

struct RecognitionModels {
    Codebook codebook;
    OccurrenceTable occurrences;
    std::optional<SvmModel> svm;  // object classes, BoW over the hypothesis box
    std::vector<PartModel> parts;
};

std::vector<Recognition> recognize_frame(const GrayFrame& f, const RecognitionModels& models,
                                         const RecognitionParams& params = {});

struct DomainResult {
    std::string label;  // "unknown" for a featureless frame
    std::vector<double> distribution;  // sums to 1
};

DomainResult recognize_domain(const GrayFrame& f, const Codebook& cb, const SvmModel& domain_svm,
                              const DescriptorParams& dp = {}, const QuantizeParams& qp = {});

Box hypothesis_box(const ObjectHypothesis& h, const ObjectTemplate& t);

// Bag of words over the descriptors centred inside the box; what SVM verification sees.
Vec box_bow(const std::vector<Descriptor>& descs, const Box& box, const Codebook& cb, const QuantizeParams& qp = {});

std::string save_occurrences(const OccurrenceTable& t);
OccurrenceTable load_occurrences(std::istream& in, const std::string& source = "<stream>");
std::string save_part_model(const PartModel& m);
PartModel load_part_model(std::istream& in, const std::string& source = "<stream>");

nlohmann::json hypothesis_to_json(int frame, const Recognition& r);

}  // namespace vvtrack
