#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vvtrack/classifier.hpp"
#include "vvtrack/image.hpp"
#include "vvtrack/synthetic.hpp"
#include "vvtrack/tracker.hpp"

namespace vvtrack {

struct BoxMatch {
    int pred = 0, truth = 0;  // indices into the two lists
    double iou = 0;
};

// Greedy one-to-one matching of pairs with IoU >= threshold: highest IoU first, then lower
// predicted id, then lower truth id.
std::vector<BoxMatch> greedy_match(const std::vector<Box>& pred, const std::vector<int>& pred_ids,
                                   const std::vector<Box>& truth, const std::vector<int>& truth_ids,
                                   double threshold);

struct TrackingMetrics {
    int first_frame = 0, last_frame = -1;  // evaluated range, both inclusive
    long truth_instances = 0;              // (frame, object) pairs in range
    long matched = 0;
    long false_positives = 0;              // unmatched track boxes in range
    double success_rate = 0;               // matched / truth_instances
    double mean_center_error = 0;          // px over matched pairs
    double fp_per_frame = 0;
    int id_switches = 0;                   // a truth object's matched track id changed
    std::map<int, double> center_error_by_track;  // matched frames only
};

// Frames evaluated are those in both the track and truth frame ranges. DataError when they
// do not overlap.
TrackingMetrics evaluate_tracks(const std::vector<TrackRecord>& tracks, const std::vector<FrameTruth>& truth,
                                double iou_threshold = 0.5);

struct DetectionMetrics {
    long frames = 0;
    double mask_f1 = 0;  // pooled over all evaluated pixels
    double blob_precision = 0, blob_recall = 0;
    long blobs = 0, truth_objects = 0, matched = 0;
};

// F1 of predicted vs truth pixels; two empty masks score 1.
double mask_f1(const BinaryMask& pred, const BinaryMask& truth);

struct FrameDetections {
    int frame = 0;
    BinaryMask mask;
    std::vector<Box> blobs;
};

DetectionMetrics evaluate_detections(const std::vector<FrameDetections>& detections,
                                     const std::vector<FrameTruth>& truth, double iou_threshold = 0.5);

struct MetricsReport {
    std::optional<DetectionMetrics> detection;
    std::optional<TrackingMetrics> tracking;
    std::optional<EvalReport> classifier;
};

// metric,value rows; definitions travel with the numbers in the JSON form.
std::string metrics_csv(const MetricsReport& r);
nlohmann::json metrics_json(const MetricsReport& r);

}  // namespace vvtrack
