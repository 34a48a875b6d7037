#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vvtrack/background.hpp"
#include "vvtrack/config.hpp"
#include "vvtrack/metrics.hpp"
#include "vvtrack/recognition.hpp"
#include "vvtrack/synthetic.hpp"
#include "vvtrack/tracker.hpp"

namespace vvtrack {

// Frames plus optional per-frame truth (empty when the directory has no truth.jsonl).
struct SequenceData {
    std::vector<RgbFrame> frames;
    std::vector<FrameTruth> truth;
};

std::string truth_to_jsonl(const std::vector<FrameTruth>& truth);
std::vector<FrameTruth> truth_from_jsonl(const std::string& text, const std::string& source = "<memory>");

// frame_%04d.ppm and truth.jsonl.
void save_sequence(const std::filesystem::path& dir, const SyntheticSequence& seq);
SequenceData load_sequence(const std::filesystem::path& dir);

// k-means over an even subsample of the non-zero descriptors of every frame_stride-th frame.
Codebook train_vocabulary(const std::vector<SequenceData>& seqs, const PipelineConfig& cfg);

struct TrainedModels {
    RecognitionModels models;
    EvalReport cross_validation;
};

// Object classes are the truth labels, sorted. Objects overlapping another object are skipped.
// The SVM gains a "background" class from boxes that touch no object.
TrainedModels train_recognizer(const std::vector<SequenceData>& seqs, const Codebook& cb, const PipelineConfig& cfg);

inline constexpr const char* kBackgroundClass = "background";

// codebook.txt, occurrences.txt, svm.txt and parts_<class>.txt.
void save_models(const std::filesystem::path& dir, const RecognitionModels& m);
RecognitionModels load_models(const std::filesystem::path& dir);
Codebook load_codebook_file(const std::filesystem::path& path);

struct FrameResult {
    int frame = 0;
    BinaryMask motion;  // cleaned, shadow pixels removed
    std::vector<Blob> blobs;
    std::vector<Recognition> recognitions;  // gated by motion
};

// Motion, shadow removal, blobs and (optionally) recognition, one frame at a time. A moving pixel is
// shadow when the shadow layer darkens it and its chromaticity matches the background's.
class Detector {
public:
    Detector(const PipelineConfig& cfg, const RecognitionModels* models);

    FrameResult process(const RgbFrame& frame, bool recognize);

private:
    const PipelineConfig& cfg_;
    const RecognitionModels* models_;
    MotionDetector motion_;
    RgbFrame background_;  // colour twin of the gray model, same learning rate
    int index_ = 0;
};

// One line per frame: blobs as [x, y, w, h] pixel boxes plus the motion-gated recognitions.
std::string detections_to_jsonl(const std::vector<FrameResult>& frames);

struct FrameRecognitions {
    int frame = 0;
    std::vector<Recognition> recognitions;
};
std::vector<FrameRecognitions> detections_from_jsonl(const std::string& text, const std::string& source = "<memory>");

// The frame with the most recognitions among the first `init_window` frames from the first frame
// that has any (earliest on ties); -1 when no frame has one.
int select_start_frame(const std::vector<FrameRecognitions>& frames, int init_window);

// Share of the box's pixels set in the mask.
double motion_fraction(const BinaryMask& m, const Box& b);

struct PipelineResult {
    std::vector<FrameResult> frames;
    int start_frame = -1;  // frame the tracks start on; -1 when nothing was recognized
    TrackingResult tracks;
};

// Tracks start on select_start_frame's frame; recognition runs only until that window closes.
PipelineResult run_pipeline(const std::vector<RgbFrame>& frames, const RecognitionModels& models,
                            const PipelineConfig& cfg, int init_window = 5);

std::vector<InitialTrack> initial_tracks(const std::vector<Recognition>& recs);
std::vector<GrayFrame> to_gray(const std::vector<RgbFrame>& frames);

MetricsReport evaluate_pipeline(const PipelineResult& r, const std::vector<FrameTruth>& truth, double iou_threshold);

}  // namespace vvtrack
