#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "vvtrack/background.hpp"
#include "vvtrack/classifier.hpp"
#include "vvtrack/recognition.hpp"
#include "vvtrack/shadow.hpp"
#include "vvtrack/tracker.hpp"
#include "vvtrack/vocabulary.hpp"

namespace vvtrack {

struct DetectionConfig {
    bool remove_shadows = true;
    double shadow_drop = 0.25;  // motion pixels whose shadow layer S falls below 1 - drop are shadow
    double shadow_chroma = 0.1;  // ... and whose normalized r, g stay this close to the background's
    int min_blob_area = 25;
    double min_motion_fraction = 0.05;  // recognitions need this share of moving pixels in their box
};

struct VocabularyConfig {
    int words = 60;  // K
    KMeansParams kmeans{100, 1};  // one run: restarts cost a full k-means each on the descriptor pool
    long max_descriptors = 20000;  // evenly strided subsample fed to k-means
};

struct TrainingConfig {
    int frame_stride = 5;          // every n-th frame of a training sequence contributes examples
    int background_per_frame = 2;  // negative boxes drawn per contributing frame
    int cv_folds = 5;
    bool part_models = false;
    double deformation_sigma = 0.1;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    BackgroundParams background;
    ShadowParams shadow;
    DetectionConfig detection;
    VocabularyConfig vocabulary;
    TrainingConfig training;
    SvmParams svm;
    RecognitionParams recognition;
    TrackerParams tracker;
    double eval_iou = 0.5;
    std::filesystem::path models = "models";  // relative paths resolve against the config file

    // Pushes `seed` into every seeded component.
    void apply_seed(std::uint64_t s);
    void validate() const;
};

// One flat object per module; any key not listed in config_to_json is a DataError.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& c);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace vvtrack
