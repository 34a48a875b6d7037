#include "vvtrack/config.hpp"

#include <array>
#include <limits>
#include <set>
#include <string>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "vvtrack/error.hpp"
#include "vvtrack/textio.hpp"

namespace vvtrack {

namespace {

using nlohmann::json;

// The single list of config keys; the reader and the writer both walk it.
template <class V>
void visit_fields(V& v, PipelineConfig& c) {
    v.top("seed", c.seed);
    v.top("models", c.models);

    v.section("background");
    v.field("window_radius", c.background.window_radius);
    v.field("base_rate", c.background.base_rate);
    v.field("gain_slope", c.background.gain_slope);
    v.field("similarity_threshold", c.background.similarity_threshold);
    v.field("initial_threshold", c.background.initial_threshold);
    v.field("adaptive_threshold", c.background.adaptive_threshold);
    v.field("selective_update", c.background.selective_update);
    v.field("hold_radius", c.background.hold_radius);
    v.field("ghost_fraction", c.background.ghost_fraction);

    v.section("shadow");
    v.field("sigma", c.shadow.sigma);
    v.field("t1", c.shadow.t1);
    v.field("t2", c.shadow.t2);
    v.field("vague_radius", c.shadow.vague_radius);
    v.field("omega", c.shadow.poisson.omega);
    v.field("tolerance", c.shadow.poisson.tolerance);
    v.field("max_sweeps", c.shadow.poisson.max_sweeps);

    v.section("detection");
    v.field("remove_shadows", c.detection.remove_shadows);
    v.field("shadow_drop", c.detection.shadow_drop);
    v.field("shadow_chroma", c.detection.shadow_chroma);
    v.field("min_blob_area", c.detection.min_blob_area);
    v.field("min_motion_fraction", c.detection.min_motion_fraction);

    v.section("vocabulary");
    v.field("words", c.vocabulary.words);
    v.field("kmeans_iterations", c.vocabulary.kmeans.max_iterations);
    v.field("restarts", c.vocabulary.kmeans.restarts);
    v.field("max_descriptors", c.vocabulary.max_descriptors);
    v.field("stride", c.recognition.voting.descriptors.stride);
    v.field("patch", c.recognition.voting.descriptors.patch);
    v.field("levels", c.recognition.voting.descriptors.levels);
    v.field("neighbors", c.recognition.voting.quantize.neighbors);
    v.field("soft_sigma", c.recognition.voting.quantize.soft_sigma);

    v.section("training");
    v.field("frame_stride", c.training.frame_stride);
    v.field("background_per_frame", c.training.background_per_frame);
    v.field("cv_folds", c.training.cv_folds);
    v.field("part_models", c.training.part_models);
    v.field("deformation_sigma", c.training.deformation_sigma);

    v.section("classifier");
    v.field("C", c.svm.C);
    v.field("c", c.svm.c);
    v.field("tolerance", c.svm.tolerance);
    v.field("max_passes", c.svm.max_passes);

    v.section("recognition");
    v.field("region_margin", c.recognition.voting.region_margin);
    v.field("b0", c.recognition.meanshift.b0);
    v.field("meanshift_iterations", c.recognition.meanshift.max_iterations);
    v.field("shift_tolerance", c.recognition.meanshift.shift_tolerance);
    v.field("seed_fraction", c.recognition.meanshift.seed_fraction);
    v.field("score_fraction", c.recognition.score_fraction);
    v.field("nms_iou", c.recognition.nms_iou);
    v.field("part_energy_per_part", c.recognition.part_energy_per_part);
    v.field("part_search_radius", c.recognition.part_search_radius);
    v.field("verify_with_svm", c.recognition.verify_with_svm);

    v.section("tracker");
    v.field("particles", c.tracker.particles);
    v.field("iterations", c.tracker.iterations);
    v.field("anneal", c.tracker.anneal);
    v.field("sigma0", c.tracker.sigma0);
    v.field("subspace_rank", c.tracker.subspace_rank);
    v.field("window", c.tracker.window);
    v.field("update_every", c.tracker.update_every);
    v.field("tau", c.tracker.tau);
    v.field("eta", c.tracker.eta);
    v.field("floor", c.tracker.floor);
    v.field("patience", c.tracker.patience);
    v.field("sigma_o2", c.tracker.sigma_o2);
    v.field("early_stop", c.tracker.early_stop);
    v.field("freeze_scale", c.tracker.freeze_scale);
    v.field("predict_motion", c.tracker.predict_motion);
    v.field("min_scale", c.tracker.min_scale);
    v.field("max_scale", c.tracker.max_scale);
    v.field("mask_margin", c.tracker.mask_margin);
    v.field("min_visible", c.tracker.min_visible);
    v.field("residual_cap", c.tracker.residual_cap);

    v.section("eval");
    v.field("iou", c.eval_iou);
}

template <class T>
void read_value(const json& j, const std::string& where, T& out) {
    const auto bad = [&](const char* want) { throw DataError("config: " + where + " must be " + want); };
    if constexpr (std::is_same_v<T, bool>) {
        if (!j.is_boolean()) bad("a boolean");
        out = j.get<bool>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!j.is_number_unsigned()) bad("a non-negative integer");
        out = j.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
        if (!j.is_number_integer()) bad("an integer");
        const auto v = j.get<long long>();
        if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) bad("in integer range");
        out = static_cast<T>(v);
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!j.is_number()) bad("a number");
        out = j.get<double>();
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
        if (!j.is_string()) bad("a string");
        out = j.get<std::string>();
    } else {
        if (!j.is_array() || j.size() != out.size()) bad("an array of 3 numbers");
        for (std::size_t i = 0; i < out.size(); ++i) read_value(j[i], where + "[" + std::to_string(i) + "]", out[i]);
    }
}

class Reader {
public:
    explicit Reader(const json& root) : root_(root) {
        if (!root.is_object()) throw DataError("config: top level must be an object");
    }

    template <class T>
    void top(const char* key, T& out) {
        known_top_.insert(key);
        if (root_.contains(key)) read_value(root_.at(key), key, out);
    }

    void section(const char* name) {
        finish_section();
        name_ = name;
        known_top_.insert(name);
        known_.clear();
        current_ = nullptr;
        if (root_.contains(name)) {
            current_ = &root_.at(name);
            if (!current_->is_object()) throw DataError(std::string("config: section '") + name + "' must be an object");
        }
    }

    template <class T>
    void field(const char* key, T& out) {
        known_.insert(key);
        if (current_ && current_->contains(key)) read_value(current_->at(key), name_ + "." + key, out);
    }

    void finish() {
        finish_section();
        for (const auto& [k, _] : root_.items())
            if (!known_top_.count(k)) throw DataError("config: unknown key '" + k + "'");
    }

private:
    void finish_section() {
        if (!current_) return;
        for (const auto& [k, _] : current_->items())
            if (!known_.count(k)) throw DataError("config: unknown key '" + name_ + "." + k + "'");
    }

    const json& root_;
    const json* current_ = nullptr;
    std::string name_;
    std::set<std::string> known_, known_top_;
};

class Writer {
public:
    template <class T>
    void top(const char* key, const T& v) {
        out[key] = encode(v);
    }
    void section(const char* name) { current_ = &out[name]; }
    template <class T>
    void field(const char* key, const T& v) {
        (*current_)[key] = encode(v);
    }

    json out = json::object();

private:
    template <class T>
    static json encode(const T& v) {
        if constexpr (std::is_same_v<T, std::filesystem::path>)
            return v.generic_string();
        else
            return v;
    }
    json* current_ = nullptr;
};

}  // namespace

void PipelineConfig::apply_seed(std::uint64_t s) {
    seed = s;
    svm.seed = s;
    tracker.seed = s;
}

void PipelineConfig::validate() const {
    background.validate();
    shadow.validate();
    recognition.validate();
    svm.validate();
    tracker.validate();
    if (!(detection.shadow_drop > 0 && detection.shadow_drop < 1)) throw InvalidArgument("detection.shadow_drop must be in (0,1)");
    if (!(detection.shadow_chroma > 0)) throw InvalidArgument("detection.shadow_chroma must be > 0");
    if (detection.min_blob_area < 1) throw InvalidArgument("detection.min_blob_area must be >= 1");
    if (!(detection.min_motion_fraction >= 0 && detection.min_motion_fraction <= 1))
        throw InvalidArgument("detection.min_motion_fraction must be in [0,1]");
    if (vocabulary.words < 1) throw InvalidArgument("vocabulary.words must be >= 1");
    if (vocabulary.kmeans.max_iterations < 1 || vocabulary.kmeans.restarts < 1)
        throw InvalidArgument("vocabulary.kmeans_iterations and restarts must be >= 1");
    if (vocabulary.max_descriptors < vocabulary.words) throw InvalidArgument("vocabulary.max_descriptors must be >= words");
    if (training.frame_stride < 1) throw InvalidArgument("training.frame_stride must be >= 1");
    if (training.background_per_frame < 0) throw InvalidArgument("training.background_per_frame must be >= 0");
    if (training.cv_folds < 2) throw InvalidArgument("training.cv_folds must be >= 2");
    if (!(training.deformation_sigma > 0)) throw InvalidArgument("training.deformation_sigma must be > 0");
    if (!(eval_iou > 0 && eval_iou <= 1)) throw InvalidArgument("eval.iou must be in (0,1]");
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    Reader r(j);
    visit_fields(r, c);
    r.finish();
    c.apply_seed(c.seed);
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("config: ") + e.what());
    }
    return c;
}

json config_to_json(const PipelineConfig& c) {
    PipelineConfig copy = c;
    Writer w;
    visit_fields(w, copy);
    return w.out;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    PipelineConfig c = config_from_json(j);
    if (c.models.is_relative()) c.models = path.parent_path() / c.models;
    return c;
}

}  // namespace vvtrack
