// vvtrack command line: generate, train-vocab, train-svm, detect, track, eval, pipeline.
// Exit codes: 0 success, 1 usage error, 2 data or model error.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vvtrack/config.hpp"
#include "vvtrack/error.hpp"
#include "vvtrack/frame_io.hpp"
#include "vvtrack/metrics.hpp"
#include "vvtrack/pipeline.hpp"
#include "vvtrack/synthetic.hpp"
#include "vvtrack/textio.hpp"
#include "vvtrack/tracker.hpp"

namespace fs = std::filesystem;
using namespace vvtrack;

namespace {

struct Options {
    fs::path config, out, models, init, tracks, truth, codebook;
    std::vector<fs::path> in;
    std::optional<std::uint64_t> seed;
    std::string scene = "cross2";
    int frames = 60;
    int init_window = 5;
    bool no_overlay = false;
    bool no_recognize = false;
};

PipelineConfig load(const Options& o) {
    PipelineConfig cfg = load_config(o.config);
    if (o.seed) cfg.apply_seed(*o.seed);
    if (!o.models.empty()) cfg.models = o.models;
    return cfg;
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_file_atomic(p, j.dump(2) + "\n"); }

void write_metrics(const fs::path& dir, const MetricsReport& m) {
    fs::create_directories(dir);
    write_file_atomic(dir / "metrics.csv", metrics_csv(m));
    write_json(dir / "metrics.json", metrics_json(m));
}

void write_overlays(const fs::path& dir, const std::vector<RgbFrame>& frames, const std::vector<TrackRecord>& records) {
    fs::create_directories(dir);
    std::vector<std::vector<TrackRecord>> by_frame(frames.size());
    for (const auto& r : records)
        if (r.frame >= 0 && static_cast<std::size_t>(r.frame) < frames.size()) by_frame[static_cast<std::size_t>(r.frame)].push_back(r);
    for (std::size_t i = 0; i < frames.size(); ++i)
        write_file_atomic(dir / format_frame_name("frame_%04d.ppm", static_cast<int>(i)),
                          encode_ppm(draw_tracks(frames[i], by_frame[i])));
}

std::vector<SequenceData> load_all(const std::vector<fs::path>& dirs) {
    std::vector<SequenceData> out;
    for (const auto& d : dirs) {
        out.push_back(load_sequence(d));
        if (out.back().truth.empty()) throw DataError("training needs truth.jsonl in " + d.string());
    }
    return out;
}

int cmd_generate(const Options& o) {
    const std::uint64_t seed = o.seed.value_or(0);
    const SyntheticSequence seq = generate_synthetic(preset_scene(o.scene, o.frames, seed), o.frames);
    save_sequence(o.out, seq);
    // Synthetic objects keep their size, so the bundled config tracks position only.
    PipelineConfig cfg;
    cfg.apply_seed(seed);
    cfg.tracker.freeze_scale = true;
    write_json(o.out / "config.json", config_to_json(cfg));
    std::cout << "wrote " << seq.frames.size() << " frames to " << o.out.string() << "\n";
    return 0;
}

int cmd_train_vocab(const Options& o) {
    const PipelineConfig cfg = load(o);
    const fs::path out = o.out.empty() ? cfg.models : o.out;
    const Codebook cb = train_vocabulary(load_all(o.in), cfg);
    fs::create_directories(out);
    write_file_atomic(out / "codebook.txt", save_codebook(cb));
    std::cout << "codebook: " << cb.size() << " words -> " << (out / "codebook.txt").string() << "\n";
    return 0;
}

int cmd_train_svm(const Options& o) {
    const PipelineConfig cfg = load(o);
    const fs::path out = o.out.empty() ? cfg.models : o.out;
    const Codebook cb = load_codebook_file(o.codebook.empty() ? out / "codebook.txt" : o.codebook);
    const TrainedModels t = train_recognizer(load_all(o.in), cb, cfg);
    save_models(out, t.models);
    const auto& cv = t.cross_validation;
    if (!cv.classes.empty()) {
        write_file_atomic(out / "cv_confusion.csv", confusion_csv(cv));
        write_file_atomic(out / "cv_roc.csv", roc_csv(cv));
        MetricsReport m;
        m.classifier = cv;
        write_file_atomic(out / "cv.csv", metrics_csv(m));
        std::cout << "cross-validated accuracy " << format_double(cv.accuracy) << "\n";
    }
    std::cout << "models -> " << out.string() << "\n";
    return 0;
}

int cmd_detect(const Options& o) {
    const PipelineConfig cfg = load(o);
    const SequenceData seq = load_sequence(o.in.at(0));
    std::optional<RecognitionModels> models;
    if (!o.no_recognize) models = load_models(cfg.models);
    Detector det(cfg, models ? &*models : nullptr);
    PipelineResult r;
    fs::create_directories(o.out / "masks");
    for (const auto& f : seq.frames) {
        r.frames.push_back(det.process(f, models.has_value()));
        write_mask_pgm(o.out / "masks" / format_frame_name("mask_%04d.pgm", r.frames.back().frame), r.frames.back().motion);
    }
    write_file_atomic(o.out / "detections.jsonl", detections_to_jsonl(r.frames));
    if (!seq.truth.empty()) write_metrics(o.out, evaluate_pipeline(r, seq.truth, cfg.eval_iou));
    std::cout << "detections for " << r.frames.size() << " frames -> " << o.out.string() << "\n";
    return 0;
}

int cmd_track(const Options& o) {
    const PipelineConfig cfg = load(o);
    const SequenceData seq = load_sequence(o.in.at(0));
    const RecognitionModels models = load_models(cfg.models);
    PipelineResult r;
    if (o.init.empty()) {
        r = run_pipeline(seq.frames, models, cfg, o.init_window);
    } else {
        const auto found = detections_from_jsonl(read_file(o.init), o.init.string());
        r.start_frame = select_start_frame(found, o.init_window);
        if (r.start_frame >= static_cast<int>(seq.frames.size()))
            throw DataError(o.init.string() + ": start frame " + std::to_string(r.start_frame) + " is past the last frame");
        for (const auto& f : found)
            if (f.frame == r.start_frame)
                r.tracks = track_sequence(to_gray(seq.frames), initial_tracks(f.recognitions), cfg.tracker, r.start_frame);
    }
    if (r.start_frame < 0) throw DataError("no object was recognized, nothing to track");
    fs::create_directories(o.out);
    write_file_atomic(o.out / "tracks.jsonl", tracks_to_jsonl(r.tracks.records));
    if (!o.no_overlay) write_overlays(o.out / "overlay", seq.frames, r.tracks.records);
    std::cout << "tracks from frame " << r.start_frame << " -> " << (o.out / "tracks.jsonl").string() << "\n";
    return 0;
}

int cmd_eval(const Options& o) {
    const PipelineConfig cfg = load(o);
    const fs::path truth_file = fs::is_directory(o.truth) ? o.truth / "truth.jsonl" : o.truth;
    if (!fs::exists(truth_file)) throw DataError("missing truth file " + truth_file.string());
    if (!fs::exists(o.tracks)) throw DataError("missing tracks file " + o.tracks.string());
    MetricsReport m;
    m.tracking = evaluate_tracks(tracks_from_jsonl(read_file(o.tracks), o.tracks.string()),
                                 truth_from_jsonl(read_file(truth_file), truth_file.string()), cfg.eval_iou);
    write_metrics(o.out, m);
    std::cout << metrics_csv(m);
    return 0;
}

int cmd_pipeline(const Options& o) {
    const PipelineConfig cfg = load(o);
    const SequenceData seq = load_sequence(o.in.at(0));
    const RecognitionModels models = load_models(cfg.models);
    const PipelineResult r = run_pipeline(seq.frames, models, cfg, o.init_window);
    fs::create_directories(o.out);
    write_file_atomic(o.out / "detections.jsonl", detections_to_jsonl(r.frames));
    write_file_atomic(o.out / "tracks.jsonl", tracks_to_jsonl(r.tracks.records));
    if (!o.no_overlay) write_overlays(o.out / "overlay", seq.frames, r.tracks.records);
    if (r.start_frame < 0) std::cerr << "vvtrack: warning: no object was recognized, no tracks\n";
    if (!seq.truth.empty()) {
        const MetricsReport m = evaluate_pipeline(r, seq.truth, cfg.eval_iou);
        write_metrics(o.out, m);
        std::cout << metrics_csv(m);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vvtrack: video object detection, recognition and multi-object tracking"};
    app.require_subcommand(1);
    Options o;

    const auto seed_opt = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Overrides the config seed"); };
    const auto config_opt = [&](CLI::App* c) {
        c->add_option("--config", o.config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    };
    const auto models_opt = [&](CLI::App* c) { c->add_option("--models", o.models, "Model directory (overrides the config)"); };

    auto* gen = app.add_subcommand("generate", "Write a synthetic sequence with truth and a default config");
    gen->add_option("--out", o.out, "Output directory")->required();
    gen->add_option("--scene", o.scene, "Scene preset")->check(CLI::IsMember(preset_names()));
    gen->add_option("--frames", o.frames, "Frame count")->check(CLI::Range(1, 100000));
    seed_opt(gen);

    auto* vocab = app.add_subcommand("train-vocab", "Cluster descriptors of training sequences into a codebook");
    config_opt(vocab);
    vocab->add_option("--in", o.in, "Training sequence directories")->required()->check(CLI::ExistingDirectory);
    vocab->add_option("--out", o.out, "Model directory (default: the config's)");
    seed_opt(vocab);

    auto* svm = app.add_subcommand("train-svm", "Learn occurrences, the SVM and part models over a codebook");
    config_opt(svm);
    svm->add_option("--in", o.in, "Training sequence directories")->required()->check(CLI::ExistingDirectory);
    svm->add_option("--out", o.out, "Model directory (default: the config's)");
    svm->add_option("--codebook", o.codebook, "Codebook file (default: <out>/codebook.txt)");
    seed_opt(svm);

    auto* detect = app.add_subcommand("detect", "Motion masks, blobs and recognitions per frame");
    config_opt(detect);
    detect->add_option("--in", o.in, "Sequence directory")->required()->expected(1)->check(CLI::ExistingDirectory);
    detect->add_option("--out", o.out, "Output directory")->required();
    detect->add_flag("--no-recognize", o.no_recognize, "Skip recognition; no models needed");
    models_opt(detect);
    seed_opt(detect);

    auto* track = app.add_subcommand("track", "Track recognized objects through a sequence");
    config_opt(track);
    track->add_option("--in", o.in, "Sequence directory")->required()->expected(1)->check(CLI::ExistingDirectory);
    track->add_option("--out", o.out, "Output directory")->required();
    track->add_option("--init", o.init, "detections.jsonl to start from (default: run detection)")->check(CLI::ExistingFile);
    track->add_option("--init-window", o.init_window, "Frames searched for the start frame")->check(CLI::Range(1, 100000));
    track->add_flag("--no-overlay", o.no_overlay, "Skip the annotated frames");
    models_opt(track);
    seed_opt(track);

    auto* eval = app.add_subcommand("eval", "Score tracks against truth");
    config_opt(eval);
    eval->add_option("--tracks", o.tracks, "tracks.jsonl")->required();
    eval->add_option("--truth", o.truth, "truth.jsonl or a sequence directory")->required();
    eval->add_option("--out", o.out, "Output directory")->required();
    seed_opt(eval);

    auto* pipe = app.add_subcommand("pipeline", "Detect, recognize and track, with metrics when truth exists");
    config_opt(pipe);
    pipe->add_option("--in", o.in, "Sequence directory")->required()->expected(1)->check(CLI::ExistingDirectory);
    pipe->add_option("--out", o.out, "Output directory")->required();
    pipe->add_option("--init-window", o.init_window, "Frames searched for the start frame")->check(CLI::Range(1, 100000));
    pipe->add_flag("--no-overlay", o.no_overlay, "Skip the annotated frames");
    models_opt(pipe);
    seed_opt(pipe);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen) return cmd_generate(o);
        if (*vocab) return cmd_train_vocab(o);
        if (*svm) return cmd_train_svm(o);
        if (*detect) return cmd_detect(o);
        if (*track) return cmd_track(o);
        if (*eval) return cmd_eval(o);
        if (*pipe) return cmd_pipeline(o);
    } catch (const DataError& e) {
        std::cerr << "vvtrack: error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidArgument& e) {
        std::cerr << "vvtrack: error: " << e.what() << "\n";
        return 2;
    } catch (const ConvergenceError& e) {
        std::cerr << "vvtrack: error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "vvtrack: error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
