#include "vvtrack/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vvtrack/error.hpp"
#include "vvtrack/frame_io.hpp"
#include "vvtrack/shadow.hpp"
#include "vvtrack/textio.hpp"

namespace vvtrack {

namespace fs = std::filesystem;

std::string truth_to_jsonl(const std::vector<FrameTruth>& truth) {
    std::string out;
    for (const auto& t : truth) out += truth_to_json(t).dump() + "\n";
    return out;
}

std::vector<FrameTruth> truth_from_jsonl(const std::string& text, const std::string& source) {
    std::vector<FrameTruth> out;
    std::istringstream in(text);
    std::string line;
    long n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(truth_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw DataError(source + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

void save_sequence(const fs::path& dir, const SyntheticSequence& seq) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < seq.frames.size(); ++i)
        write_file_atomic(dir / format_frame_name("frame_%04d.ppm", static_cast<int>(i)), encode_ppm(seq.frames[i]));
    write_file_atomic(dir / "truth.jsonl", truth_to_jsonl(seq.truth));
}

SequenceData load_sequence(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
    SequenceData s;
    s.frames = read_sequence(dir, detect_frame_pattern(dir));
    if (s.frames.empty()) throw DataError("no frames in " + dir.string());
    const fs::path truth = dir / "truth.jsonl";
    if (fs::exists(truth)) s.truth = truth_from_jsonl(read_file(truth), truth.string());
    return s;
}

std::vector<GrayFrame> to_gray(const std::vector<RgbFrame>& frames) {
    std::vector<GrayFrame> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(to_grayscale(f));
    return out;
}

Codebook train_vocabulary(const std::vector<SequenceData>& seqs, const PipelineConfig& cfg) {
    std::vector<Vec> pts;
    for (const auto& s : seqs)
        for (std::size_t i = 0; i < s.frames.size(); i += static_cast<std::size_t>(cfg.training.frame_stride))
            for (auto& d : extract_descriptors(to_grayscale(s.frames[i]), cfg.recognition.voting.descriptors))
                if (!d.is_zero()) pts.push_back(std::move(d.values));
    if (static_cast<int>(pts.size()) < cfg.vocabulary.words)
        throw DataError("train_vocabulary: " + std::to_string(pts.size()) + " descriptors for " +
                        std::to_string(cfg.vocabulary.words) + " words");
    const auto cap = static_cast<std::size_t>(cfg.vocabulary.max_descriptors);
    if (pts.size() > cap) {
        // Even stride keeps the subsample deterministic and spread over every sequence.
        std::vector<Vec> sub;
        sub.reserve(cap);
        for (std::size_t i = 0; i < cap; ++i) sub.push_back(std::move(pts[i * pts.size() / cap]));
        pts = std::move(sub);
    }
    return kmeans(pts, cfg.vocabulary.words, cfg.seed, cfg.vocabulary.kmeans).codebook;
}

namespace {

bool fully_inside(const Box& b, int w, int h) { return b.x >= 0 && b.y >= 0 && b.x + b.w <= w && b.y + b.h <= h; }

}  // namespace

TrainedModels train_recognizer(const std::vector<SequenceData>& seqs, const Codebook& cb, const PipelineConfig& cfg) {
    std::set<std::string> labels;
    for (const auto& s : seqs)
        for (const auto& t : s.truth)
            for (const auto& o : t.objects) labels.insert(o.label);
    if (labels.empty()) throw DataError("train: no labelled objects in the training truth");
    const std::vector<std::string> classes(labels.begin(), labels.end());
    const auto class_of = [&](const std::string& l) {
        return static_cast<int>(std::find(classes.begin(), classes.end(), l) - classes.begin());
    };

    std::vector<TrainingExample> examples;
    LabeledSet svm_data;
    svm_data.classes = classes;
    std::vector<Vec> negatives;
    std::mt19937_64 rng(cfg.seed ^ 0x6b67ull);
    std::vector<std::pair<double, double>> sizes;
    for (const auto& s : seqs) {
        for (std::size_t i = 0; i < s.frames.size() && i < s.truth.size(); i += static_cast<std::size_t>(cfg.training.frame_stride)) {
            const GrayFrame g = to_grayscale(s.frames[i]);
            const auto& objs = s.truth[i].objects;
            const std::vector<Descriptor> descs = extract_descriptors(g, cfg.recognition.voting.descriptors);
            for (std::size_t k = 0; k < objs.size(); ++k) {
                const Box& b = objs[k].box;
                if (!fully_inside(b, g.width(), g.height())) continue;
                bool alone = true;
                for (std::size_t m = 0; m < objs.size(); ++m)
                    if (m != k && intersection_area(b, objs[m].box) > 0) alone = false;
                if (!alone) continue;
                examples.push_back({g, class_of(objs[k].label), b});
                sizes.emplace_back(b.w, b.h);
                Vec bow = box_bow(descs, b, cb, cfg.recognition.voting.quantize);
                if (std::accumulate(bow.begin(), bow.end(), 0.0) == 0) continue;
                svm_data.samples.push_back(std::move(bow));
                svm_data.labels.push_back(class_of(objs[k].label));
            }
            if (sizes.empty()) continue;
            for (int n = 0; n < cfg.training.background_per_frame; ++n) {
                // A box of some object's size that touches no object.
                for (int attempt = 0; attempt < 50; ++attempt) {
                    const auto [w, h] = sizes[std::uniform_int_distribution<std::size_t>(0, sizes.size() - 1)(rng)];
                    if (w >= g.width() || h >= g.height()) break;
                    const Box b{std::uniform_real_distribution<double>(0, g.width() - w)(rng),
                                std::uniform_real_distribution<double>(0, g.height() - h)(rng), w, h};
                    if (std::any_of(objs.begin(), objs.end(), [&](const TruthObject& o) { return intersection_area(b, o.box) > 0; }))
                        continue;
                    Vec bow = box_bow(descs, b, cb, cfg.recognition.voting.quantize);
                    if (std::accumulate(bow.begin(), bow.end(), 0.0) > 0) negatives.push_back(std::move(bow));
                    break;
                }
            }
        }
    }
    if (examples.empty()) throw DataError("train: no object lies fully inside a frame without overlapping another");

    TrainedModels out;
    out.models.codebook = cb;
    out.models.occurrences = learn_occurrences(examples, classes, cb, cfg.recognition.voting);
    if (cfg.training.part_models)
        for (int c = 0; c < static_cast<int>(classes.size()); ++c)
            out.models.parts.push_back(learn_part_model(examples, c, classes, cb, cfg.recognition.voting,
                                                        cfg.training.deformation_sigma));

    if (!negatives.empty()) {
        svm_data.classes.push_back(kBackgroundClass);
        for (auto& v : negatives) {
            svm_data.samples.push_back(std::move(v));
            svm_data.labels.push_back(static_cast<int>(classes.size()));
        }
    }
    std::vector<int> per_class(svm_data.classes.size(), 0);
    for (int l : svm_data.labels) ++per_class[static_cast<std::size_t>(l)];
    const int smallest = *std::min_element(per_class.begin(), per_class.end());
    if (svm_data.classes.size() >= 2 && smallest >= 1) {
        out.models.svm = train_svm(svm_data, cfg.svm);
        const int folds = std::min(cfg.training.cv_folds, smallest);
        if (folds >= 2) out.cross_validation = cross_validate(svm_data, folds, cfg.svm);
    }
    return out;
}

void save_models(const fs::path& dir, const RecognitionModels& m) {
    fs::create_directories(dir);
    write_file_atomic(dir / "codebook.txt", save_codebook(m.codebook));
    write_file_atomic(dir / "occurrences.txt", save_occurrences(m.occurrences));
    if (m.svm) write_file_atomic(dir / "svm.txt", save_svm(*m.svm));
    for (const auto& p : m.parts) write_file_atomic(dir / ("parts_" + p.class_name + ".txt"), save_part_model(p));
}

namespace {

template <class F>
auto load_text(const fs::path& path, F&& parse) {
    if (!fs::exists(path)) throw DataError("missing model file " + path.string());
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return parse(in, path.string());
}

}  // namespace

Codebook load_codebook_file(const fs::path& path) {
    return load_text(path, [](std::istream& in, const std::string& src) { return load_codebook(in, src); });
}

RecognitionModels load_models(const fs::path& dir) {
    RecognitionModels m;
    m.codebook = load_codebook_file(dir / "codebook.txt");
    m.occurrences = load_text(dir / "occurrences.txt", [](std::istream& in, const std::string& src) { return load_occurrences(in, src); });
    m.svm = load_text(dir / "svm.txt", [](std::istream& in, const std::string& src) { return load_svm(in, src); });
    if (m.occurrences.words != m.codebook.size())
        throw DataError((dir / "occurrences.txt").string() + ": built for " + std::to_string(m.occurrences.words) +
                        " words, codebook has " + std::to_string(m.codebook.size()));
    std::vector<fs::path> parts;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("parts_", 0) == 0 && e.path().extension() == ".txt") parts.push_back(e.path());
    }
    std::sort(parts.begin(), parts.end());
    for (const auto& p : parts)
        m.parts.push_back(load_text(p, [](std::istream& in, const std::string& src) { return load_part_model(in, src); }));
    return m;
}

double motion_fraction(const BinaryMask& m, const Box& b) {
    const PixelRect r = pixel_cover(b, m.width(), m.height());
    if (r.empty()) return 0.0;
    long on = 0;
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) on += m(x, y) != 0;
    return static_cast<double>(on) / static_cast<double>(r.area());
}

Detector::Detector(const PipelineConfig& cfg, const RecognitionModels* models)
    : cfg_(cfg), models_(models), motion_(cfg.background) {}

FrameResult Detector::process(const RgbFrame& frame, bool recognize) {
    FrameResult r;
    r.frame = index_++;
    const GrayFrame g = to_grayscale(frame);
    r.motion = clean_mask(motion_.process(g).fused);
    const bool any_motion = std::any_of(r.motion.raw().begin(), r.motion.raw().end(), [](auto v) { return v != 0; });
    if (background_.empty()) background_ = frame;
    if (cfg_.detection.remove_shadows && any_motion) {
        const ShadowMasks sm = detect_shadow_edges(frame, cfg_.shadow);
        // Without a hard shadow edge the shadow layer is flat and nothing would be removed.
        if (std::any_of(sm.hard.raw().begin(), sm.hard.raw().end(), [](auto v) { return v != 0; })) {
            const ShadowSplit split = split_shadow(frame, sm, cfg_.shadow.poisson);
            const InvariantImages now = invariant_images(frame), bg = invariant_images(background_);
            const double tol = cfg_.detection.shadow_chroma;
            for (std::size_t i = 0; i < r.motion.size(); ++i) {
                if (!r.motion.raw()[i] || split.shadow.raw()[i] >= 1 - cfg_.detection.shadow_drop) continue;
                if (std::abs(now.inv1.raw()[i] - bg.inv1.raw()[i]) < tol && std::abs(now.inv2.raw()[i] - bg.inv2.raw()[i]) < tol)
                    r.motion.raw()[i] = 0;
            }
            r.motion = clean_mask(r.motion);
        }
    }
    const double a = motion_.state().last_rate;
    const auto blend = [a](Plane<double>& bg, const Plane<double>& now) {
        for (std::size_t i = 0; i < bg.size(); ++i) bg.raw()[i] = (1 - a) * bg.raw()[i] + a * now.raw()[i];
    };
    blend(background_.r, frame.r);
    blend(background_.g, frame.g);
    blend(background_.b, frame.b);
    r.blobs = extract_blobs(r.motion, cfg_.detection.min_blob_area);
    if (recognize && models_ && any_motion) {
        for (auto& rec : recognize_frame(g, *models_, cfg_.recognition))
            if (motion_fraction(r.motion, rec.box) >= cfg_.detection.min_motion_fraction) r.recognitions.push_back(std::move(rec));
    }
    return r;
}

namespace {

Box blob_box(const Blob& b) {
    return Box{static_cast<double>(b.bbox.x0), static_cast<double>(b.bbox.y0), static_cast<double>(b.bbox.x1 - b.bbox.x0),
               static_cast<double>(b.bbox.y1 - b.bbox.y0)};
}

}  // namespace

std::string detections_to_jsonl(const std::vector<FrameResult>& frames) {
    std::string out;
    for (const auto& f : frames) {
        nlohmann::json blobs = nlohmann::json::array(), recs = nlohmann::json::array();
        for (const auto& b : f.blobs) {
            const Box bb = blob_box(b);
            blobs.push_back({bb.x, bb.y, bb.w, bb.h});
        }
        for (const auto& r : f.recognitions) {
            nlohmann::json j = {{"label", r.label},       {"class_id", r.hypothesis.class_id},
                                {"x", r.hypothesis.x},    {"y", r.hypothesis.y},
                                {"s", r.hypothesis.s},    {"score", r.hypothesis.score},
                                {"box", {r.box.x, r.box.y, r.box.w, r.box.h}}};
            if (r.part_energy) j["part_energy"] = *r.part_energy;
            recs.push_back(std::move(j));
        }
        out += nlohmann::json{{"frame", f.frame}, {"blobs", blobs}, {"recognitions", recs}}.dump() + "\n";
    }
    return out;
}

std::vector<FrameRecognitions> detections_from_jsonl(const std::string& text, const std::string& source) {
    std::vector<FrameRecognitions> out;
    std::istringstream in(text);
    std::string line;
    long n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            FrameRecognitions f;
            f.frame = j.at("frame").get<int>();
            for (const auto& r : j.at("recognitions")) {
                Recognition rec;
                rec.label = r.at("label").get<std::string>();
                rec.hypothesis = {r.at("class_id").get<int>(), r.at("x").get<double>(), r.at("y").get<double>(),
                                  r.at("s").get<double>(), r.at("score").get<double>()};
                const auto& b = r.at("box");
                if (!b.is_array() || b.size() != 4) throw DataError("box must be [x, y, w, h]");
                rec.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
                if (!(rec.box.w > 0 && rec.box.h > 0)) throw DataError("box must have positive size");
                if (r.contains("part_energy")) rec.part_energy = r["part_energy"].get<double>();
                f.recognitions.push_back(std::move(rec));
            }
            out.push_back(std::move(f));
        } catch (const std::exception& e) {
            throw DataError(source + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

int select_start_frame(const std::vector<FrameRecognitions>& frames, int init_window) {
    if (init_window < 1) throw InvalidArgument("select_start_frame: init_window must be >= 1");
    int first = -1, best_frame = -1;
    std::size_t best = 0;
    for (const auto& f : frames) {
        if (f.recognitions.empty()) continue;
        if (first < 0) first = f.frame;
        if (f.frame < first || f.frame >= first + init_window) continue;
        if (f.recognitions.size() > best || (f.recognitions.size() == best && f.frame < best_frame)) {
            best = f.recognitions.size();
            best_frame = f.frame;
        }
    }
    return best_frame;
}

std::vector<InitialTrack> initial_tracks(const std::vector<Recognition>& recs) {
    std::vector<InitialTrack> out;
    for (const auto& r : recs) out.push_back({r.box, r.label});
    return out;
}

PipelineResult run_pipeline(const std::vector<RgbFrame>& frames, const RecognitionModels& models,
                            const PipelineConfig& cfg, int init_window) {
    if (frames.empty()) throw DataError("pipeline: no frames");
    if (init_window < 1) throw InvalidArgument("run_pipeline: init_window must be >= 1");
    PipelineResult out;
    Detector det(cfg, &models);
    std::vector<FrameRecognitions> found;
    int first_hit = -1;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const bool searching = first_hit < 0 || static_cast<int>(t) < first_hit + init_window;
        out.frames.push_back(det.process(frames[t], searching));
        const auto& f = out.frames.back();
        if (f.recognitions.empty()) continue;
        if (first_hit < 0) first_hit = f.frame;
        found.push_back({f.frame, f.recognitions});
    }
    out.start_frame = select_start_frame(found, init_window);
    if (out.start_frame >= 0)
        out.tracks = track_sequence(to_gray(frames),
                                    initial_tracks(out.frames[static_cast<std::size_t>(out.start_frame)].recognitions),
                                    cfg.tracker, out.start_frame);
    return out;
}

MetricsReport evaluate_pipeline(const PipelineResult& r, const std::vector<FrameTruth>& truth, double iou_threshold) {
    MetricsReport m;
    std::vector<FrameDetections> dets;
    // The first frame only seeds the background model.
    for (std::size_t i = 1; i < r.frames.size(); ++i) {
        FrameDetections d{r.frames[i].frame, r.frames[i].motion, {}};
        for (const auto& b : r.frames[i].blobs) d.blobs.push_back(blob_box(b));
        dets.push_back(std::move(d));
    }
    if (!dets.empty()) m.detection = evaluate_detections(dets, truth, iou_threshold);
    if (!r.tracks.records.empty()) m.tracking = evaluate_tracks(r.tracks.records, truth, iou_threshold);
    return m;
}

}  // namespace vvtrack
