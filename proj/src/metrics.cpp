#include "vvtrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "vvtrack/error.hpp"
#include "vvtrack/textio.hpp"

namespace vvtrack {

std::vector<BoxMatch> greedy_match(const std::vector<Box>& pred, const std::vector<int>& pred_ids,
                                   const std::vector<Box>& truth, const std::vector<int>& truth_ids,
                                   double threshold) {
    if (pred.size() != pred_ids.size() || truth.size() != truth_ids.size())
        throw InvalidArgument("greedy_match: ids must parallel boxes");
    std::vector<BoxMatch> cand;
    for (int i = 0; i < static_cast<int>(pred.size()); ++i)
        for (int j = 0; j < static_cast<int>(truth.size()); ++j) {
            const double v = iou(pred[static_cast<std::size_t>(i)], truth[static_cast<std::size_t>(j)]);
            if (v >= threshold && v > 0) cand.push_back({i, j, v});
        }
    std::sort(cand.begin(), cand.end(), [&](const BoxMatch& a, const BoxMatch& b) {
        return std::make_tuple(-a.iou, pred_ids[static_cast<std::size_t>(a.pred)], truth_ids[static_cast<std::size_t>(a.truth)]) <
               std::make_tuple(-b.iou, pred_ids[static_cast<std::size_t>(b.pred)], truth_ids[static_cast<std::size_t>(b.truth)]);
    });
    std::vector<bool> used_p(pred.size()), used_t(truth.size());
    std::vector<BoxMatch> out;
    for (const auto& m : cand) {
        if (used_p[static_cast<std::size_t>(m.pred)] || used_t[static_cast<std::size_t>(m.truth)]) continue;
        used_p[static_cast<std::size_t>(m.pred)] = used_t[static_cast<std::size_t>(m.truth)] = true;
        out.push_back(m);
    }
    return out;
}

TrackingMetrics evaluate_tracks(const std::vector<TrackRecord>& tracks, const std::vector<FrameTruth>& truth,
                                double iou_threshold) {
    if (tracks.empty() || truth.empty()) throw DataError("evaluate: tracks and truth must both be non-empty");
    const auto [tmin, tmax] = std::minmax_element(tracks.begin(), tracks.end(),
                                                  [](const TrackRecord& a, const TrackRecord& b) { return a.frame < b.frame; });
    const auto [gmin, gmax] = std::minmax_element(truth.begin(), truth.end(),
                                                  [](const FrameTruth& a, const FrameTruth& b) { return a.frame < b.frame; });
    TrackingMetrics m;
    m.first_frame = std::max(tmin->frame, gmin->frame);
    m.last_frame = std::min(tmax->frame, gmax->frame);
    if (m.first_frame > m.last_frame)
        throw DataError("evaluate: track frames " + std::to_string(tmin->frame) + ".." + std::to_string(tmax->frame) +
                        " do not overlap truth frames " + std::to_string(gmin->frame) + ".." + std::to_string(gmax->frame));

    std::map<int, std::vector<const TrackRecord*>> by_frame;
    for (const auto& r : tracks) by_frame[r.frame].push_back(&r);
    std::map<int, const FrameTruth*> truth_by_frame;
    for (const auto& t : truth) {
        if (!truth_by_frame.emplace(t.frame, &t).second) throw DataError("evaluate: duplicate truth frame " + std::to_string(t.frame));
    }

    std::map<int, int> last_id;  // truth id -> last matched track id
    std::map<int, std::pair<double, long>> per_track;
    double err_sum = 0;
    int frames = 0;
    for (int f = m.first_frame; f <= m.last_frame; ++f) {
        const auto ti = truth_by_frame.find(f);
        if (ti == truth_by_frame.end()) continue;
        ++frames;
        std::vector<Box> pb, tb;
        std::vector<int> pid, tid;
        if (auto it = by_frame.find(f); it != by_frame.end())
            for (const auto* r : it->second) {
                pb.push_back(r->box());
                pid.push_back(r->id);
            }
        for (const auto& o : ti->second->objects) {
            tb.push_back(o.box);
            tid.push_back(o.id);
        }
        const auto matches = greedy_match(pb, pid, tb, tid, iou_threshold);
        m.truth_instances += static_cast<long>(tb.size());
        m.matched += static_cast<long>(matches.size());
        m.false_positives += static_cast<long>(pb.size() - matches.size());
        for (const auto& mt : matches) {
            const Box& p = pb[static_cast<std::size_t>(mt.pred)];
            const Box& t = tb[static_cast<std::size_t>(mt.truth)];
            const double e = std::hypot(p.cx() - t.cx(), p.cy() - t.cy());
            err_sum += e;
            const int track = pid[static_cast<std::size_t>(mt.pred)], object = tid[static_cast<std::size_t>(mt.truth)];
            auto& acc = per_track[track];
            acc.first += e;
            ++acc.second;
            const auto prev = last_id.find(object);
            if (prev != last_id.end() && prev->second != track) ++m.id_switches;
            last_id[object] = track;
        }
    }
    m.success_rate = m.truth_instances ? static_cast<double>(m.matched) / static_cast<double>(m.truth_instances) : 0.0;
    m.mean_center_error = m.matched ? err_sum / static_cast<double>(m.matched) : 0.0;
    m.fp_per_frame = frames ? static_cast<double>(m.false_positives) / frames : 0.0;
    for (const auto& [id, acc] : per_track) m.center_error_by_track[id] = acc.first / static_cast<double>(acc.second);
    return m;
}

double mask_f1(const BinaryMask& pred, const BinaryMask& truth) {
    if (!pred.same_shape(truth)) throw InvalidArgument("mask_f1: shape mismatch");
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.raw()[i] != 0, t = truth.raw()[i] != 0;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
    }
    if (tp + fp + fn == 0) return 1.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

DetectionMetrics evaluate_detections(const std::vector<FrameDetections>& detections,
                                     const std::vector<FrameTruth>& truth, double iou_threshold) {
    std::map<int, const FrameTruth*> by_frame;
    for (const auto& t : truth) by_frame[t.frame] = &t;
    DetectionMetrics m;
    long tp = 0, fp = 0, fn = 0;
    for (const auto& d : detections) {
        const auto it = by_frame.find(d.frame);
        if (it == by_frame.end()) continue;
        const FrameTruth& t = *it->second;
        ++m.frames;
        if (!d.mask.same_shape(t.motion)) throw DataError("evaluate: mask size differs from truth at frame " + std::to_string(d.frame));
        for (std::size_t i = 0; i < d.mask.size(); ++i) {
            const bool p = d.mask.raw()[i] != 0, g = t.motion.raw()[i] != 0;
            tp += p && g;
            fp += p && !g;
            fn += !p && g;
        }
        std::vector<Box> tb;
        std::vector<int> tid, pid;
        for (const auto& o : t.objects) {
            tb.push_back(o.box);
            tid.push_back(o.id);
        }
        for (int i = 0; i < static_cast<int>(d.blobs.size()); ++i) pid.push_back(i);
        m.blobs += static_cast<long>(d.blobs.size());
        m.truth_objects += static_cast<long>(tb.size());
        m.matched += static_cast<long>(greedy_match(d.blobs, pid, tb, tid, iou_threshold).size());
    }
    if (m.frames == 0) throw DataError("evaluate: no detection frame has truth");
    m.mask_f1 = tp + fp + fn == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    m.blob_precision = m.blobs ? static_cast<double>(m.matched) / static_cast<double>(m.blobs) : 1.0;
    m.blob_recall = m.truth_objects ? static_cast<double>(m.matched) / static_cast<double>(m.truth_objects) : 1.0;
    return m;
}

std::string metrics_csv(const MetricsReport& r) {
    std::ostringstream out;
    out << "metric,value\n";
    const auto row = [&](const std::string& k, double v) { out << k << ',' << format_double(v) << '\n'; };
    if (r.detection) {
        row("detection.frames", static_cast<double>(r.detection->frames));
        row("detection.mask_f1", r.detection->mask_f1);
        row("detection.blob_precision", r.detection->blob_precision);
        row("detection.blob_recall", r.detection->blob_recall);
    }
    if (r.tracking) {
        const auto& t = *r.tracking;
        row("tracking.first_frame", t.first_frame);
        row("tracking.last_frame", t.last_frame);
        row("tracking.success_rate", t.success_rate);
        row("tracking.mean_center_error", t.mean_center_error);
        row("tracking.fp_per_frame", t.fp_per_frame);
        row("tracking.id_switches", t.id_switches);
        for (const auto& [id, e] : t.center_error_by_track) row("tracking.center_error.track" + std::to_string(id), e);
    }
    if (r.classifier) {
        row("classifier.accuracy", r.classifier->accuracy);
        for (std::size_t c = 0; c < r.classifier->classes.size() && c < r.classifier->auc.size(); ++c)
            row("classifier.auc." + r.classifier->classes[c], r.classifier->auc[c]);
    }
    return out.str();
}

nlohmann::json metrics_json(const MetricsReport& r) {
    nlohmann::json j = nlohmann::json::object();
    if (r.detection) {
        const auto& d = *r.detection;
        j["detection"] = {{"frames", d.frames},
                          {"mask_f1", d.mask_f1},
                          {"blob_precision", d.blob_precision},
                          {"blob_recall", d.blob_recall},
                          {"definition", "mask F1 pooled over pixels of frames with truth; blobs match truth boxes "
                                         "greedily at IoU >= threshold"}};
    }
    if (r.tracking) {
        const auto& t = *r.tracking;
        nlohmann::json per = nlohmann::json::object();
        for (const auto& [id, e] : t.center_error_by_track) per[std::to_string(id)] = e;
        j["tracking"] = {{"first_frame", t.first_frame},
                         {"last_frame", t.last_frame},
                         {"truth_instances", t.truth_instances},
                         {"matched", t.matched},
                         {"false_positives", t.false_positives},
                         {"success_rate", t.success_rate},
                         {"mean_center_error", t.mean_center_error},
                         {"fp_per_frame", t.fp_per_frame},
                         {"id_switches", t.id_switches},
                         {"center_error_by_track", per},
                         {"definition", "per frame, tracks match truth greedily by IoU >= threshold (higher IoU, then "
                                        "lower id); success = matched / truth instances; FP = unmatched track boxes; a "
                                        "switch is a change of a truth object's matched track id"}};
    }
    if (r.classifier) {
        j["classifier"] = {{"accuracy", r.classifier->accuracy},
                           {"classes", r.classifier->classes},
                           {"confusion", r.classifier->confusion},
                           {"auc", r.classifier->auc}};
    }
    return j;
}

}  // namespace vvtrack
