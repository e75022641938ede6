#include "occtrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "occtrack/assignment.hpp"
#include "occtrack/attention.hpp"
#include "occtrack/memory.hpp"

namespace occtrack {

namespace {

Box world_box(const FeatureFrame& frame) {
    return {0.0, 0.0, static_cast<double>(frame.world_w), static_cast<double>(frame.world_h)};
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double map_l2(const FeatureMap& m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

// Template-floored normalized correlation between the query map and a
// candidate crop: cos(q, c) · min(1, |c|/|q|). Plain per-candidate cosine
// treats empty cells as free, so under a growing occlusion the best-scoring
// box slides off the target onto untextured background at the occluder's
// closure speed. Flooring the candidate norm at the query norm makes missing
// energy count against a candidate while still penalizing energy-rich
// mismatches through the cosine term; an exact copy of the query keeps
// score 1.
double match_score(const FeatureMap& q, const FeatureMap& c) {
    double qc = 0.0, qq = 0.0, cc = 0.0;
    for (int i = 0; i < q.size(); ++i) {
        qc += q.data[i] * c.data[i];
        qq += q.data[i] * q.data[i];
        cc += c.data[i] * c.data[i];
    }
    if (qq == 0.0 || cc == 0.0) return 0.0;
    return qc / std::sqrt(qq * std::max(qq, cc));
}

void check_frame(const FeatureFrame& frame, int channels) {
    const FeatureMap& f = frame.features;
    if (f.channels != channels)
        throw std::invalid_argument("tracker: frame has " + std::to_string(f.channels) +
                                    " channels, the model expects " + std::to_string(channels));
    if (f.width <= 0 || f.height <= 0)
        throw std::invalid_argument("tracker: empty feature frame");
    if (frame.world_w != f.width * kFeatureStride || frame.world_h != f.height * kFeatureStride)
        throw std::invalid_argument("tracker: world size does not match the feature grid");
}

}  // namespace

FeatureFrame render_frame(const Scenario& s, int frame) {
    return {render_features(s, frame), s.world_w, s.world_h};
}

FeatureMap roi_extract(const FeatureFrame& frame, const Box& box, int out_size) {
    if (out_size < 1) throw std::invalid_argument("roi_extract: out_size must be positive");
    if (!(box.w > 0.0) || !(box.h > 0.0))
        throw std::invalid_argument("roi_extract: box must have positive size");
    if (intersection_area(box, world_box(frame)) <= 0.0)
        throw std::invalid_argument("roi_extract: box does not intersect the world");
    const FeatureMap& f = frame.features;
    FeatureMap out(f.channels, out_size, out_size);
    for (int v = 0; v < out_size; ++v) {
        const double wy = box.y + (v + 0.5) * box.h / out_size;
        const double fy = std::clamp(wy / kFeatureStride - 0.5, 0.0, f.height - 1.0);
        const int y0 = std::min(static_cast<int>(fy), f.height - 1);
        const int y1 = std::min(y0 + 1, f.height - 1);
        const double ay = fy - y0;
        for (int u = 0; u < out_size; ++u) {
            const double wx = box.x + (u + 0.5) * box.w / out_size;
            const double fx = std::clamp(wx / kFeatureStride - 0.5, 0.0, f.width - 1.0);
            const int x0 = std::min(static_cast<int>(fx), f.width - 1);
            const int x1 = std::min(x0 + 1, f.width - 1);
            const double ax = fx - x0;
            for (int c = 0; c < f.channels; ++c) {
                const double top = (1.0 - ax) * f.at(c, y0, x0) + ax * f.at(c, y0, x1);
                const double bot = (1.0 - ax) * f.at(c, y1, x0) + ax * f.at(c, y1, x1);
                out.at(c, v, u) = (1.0 - ay) * top + ay * bot;
            }
        }
    }
    return out;
}

std::vector<double> pooled_roi(const FeatureFrame& frame, const Box& box, int out_size) {
    return pool(roi_extract(frame, box, out_size));
}

Prediction search_position(const FeatureFrame& frame, const Box& previous,
                           const FeatureMap& query, int radius, int out_size) {
    if (radius < 0) throw std::invalid_argument("search_position: radius must be non-negative");
    if (query.channels != frame.features.channels || query.height != out_size ||
        query.width != out_size)
        throw std::invalid_argument("search_position: query shape does not match the crops");
    const Box world = world_box(frame);
    bool found = false;
    Prediction best{previous, 0.0};
    long best_d2 = 0;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            const Box cand = previous.shifted(dx, dy);
            if (intersection_area(cand, world) <= 0.0) continue;
            const double score = match_score(query, roi_extract(frame, cand, out_size));
            const long d2 = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
            // Strictly better score wins; equal scores prefer the smallest
            // shift (then scan order), so degenerate flat neighborhoods do
            // not pull the box around.
            if (!found || score > best.score || (score == best.score && d2 < best_d2)) {
                best = {cand, score};
                best_d2 = d2;
                found = true;
            }
        }
    }
    if (!found)
        throw std::invalid_argument("search_position: no candidate intersects the world");
    return best;
}

void TrackerConfig::validate() const {
    if (!(o_min >= 0.0) || !(o_min < 1.0))
        throw std::invalid_argument("config: o_min must lie in [0, 1)");
    if (!(reid_distance_threshold > 0.0))
        throw std::invalid_argument("config: reid_distance_threshold must be positive");
    if (!(prediction_score_threshold > 0.0) || !(prediction_score_threshold <= 1.0))
        throw std::invalid_argument("config: prediction_score_threshold must lie in (0, 1]");
    if (lost_patience < 1)
        throw std::invalid_argument("config: lost_patience must be at least 1");
    if (search_radius < 1)
        throw std::invalid_argument("config: search_radius must be at least 1");
    if (!(new_track_min_confidence >= 0.0) || !(new_track_min_confidence <= 1.0))
        throw std::invalid_argument("config: new_track_min_confidence must lie in [0, 1]");
    if (!(claim_iou_threshold > 0.0) || !(claim_iou_threshold <= 1.0))
        throw std::invalid_argument("config: claim_iou_threshold must lie in (0, 1]");
}

Tracker::Tracker(const ModelWeights& weights, const TrackerConfig& cfg)
    : weights_(weights), cfg_(cfg) {
    cfg_.validate();
    if (weights_.channels < 1)
        throw std::invalid_argument("tracker: weights must have at least one channel");
}

std::vector<TrackOutput> Tracker::step(const FeatureFrame& frame,
                                       const std::vector<Detection>& detections) {
    check_frame(frame, weights_.channels);
    if (frame_ > 0 &&
        (frame.world_w != prev_frame_.world_w || frame.world_h != prev_frame_.world_h))
        throw std::invalid_argument("step: frame size changed mid-sequence");
    for (const Detection& d : detections) {
        if (d.frame != frame_)
            throw std::invalid_argument("step: detection stamped for frame " +
                                        std::to_string(d.frame) + ", expected " +
                                        std::to_string(frame_));
        if (!(d.box.w > 0.0) || !(d.box.h > 0.0))
            throw std::invalid_argument("step: detection box must have positive size");
    }
    const Box world = world_box(frame);
    const int n_tracks = static_cast<int>(tracks_.size());

    std::vector<int> active;
    for (int i = 0; i < n_tracks; ++i)
        if (tracks_[i].state == TrackState::Active) active.push_back(i);

    // (a) Every active track picks as distractor the other active track whose
    // previous box overlaps its own the most; no overlap means no distractor.
    // Ties keep the lowest id.
    std::vector<int> distractor_of(n_tracks, -1);
    for (int idx : active) {
        double best = 0.0;
        for (int j : active) {
            if (j == idx) continue;
            const double v = iou(tracks_[idx].box, tracks_[j].box);
            if (v > best) {
                best = v;
                distractor_of[idx] = j;
            }
        }
    }

    // References for this frame: memory states and boxes as they were before
    // any update below, so results do not depend on track iteration order.
    std::vector<FeatureMap> mem_snap(n_tracks);
    std::vector<Box> prev_box(n_tracks);
    for (int idx : active) {
        mem_snap[idx] = tracks_[idx].memory;
        prev_box[idx] = tracks_[idx].box;
    }

    const bool attention_on = cfg_.use_target_attention || cfg_.use_distractor_attention;

    // (b) Position prediction: build the track's appearance query from the
    // previous frame at its previous box (refined against the references when
    // the adaptive weight fires), then search integer shifts in the current
    // frame. A low best score sends the track to Lost without moving it.
    std::vector<int> survivors;
    for (int idx : active) {
        Track& tr = tracks_[idx];
        const int dj = distractor_of[idx];
        double w = 1.0;
        if (cfg_.use_adaptive_weight)
            w = dj >= 0 ? occlusion_weight(iou(prev_box[idx], prev_box[dj]), cfg_.o_min) : 0.0;
        FeatureMap query = roi_extract(prev_frame_, tr.box);
        if (attention_on && w > 0.0) {
            FeatureMap embed = init_state(weights_.memory, query);
            RefineInputs in;
            in.query = &embed;
            in.target_ref = &mem_snap[idx];
            in.distractor_ref = dj >= 0 ? &mem_snap[dj] : nullptr;
            in.weight = w;
            in.use_target = cfg_.use_target_attention;
            in.use_distractor = cfg_.use_distractor_attention;
            // The refinement should re-aim the query, not re-scale it: the
            // match score floors candidate energy against the query's, so an
            // energy-inflated query would discount every candidate and read as
            // a confidence collapse regardless of content. Restoring the raw
            // template's norm keeps the discount anchored to the appearance
            // actually being searched for.
            const double raw_norm = map_l2(query);
            query = refine(weights_.attention, query, in);
            const double ref_norm = map_l2(query);
            if (ref_norm > 0.0 && raw_norm > 0.0)
                for (double& v : query.data) v *= raw_norm / ref_norm;
        }
        const Prediction p = search_position(frame, tr.box, query, cfg_.search_radius);
        tr.last_score = p.score;
        if (p.score < cfg_.prediction_score_threshold) {
            tr.state = TrackState::Lost;
        } else {
            tr.box = p.box;
            tr.history.push_back(p.box);
            survivors.push_back(idx);
        }
    }

    // (c) Embedding refinement and reference update for tracks that kept
    // their target. The adaptive weight now uses the committed boxes.
    for (int idx : survivors) {
        Track& tr = tracks_[idx];
        const int dj = distractor_of[idx];
        double w = 1.0;
        if (cfg_.use_adaptive_weight)
            w = dj >= 0 ? occlusion_weight(iou(tr.box, tracks_[dj].box), cfg_.o_min) : 0.0;
        FeatureMap embed = init_state(weights_.memory, roi_extract(frame, tr.box));
        RefineInputs in;
        in.target_ref = &mem_snap[idx];
        in.distractor_ref = dj >= 0 ? &mem_snap[dj] : nullptr;
        in.weight = w;
        in.use_target = cfg_.use_target_attention;
        in.use_distractor = cfg_.use_distractor_attention;
        FeatureMap refined = refine(weights_.attention, embed, in);
        if (cfg_.use_memory)
            tr.memory = gru_step(weights_.memory, refined, tr.memory);
        else
            tr.memory = std::move(refined);
        tr.embed = pool(tr.memory);
    }

    // (g) Detections explained by a surviving track cannot found or revive
    // another one. Detections outside the world are unusable.
    std::vector<char> claimed(detections.size(), 0);
    for (size_t d = 0; d < detections.size(); ++d) {
        if (intersection_area(detections[d].box, world) <= 0.0) {
            claimed[d] = 1;
            continue;
        }
        for (int idx : survivors) {
            if (iou(detections[d].box, tracks_[idx].box) >= cfg_.claim_iou_threshold) {
                claimed[d] = 1;
                break;
            }
        }
    }
    std::vector<int> unclaimed;
    for (size_t d = 0; d < detections.size(); ++d)
        if (!claimed[d]) unclaimed.push_back(static_cast<int>(d));

    // (d) Re-identification: optimal assignment of lost tracks to unclaimed
    // detections on pooled-embedding cosine distance, pairs under the
    // threshold only.
    std::vector<int> lost;
    for (int i = 0; i < n_tracks; ++i)
        if (tracks_[i].state == TrackState::Lost) lost.push_back(i);
    if (!lost.empty() && !unclaimed.empty()) {
        const int n = static_cast<int>(lost.size());
        const int m = static_cast<int>(unclaimed.size());
        std::vector<std::vector<double>> det_embed(m);
        for (int j = 0; j < m; ++j) {
            const Box& b = detections[unclaimed[j]].box;
            det_embed[j] = pool(init_state(weights_.memory, roi_extract(frame, b)));
        }
        std::vector<double> cost(static_cast<size_t>(n) * m);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) {
                const double dist = 1.0 - dot(tracks_[lost[i]].embed, det_embed[j]);
                cost[static_cast<size_t>(i) * m + j] =
                    dist < cfg_.reid_distance_threshold ? dist : kInfeasibleCost;
            }
        }
        const std::vector<int> match = solve_assignment(cost, n, m);
        for (int i = 0; i < n; ++i) {
            if (match[i] < 0) continue;
            const int d = unclaimed[match[i]];
            Track& tr = tracks_[lost[i]];
            tr.state = TrackState::Active;
            tr.box = detections[d].box;
            tr.history.push_back(tr.box);
            tr.frames_since_seen = 0;
            tr.last_score = detections[d].confidence;
            claimed[d] = 1;
        }
    }

    // (e) Confident detections still unexplained found new tracks.
    for (size_t d = 0; d < detections.size(); ++d) {
        if (claimed[d] || detections[d].confidence <= cfg_.new_track_min_confidence) continue;
        Track tr;
        tr.id = next_id_++;
        tr.state = TrackState::Active;
        tr.box = detections[d].box;
        tr.history.push_back(tr.box);
        tr.memory = init_state(weights_.memory, roi_extract(frame, tr.box));
        tr.embed = pool(tr.memory);
        tr.last_score = detections[d].confidence;
        tracks_.push_back(std::move(tr));
    }

    // (f) Age the tracks that stayed lost; drop them past the patience.
    for (Track& tr : tracks_) {
        if (tr.state != TrackState::Lost) continue;
        ++tr.frames_since_seen;
        if (tr.frames_since_seen > cfg_.lost_patience) tr.state = TrackState::Removed;
    }

    std::vector<TrackOutput> out;
    for (const Track& tr : tracks_) {
        if (tr.state != TrackState::Active) continue;
        if (!(tr.box.area() > 0.0) || intersection_area(tr.box, world) <= 0.0)
            throw std::logic_error("tracker invariant: active box left the world");
        out.push_back({tr.id, tr.box, tr.last_score});
    }
    prev_frame_ = frame;
    ++frame_;
    return out;
}

std::vector<MotRow> track_scenario(const Scenario& s, const ModelWeights& weights,
                                   const TrackerConfig& cfg) {
    Tracker tracker(weights, cfg);
    const std::vector<Detection> all = detections(s);
    std::vector<MotRow> rows;
    for (int f = 0; f < s.frames; ++f) {
        const FeatureFrame frame = render_frame(s, f);
        std::vector<Detection> now;
        for (const Detection& d : all)
            if (d.frame == f) now.push_back(d);
        for (const TrackOutput& o : tracker.step(frame, now))
            rows.push_back({f + 1, o.id, o.box, std::clamp(o.score, 0.0, 1.0), -1, 1.0});
    }
    return rows;
}

}  // namespace occtrack
