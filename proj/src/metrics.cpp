#include "occtrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "occtrack/assignment.hpp"
#include "occtrack/geometry.hpp"

namespace occtrack {

double MotMetrics::mota() const {
    if (gt_count == 0) return fp + id_switches == 0 ? 1.0 : 0.0;
    return 1.0 - static_cast<double>(fn + fp + id_switches) / gt_count;
}

double MotMetrics::motp() const {
    return matches == 0 ? 0.0 : iou_sum / static_cast<double>(matches);
}

double MotMetrics::idf1() const {
    if (gt_count + hyp_count == 0) return 1.0;
    return 2.0 * static_cast<double>(idtp) / static_cast<double>(gt_count + hyp_count);
}

namespace {

struct IdBox {
    int id;
    Box box;
};

// (frame -> rows sorted by id). std::map keeps frame order deterministic.
std::map<int, std::vector<IdBox>> bucket_by_frame(const std::vector<MotRow>& rows) {
    std::map<int, std::vector<IdBox>> out;
    for (const MotRow& r : rows) out[r.frame].push_back({r.id, r.box});
    for (auto& [frame, list] : out)
        std::stable_sort(list.begin(), list.end(),
                         [](const IdBox& a, const IdBox& b) { return a.id < b.id; });
    return out;
}

}  // namespace

MotMetrics evaluate_tracking(const std::vector<MotRow>& gt, const std::vector<MotRow>& hyp,
                             double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0))
        throw std::invalid_argument("evaluate_tracking: threshold must be in (0, 1]");

    MotMetrics m;
    m.gt_count = static_cast<long>(gt.size());
    m.hyp_count = static_cast<long>(hyp.size());

    auto gt_frames = bucket_by_frame(gt);
    auto hyp_frames = bucket_by_frame(hyp);

    std::vector<int> frames;
    for (const auto& [f, _] : gt_frames) frames.push_back(f);
    for (const auto& [f, _] : hyp_frames)
        if (!gt_frames.count(f)) frames.push_back(f);
    std::sort(frames.begin(), frames.end());

    std::map<int, int> last_match;  // gt id -> most recent matched hyp id
    static const std::vector<IdBox> kNone;

    for (int f : frames) {
        const auto git = gt_frames.find(f);
        const auto hit = hyp_frames.find(f);
        const std::vector<IdBox>& gts = git == gt_frames.end() ? kNone : git->second;
        const std::vector<IdBox>& hyps = hit == hyp_frames.end() ? kNone : hit->second;

        std::vector<char> gt_used(gts.size(), 0), hyp_used(hyps.size(), 0);
        std::vector<std::pair<size_t, size_t>> pairs;

        // Keep still-valid matches from the running mapping.
        for (size_t i = 0; i < gts.size(); ++i) {
            const auto lm = last_match.find(gts[i].id);
            if (lm == last_match.end()) continue;
            for (size_t j = 0; j < hyps.size(); ++j) {
                if (hyp_used[j] || hyps[j].id != lm->second) continue;
                if (iou(gts[i].box, hyps[j].box) >= iou_threshold) {
                    gt_used[i] = hyp_used[j] = 1;
                    pairs.push_back({i, j});
                }
                break;
            }
        }

        // Assign the rest by minimum total 1 - IoU.
        std::vector<size_t> free_g, free_h;
        for (size_t i = 0; i < gts.size(); ++i)
            if (!gt_used[i]) free_g.push_back(i);
        for (size_t j = 0; j < hyps.size(); ++j)
            if (!hyp_used[j]) free_h.push_back(j);
        if (!free_g.empty() && !free_h.empty()) {
            std::vector<double> cost(free_g.size() * free_h.size());
            for (size_t a = 0; a < free_g.size(); ++a)
                for (size_t b = 0; b < free_h.size(); ++b) {
                    const double v = iou(gts[free_g[a]].box, hyps[free_h[b]].box);
                    cost[a * free_h.size() + b] =
                        v >= iou_threshold ? 1.0 - v : kInfeasibleCost;
                }
            const auto assign = solve_assignment(cost, static_cast<int>(free_g.size()),
                                                 static_cast<int>(free_h.size()));
            for (size_t a = 0; a < free_g.size(); ++a)
                if (assign[a] >= 0) {
                    const size_t i = free_g[a], j = free_h[assign[a]];
                    gt_used[i] = hyp_used[j] = 1;
                    pairs.push_back({i, j});
                }
        }

        for (const auto& [i, j] : pairs) {
            ++m.matches;
            m.iou_sum += iou(gts[i].box, hyps[j].box);
            const auto lm = last_match.find(gts[i].id);
            if (lm != last_match.end() && lm->second != hyps[j].id) ++m.id_switches;
            last_match[gts[i].id] = hyps[j].id;
        }
        for (size_t i = 0; i < gts.size(); ++i)
            if (!gt_used[i]) ++m.fn;
        for (size_t j = 0; j < hyps.size(); ++j)
            if (!hyp_used[j]) ++m.fp;
    }

    // IDF1: max-weight identity pairing, weights = frames at or above the
    // threshold for that (gt id, hyp id) pair.
    std::map<int, std::map<int, Box>> gt_tracks, hyp_tracks;
    for (const MotRow& r : gt) gt_tracks[r.id][r.frame] = r.box;
    for (const MotRow& r : hyp) hyp_tracks[r.id][r.frame] = r.box;
    std::vector<int> gids, hids;
    for (const auto& [id, _] : gt_tracks) gids.push_back(id);
    for (const auto& [id, _] : hyp_tracks) hids.push_back(id);
    if (!gids.empty() && !hids.empty()) {
        std::vector<double> cost(gids.size() * hids.size(), 0.0);
        for (size_t a = 0; a < gids.size(); ++a) {
            const auto& gtrack = gt_tracks[gids[a]];
            for (size_t b = 0; b < hids.size(); ++b) {
                long w = 0;
                for (const auto& [frame, gbox] : gtrack) {
                    const auto& htrack = hyp_tracks[hids[b]];
                    const auto it = htrack.find(frame);
                    if (it != htrack.end() && iou(gbox, it->second) >= iou_threshold) ++w;
                }
                cost[a * hids.size() + b] = -static_cast<double>(w);
            }
        }
        const auto assign = solve_assignment(cost, static_cast<int>(gids.size()),
                                             static_cast<int>(hids.size()));
        for (size_t a = 0; a < gids.size(); ++a)
            if (assign[a] >= 0)
                m.idtp += static_cast<long>(-cost[a * hids.size() + assign[a]]);
    }
    return m;
}

int occlusion_bin(double occlusion) {
    if (occlusion < 0.0) occlusion = 0.0;
    if (occlusion > 1.0) occlusion = 1.0;
    return std::min(9, static_cast<int>(std::floor(occlusion * 10.0 + 1e-9)));
}

void OcclusionProfile::merge(const OcclusionProfile& other) {
    for (int b = 0; b < 10; ++b) {
        total[b] += other.total[b];
        tracked[b] += other.tracked[b];
    }
}

double OcclusionProfile::fraction(int bin) const {
    if (bin < 0 || bin >= 10) throw std::invalid_argument("fraction: bin out of range");
    if (total[bin] == 0) return 0.0;
    return static_cast<double>(tracked[bin]) / static_cast<double>(total[bin]);
}

OcclusionProfile occlusion_profile(const std::vector<MotRow>& gt,
                                   const std::vector<MotRow>& hyp,
                                   double iou_threshold) {
    std::map<int, std::vector<Box>> hyp_frames;
    for (const MotRow& r : hyp) hyp_frames[r.frame].push_back(r.box);
    OcclusionProfile p;
    for (const MotRow& g : gt) {
        const int bin = occlusion_bin(1.0 - g.visibility);
        ++p.total[bin];
        const auto it = hyp_frames.find(g.frame);
        if (it == hyp_frames.end()) continue;
        for (const Box& b : it->second)
            if (iou(g.box, b) >= iou_threshold) {
                ++p.tracked[bin];
                break;
            }
    }
    return p;
}

}  // namespace occtrack
