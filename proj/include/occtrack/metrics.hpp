#pragma once

#include <array>
#include <vector>

#include "occtrack/mot_io.hpp"

namespace occtrack {

struct MotMetrics {
    long gt_count = 0;
    long hyp_count = 0;
    long matches = 0;
    long fp = 0;
    long fn = 0;
    long id_switches = 0;
    double iou_sum = 0.0;  // over matches
    long idtp = 0;         // identity true positives

    // 1 - (FN + FP + IDS) / gt_count; 1.0 for an empty ground truth with no
    // hypotheses to penalize.
    double mota() const;
    // Mean IoU over matched pairs; 0 with no matches.
    double motp() const;
    // 2 * IDTP / (gt_count + hyp_count); 1.0 when both are empty.
    double idf1() const;
};

// CLEAR MOT evaluation at the given IoU threshold. Frame by frame:
// carried-over matches from the previous mapping are kept first whenever the
// pair still clears the threshold; the rest are matched by minimum-cost
// assignment on 1 - IoU. An identity switch is counted when a ground-truth
// identity is matched to a different hypothesis id than the one it was most
// recently matched to. IDF1 comes from a global max-weight pairing of
// identities, weighted by per-frame threshold hits.
MotMetrics evaluate_tracking(const std::vector<MotRow>& gt, const std::vector<MotRow>& hyp,
                             double iou_threshold = 0.5);

// Per-occlusion-bin coverage: each ground-truth box falls in one of ten
// occlusion bins ([0,10%), ..., [90,100%]) by 1 - visibility, and counts as
// tracked when any hypothesis box in its frame overlaps it at or above the
// IoU threshold, regardless of identity.
struct OcclusionProfile {
    std::array<long, 10> total{};
    std::array<long, 10> tracked{};

    void merge(const OcclusionProfile& other);
    bool empty_bin(int bin) const { return total[bin] == 0; }
    double fraction(int bin) const;
};

OcclusionProfile occlusion_profile(const std::vector<MotRow>& gt,
                                   const std::vector<MotRow>& hyp,
                                   double iou_threshold = 0.5);

int occlusion_bin(double occlusion);

}  // namespace occtrack
