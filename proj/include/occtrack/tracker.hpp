#pragma once

#include <span>
#include <vector>

#include "occtrack/geometry.hpp"
#include "occtrack/mot_io.hpp"
#include "occtrack/sim.hpp"
#include "occtrack/tensor.hpp"
#include "occtrack/weights.hpp"

namespace occtrack {

// A dense feature grid plus the pixel size of the world it covers. The grid
// resolution is world size / kFeatureStride.
struct FeatureFrame {
    FeatureMap features;
    int world_w = 0;
    int world_h = 0;
};

FeatureFrame render_frame(const Scenario& s, int frame);

// Bilinear crop-and-resize of a world-coordinate box onto an out_size x
// out_size grid. Samples at the centers of the output cells, in feature-grid
// coordinates, clamped at the grid border. The box must have positive area
// and intersect the world.
FeatureMap roi_extract(const FeatureFrame& frame, const Box& box, int out_size = 8);

// pool(roi_extract(frame, box, out_size)): the unit-norm appearance vector
// of a crop, used both as search query and as search candidate score input.
std::vector<double> pooled_roi(const FeatureFrame& frame, const Box& box, int out_size = 8);

struct Prediction {
    Box box;
    double score = 0.0;
};

// Exhaustive integer-shift search around `previous`: among all shifted boxes
// within the radius that still intersect the world, returns the one whose
// crop correlates best with the query template (cosine similarity over the
// full C x out x out maps; spatial structure is what localizes). Score ties
// prefer the smallest shift, so a featureless neighborhood stays put.
Prediction search_position(const FeatureFrame& frame, const Box& previous,
                           const FeatureMap& query, int radius, int out_size = 8);

enum class TrackState { Active, Lost, Removed };

struct TrackerConfig {
    // Pairwise-overlap threshold below which the adaptive weight is zero.
    double o_min = 0.2;
    // Cosine distance ceiling for re-identifying a lost track on a detection.
    double reid_distance_threshold = 0.4;
    // Prediction scores below this send an active track to Lost. The default
    // is chosen so the non-interacting suites produce no false transitions.
    double prediction_score_threshold = 0.6;
    // Lost tracks are dropped after this many consecutive unseen frames.
    int lost_patience = 30;
    // Integer search radius (world pixels) for position prediction.
    int search_radius = 6;
    // Unclaimed detections need at least this confidence to found a track.
    double new_track_min_confidence = 0.5;
    // Detections overlapping an active track at or above this IoU are
    // considered explained and cannot found or revive other tracks.
    double claim_iou_threshold = 0.5;

    // Variant switches.
    bool use_target_attention = true;
    bool use_distractor_attention = true;
    bool use_memory = true;
    bool use_adaptive_weight = true;

    // Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

struct Track {
    int id = 0;
    TrackState state = TrackState::Active;
    Box box;                     // last committed box
    std::vector<Box> history;    // one entry per frame the track reported a box
    FeatureMap memory;           // aggregated reference, or the last refined
                                 // embedding when memory aggregation is off
    std::vector<double> embed;   // pool(memory), kept in sync
    int frames_since_seen = 0;   // 0 while Active
    double last_score = 1.0;
};

struct TrackOutput {
    int id = 0;
    Box box;
    double score = 1.0;
};

// Online multi-object tracker. Frames must be fed strictly in order; each
// step consumes the detections stamped with the current frame index and
// returns the active tracks in id order. Given equal inputs the sequence of
// outputs is reproducible bit for bit.
class Tracker {
  public:
    Tracker(const ModelWeights& weights, const TrackerConfig& cfg);

    std::vector<TrackOutput> step(const FeatureFrame& frame,
                                  const std::vector<Detection>& detections);

    const std::vector<Track>& tracks() const { return tracks_; }
    int frames_processed() const { return frame_; }
    const TrackerConfig& config() const { return cfg_; }

  private:
    ModelWeights weights_;
    TrackerConfig cfg_;
    int frame_ = 0;
    int next_id_ = 1;
    std::vector<Track> tracks_;
    FeatureFrame prev_frame_;  // template source for position prediction
};

// Runs a tracker over a scenario's rendered frames and simulated detections.
// Rows use 1-based frames and the prediction score (clamped to [0, 1]) as
// confidence.
std::vector<MotRow> track_scenario(const Scenario& s, const ModelWeights& weights,
                                   const TrackerConfig& cfg);

}  // namespace occtrack
