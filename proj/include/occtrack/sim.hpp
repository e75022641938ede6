#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occtrack/geometry.hpp"
#include "occtrack/tensor.hpp"

namespace occtrack {

// One simulated object: a constant-size box on a linear trajectory with a
// fixed depth (higher depth is drawn in front) and a per-channel feature
// signature.
struct ObjectSpec {
    int id = 0;  // 1-based ground-truth identity
    Box box0;    // box at frame 0
    double vx = 0.0;
    double vy = 0.0;
    int depth = 0;
    std::vector<double> signature;
};

// A fully expanded deterministic scene description. Everything downstream
// (features, ground truth, detections) derives from this plus the seed.
struct Scenario {
    int world_w = 224;
    int world_h = 224;
    int frames = 24;
    int channels = 16;
    double noise_sigma = 0.05;
    double detect_full_vis = 0.5;  // at or above: always detected
    double detect_zero_vis = 0.2;  // below: never detected
    double jitter_px = 1.0;        // detection position jitter amplitude
    uint64_t seed = 0;
    std::vector<ObjectSpec> objects;
};

struct GtEntry {
    int frame = 0;  // 0-based
    int id = 0;
    Box box;
    double visibility = 1.0;
};

struct Detection {
    int frame = 0;  // 0-based
    Box box;
    double confidence = 1.0;
};

// Feature grid cells are this many world pixels across.
inline constexpr int kFeatureStride = 8;

Box object_box(const ObjectSpec& obj, int frame);

// Fraction of the object's pixels (1-px grid, pixel centers) not covered by
// any object in front of it.
double object_visibility(const Scenario& s, int obj_index, int frame);

std::vector<GtEntry> ground_truth(const Scenario& s);

// Deterministic detections: each object is detected with probability 1 above
// detect_full_vis, 0 below detect_zero_vis, linear in between; detected boxes
// get uniform position jitter and carry visibility as confidence. Draws use
// per-(frame, object) derived seeds, so results do not depend on query order.
std::vector<Detection> detections(const Scenario& s);

// Probability that an object at this visibility produces a detection.
double detection_probability(const Scenario& s, double visibility);

// Renders the frame's feature map on the world/kFeatureStride grid: Gaussian
// background noise plus front-most-wins compositing of the object signatures,
// averaged over each cell's pixel centers. A fully covered cell carries the
// front object's exact signature; boundary cells attenuate and mix in
// proportion to pixel coverage.
FeatureMap render_features(const Scenario& s, int frame);

struct RandomScenarioParams {
    int world_w = 224;
    int world_h = 224;
    int frames = 24;
    int channels = 16;
    int objects = 4;
    double min_size = 20.0;
    double max_size = 40.0;
    double max_speed = 3.0;
    double noise_sigma = 0.05;
};

// Objects placed so their whole trajectory stays inside the world.
Scenario make_random_scenario(const RandomScenarioParams& p, uint64_t seed);

// Non-interacting patterns: pairwise IoU is exactly 0 in every frame.
// Parallel lanes with generous vertical clearance, or a single-lane train of
// equal-speed followers with fixed gaps.
Scenario make_parallel_scenario(int objects, uint64_t seed);
Scenario make_follow_scenario(int objects, uint64_t seed);

// The occlusion benchmark scene: two crossing pairs in separate lanes.
// Pair A: equal 32x32 boxes meeting head-on; their peak IoU is >= 0.7.
// Pair B: a large front object passing over a small back object; the back
// object is fully covered for three consecutive frames, long enough that
// its detections drop out and identity can only survive re-identification.
Scenario make_crossing_scenario(uint64_t seed);

// Frame index at which the crossing-scenario pairs meet.
inline constexpr int kCrossingFrame = 12;

void save_scenario(const std::string& path, const Scenario& s);
Scenario load_scenario(const std::string& path);

}  // namespace occtrack
