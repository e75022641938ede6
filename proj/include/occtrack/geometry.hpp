#pragma once

#include <string>

namespace occtrack {

// Axis-aligned box in image coordinates: (x, y) is the left-top corner.
struct Box {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w > 0.0 && h > 0.0 ? w * h : 0.0; }
    double right() const { return x + w; }
    double bottom() const { return y + h; }
    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
    Box shifted(double dx, double dy) const { return {x + dx, y + dy, w, h}; }
    bool operator==(const Box&) const = default;
    std::string str() const;
};

// Intersection box; zero-size if the boxes do not overlap.
Box intersect(const Box& a, const Box& b);

double intersection_area(const Box& a, const Box& b);

// Intersection over union in [0, 1]. Two empty boxes have IoU 0.
double iou(const Box& a, const Box& b);

// Adaptive occlusion weight: max(v - o_min, 0) / (1 - o_min).
// Zero at or below the threshold o_min, rising linearly to 1 at v = 1.
// Requires o_min in [0, 1).
double occlusion_weight(double v, double o_min = 0.2);

}  // namespace occtrack
