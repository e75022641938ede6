#include "occtrack/geometry.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace occtrack {

std::string Box::str() const {
    std::ostringstream os;
    os << "[" << x << "," << y << " " << w << "x" << h << "]";
    return os.str();
}

Box intersect(const Box& a, const Box& b) {
    const double x0 = std::max(a.x, b.x);
    const double y0 = std::max(a.y, b.y);
    const double x1 = std::min(a.right(), b.right());
    const double y1 = std::min(a.bottom(), b.bottom());
    if (x1 <= x0 || y1 <= y0) return {x0, y0, 0.0, 0.0};
    return {x0, y0, x1 - x0, y1 - y0};
}

double intersection_area(const Box& a, const Box& b) { return intersect(a, b).area(); }

double iou(const Box& a, const Box& b) {
    const double inter = intersection_area(a, b);
    if (inter <= 0.0) return 0.0;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double occlusion_weight(double v, double o_min) {
    if (!(o_min >= 0.0 && o_min < 1.0))
        throw std::invalid_argument("occlusion_weight: o_min must be in [0, 1)");
    const double shifted = v - o_min;
    if (shifted <= 0.0) return 0.0;
    return shifted / (1.0 - o_min);
}

}  // namespace occtrack
