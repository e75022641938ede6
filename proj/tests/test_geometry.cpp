#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "occtrack/geometry.hpp"
#include "occtrack/rng.hpp"

using namespace occtrack;

TEST_CASE("box accessors") {
    Box b{10.0, 20.0, 30.0, 40.0};
    CHECK(b.area() == 1200.0);
    CHECK(b.right() == 40.0);
    CHECK(b.bottom() == 60.0);
    CHECK(b.cx() == 25.0);
    CHECK(b.cy() == 40.0);
    CHECK(b.shifted(5.0, -5.0) == Box{15.0, 15.0, 30.0, 40.0});
    CHECK(Box{0, 0, -3, 5}.area() == 0.0);
}

TEST_CASE("intersection") {
    Box a{0, 0, 10, 10};
    Box b{5, 5, 10, 10};
    Box i = intersect(a, b);
    CHECK(i == Box{5, 5, 5, 5});
    CHECK(intersection_area(a, b) == 25.0);
    CHECK(intersection_area(a, Box{10, 0, 5, 5}) == 0.0);  // touching edges
    CHECK(intersection_area(a, Box{20, 20, 5, 5}) == 0.0);
}

TEST_CASE("iou frozen values") {
    Box a{0, 0, 10, 10};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, Box{20, 0, 10, 10}) == 0.0);
    // Half horizontal overlap: inter 50, union 150.
    CHECK(iou(a, Box{5, 0, 10, 10}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    // Quarter diagonal overlap: inter 25, union 175.
    CHECK(iou(a, Box{5, 5, 10, 10}) == doctest::Approx(25.0 / 175.0).epsilon(1e-15));
    // Containment: small box fully inside -> inter = small area, union = big area.
    CHECK(iou(a, Box{2, 2, 5, 5}) == doctest::Approx(25.0 / 100.0).epsilon(1e-15));
    CHECK(iou(Box{0, 0, 0, 0}, Box{0, 0, 0, 0}) == 0.0);
}

TEST_CASE("iou symmetry and range under fuzz") {
    Rng rng(101);
    for (int i = 0; i < 2000; ++i) {
        Box a{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0, 40), rng.uniform(0, 40)};
        Box b{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0, 40), rng.uniform(0, 40)};
        const double v = iou(a, b);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-15);
        CHECK(iou(b, a) == v);
    }
}

TEST_CASE("occlusion weight frozen values") {
    CHECK(occlusion_weight(0.0) == 0.0);
    CHECK(occlusion_weight(0.1) == 0.0);
    CHECK(occlusion_weight(0.2) == 0.0);
    CHECK(occlusion_weight(0.6) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(occlusion_weight(1.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(occlusion_weight(0.5, 0.0) == 0.5);
    CHECK(occlusion_weight(0.75, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS(occlusion_weight(0.5, 1.0));
    CHECK_THROWS(occlusion_weight(0.5, -0.1));
}

TEST_CASE("occlusion weight is continuous at the threshold") {
    const double o_min = 0.2;
    for (double d : {1e-9, 1e-7, 1e-5}) {
        CHECK(occlusion_weight(o_min + d, o_min) <= d / (1.0 - o_min) + 1e-15);
        CHECK(occlusion_weight(o_min - d, o_min) == 0.0);
    }
}

TEST_CASE("occlusion weight monotone non-decreasing under fuzz") {
    Rng rng(102);
    for (int i = 0; i < 10000; ++i) {
        const double o_min = rng.uniform(0.0, 0.95);
        double v1 = rng.uniform(0.0, 1.0);
        double v2 = rng.uniform(0.0, 1.0);
        if (v1 > v2) std::swap(v1, v2);
        const double w1 = occlusion_weight(v1, o_min);
        const double w2 = occlusion_weight(v2, o_min);
        CHECK(w1 <= w2 + 1e-15);
        CHECK(w1 >= 0.0);
        CHECK(w2 <= 1.0 + 1e-12);
    }
}
