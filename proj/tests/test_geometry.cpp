#include <cmath>

#include "doctest.h"
#include "hqm/errors.hpp"
#include "hqm/geometry.hpp"

using namespace hqm;

TEST_CASE("iou") {
  const Box a{0.5, 0.5, 0.4, 0.4};
  CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(iou(Box{0.2, 0.5, 0.1, 0.1}, Box{0.8, 0.5, 0.1, 0.1}) == 0.0);
  // inter 0.3·0.4 = 0.12, union 0.16 + 0.16 - 0.12 = 0.20
  CHECK(iou(a, Box{0.6, 0.5, 0.4, 0.4}) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("giou") {
  const Box a{0.5, 0.5, 0.4, 0.4};
  CHECK(giou(a, a) == 1.0);
  CHECK(giou(a, Box{0.6, 0.5, 0.4, 0.4}) == doctest::Approx(0.6).epsilon(1e-12));
  const Box left{0.3, 0.5, 0.2, 0.4}, right{0.5, 0.5, 0.2, 0.4};
  CHECK(giou(left, right) == doctest::Approx(iou(left, right)).epsilon(1e-15));
  CHECK(giou(Box{0.2, 0.2, 0.1, 0.1}, Box{0.8, 0.8, 0.1, 0.1}) < 0.0);
}

TEST_CASE("iou and giou properties on random boxes") {
  Rng rng(9);
  for (int i = 0; i < 2000; ++i) {
    const Box a{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)};
    const Box b{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)};
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab < 1.0);
    CHECK(giou(a, b) <= ab + 1e-15);
    CHECK(giou(a, b) > -1.0);
  }
}

TEST_CASE("pair_l1") {
  const Box a{0, 0, 1, 1}, b{0.1, 0, 1, 1};
  CHECK(pair_l1(a, a) == 0.0);
  CHECK(pair_l1(a, b) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(pair_l1(a, b) == pair_l1(b, a));
}

TEST_CASE("corner round trip") {
  const Box b{0.3, 0.6, 0.2, 0.1};
  const Corners c = to_corners(b);
  CHECK(c.x1 == doctest::Approx(0.2));
  CHECK(c.y2 == doctest::Approx(0.65));
  const Box back = from_corners(c);
  CHECK(back.cx == doctest::Approx(b.cx).epsilon(1e-15));
  CHECK(back.h == doctest::Approx(b.h).epsilon(1e-15));
}

TEST_CASE("shift example: translating by 0.16 of a 0.4 box") {
  const Box gt{0.5, 0.5, 0.4, 0.4};
  // corner-form oracle: inter 0.24·0.4 = 0.096, union 0.32 - 0.096 = 0.224
  const double value = iou(gt, Box{0.66, 0.5, 0.4, 0.4});
  CHECK(value == doctest::Approx(0.4285714285714286).epsilon(1e-12));
  CHECK(value >= 0.4);
  CHECK(value <= 0.6);
}

TEST_CASE("shift_box respects its bounds for every draw") {
  const ShiftConfig cfg;
  Rng rng(42);
  int fallbacks = 0;
  for (int i = 0; i < 3000; ++i) {
    const Box gt{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
    bool fell_back = false;
    const Box out = shift_box(gt, cfg, rng, &fell_back);
    fallbacks += fell_back ? 1 : 0;
    const double v = iou(gt, out);
    CHECK(v >= cfg.iou_lo);
    CHECK(v <= cfg.iou_hi);
  }
  CHECK(fallbacks < 30);
}

TEST_CASE("fallback hits the interval midpoint") {
  const ShiftConfig cfg;
  for (const Box gt : {Box{0.5, 0.5, 0.4, 0.4}, Box{0.1, 0.3, 0.1, 0.2}, Box{0.9, 0.9, 0.2, 0.05}}) {
    const Box out = fallback_shift(gt, cfg);
    CHECK(iou(gt, out) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out.cy == gt.cy);
  }
}

TEST_CASE("zero jitter with a near-one lower bound returns the box unchanged") {
  ShiftConfig cfg;
  cfg.iou_lo = 1.0 - 1e-9;
  cfg.iou_hi = 1.0;
  cfg.jitter_scale = 0.0;
  Rng rng(1);
  const Box gt{0.4, 0.6, 0.2, 0.3};
  bool fell_back = true;
  CHECK(shift_box(gt, cfg, rng, &fell_back) == gt);
  CHECK_FALSE(fell_back);
}

TEST_CASE("shift config validation") {
  ShiftConfig cfg;
  cfg.iou_lo = 0.7;
  cfg.iou_hi = 0.6;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = ShiftConfig{};
  cfg.max_attempts = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
