#pragma once

#include <array>
#include <optional>

#include "hqm/rng.hpp"

namespace hqm {

/// Axis-aligned box in normalized center-size form.
template <typename T>
struct BoxT {
  T cx{}, cy{}, w{}, h{};
};

using Box = BoxT<double>;

struct Corners {
  double x1, y1, x2, y2;
};

Corners to_corners(const Box& b);
Box from_corners(const Corners& c);
bool operator==(const Box& a, const Box& b);

// The overlap kernels are templates so the loss module can evaluate them on
// dual numbers for exact local gradients. Only +, -, *, / and < are used.
namespace detail {
template <typename T>
T min_of(const T& a, const T& b) { return b < a ? b : a; }
template <typename T>
T max_of(const T& a, const T& b) { return a < b ? b : a; }

template <typename T>
struct Overlap {
  T inter, uni, enclosing;
};

template <typename T>
Overlap<T> overlap(const BoxT<T>& a, const BoxT<T>& b) {
  const T ax1 = a.cx - a.w * 0.5, ax2 = a.cx + a.w * 0.5, ay1 = a.cy - a.h * 0.5, ay2 = a.cy + a.h * 0.5;
  const T bx1 = b.cx - b.w * 0.5, bx2 = b.cx + b.w * 0.5, by1 = b.cy - b.h * 0.5, by2 = b.cy + b.h * 0.5;
  const T zero = ax1 * 0.0;
  const T iw = max_of(zero, min_of(ax2, bx2) - max_of(ax1, bx1));
  const T ih = max_of(zero, min_of(ay2, by2) - max_of(ay1, by1));
  const T inter = iw * ih;
  const T uni = a.w * a.h + b.w * b.h - inter;
  const T ew = max_of(ax2, bx2) - min_of(ax1, bx1);
  const T eh = max_of(ay2, by2) - min_of(ay1, by1);
  return {inter, uni, ew * eh};
}
}  // namespace detail

template <typename T>
T iou(const BoxT<T>& a, const BoxT<T>& b) {
  const auto o = detail::overlap(a, b);
  return o.inter / o.uni;
}

template <typename T>
T giou(const BoxT<T>& a, const BoxT<T>& b) {
  const auto o = detail::overlap(a, b);
  return o.inter / o.uni - (o.enclosing - o.uni) / o.enclosing;
}

/// Sum of absolute coordinate differences.
double pair_l1(const Box& a, const Box& b);

/// Bounds for ground-truth box shifting. Proposals translate the center by
/// up to ±jitter_scale·(w, h) and scale each side by a factor in
/// [1 - jitter_scale/2, 1 + jitter_scale/2].
struct ShiftConfig {
  double iou_lo = 0.4;
  double iou_hi = 0.6;
  int max_attempts = 64;
  double jitter_scale = 0.5;

  /// Throws ConfigError on invalid bounds.
  void validate() const;
};

/// One rejection-sampling run; nullopt when max_attempts is exhausted.
std::optional<Box> try_shift_box(const Box& gt, const ShiftConfig& cfg, Rng& rng);

/// x-translation whose IoU with `gt` is exactly the midpoint of the bounds.
Box fallback_shift(const Box& gt, const ShiftConfig& cfg);

/// Shifted box with iou(gt, result) in [iou_lo, iou_hi]. Falls back to
/// fallback_shift when sampling fails; `fell_back` reports that case.
Box shift_box(const Box& gt, const ShiftConfig& cfg, Rng& rng, bool* fell_back = nullptr);

}  // namespace hqm
