#include "hqm/geometry.hpp"

#include <cmath>

#include "hqm/errors.hpp"

namespace hqm {

Corners to_corners(const Box& b) { return {b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2}; }

Box from_corners(const Corners& c) { return {(c.x1 + c.x2) / 2, (c.y1 + c.y2) / 2, c.x2 - c.x1, c.y2 - c.y1}; }

bool operator==(const Box& a, const Box& b) { return a.cx == b.cx && a.cy == b.cy && a.w == b.w && a.h == b.h; }

double pair_l1(const Box& a, const Box& b) {
  return std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) + std::abs(a.h - b.h);
}

void ShiftConfig::validate() const {
  if (!(iou_lo > 0.0 && iou_lo < iou_hi && iou_hi <= 1.0)) throw ConfigError("shift IoU bounds must satisfy 0 < iou_lo < iou_hi <= 1");
  if (max_attempts < 1) throw ConfigError("shift max_attempts must be at least 1");
  if (!(jitter_scale >= 0.0 && jitter_scale < 2.0)) throw ConfigError("shift jitter_scale must lie in [0, 2)");
}

std::optional<Box> try_shift_box(const Box& gt, const ShiftConfig& cfg, Rng& rng) {
  const double s = cfg.jitter_scale;
  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    Box out;
    out.cx = gt.cx + rng.uniform(-s, s) * gt.w;
    out.cy = gt.cy + rng.uniform(-s, s) * gt.h;
    out.w = gt.w * rng.uniform(1.0 - s / 2, 1.0 + s / 2);
    out.h = gt.h * rng.uniform(1.0 - s / 2, 1.0 + s / 2);
    const double v = iou(gt, out);
    if (v >= cfg.iou_lo && v <= cfg.iou_hi) return out;
  }
  return std::nullopt;
}

Box fallback_shift(const Box& gt, const ShiftConfig& cfg) {
  // Translating by t·w along x gives IoU (1 - t) / (1 + t).
  const double target = (cfg.iou_lo + cfg.iou_hi) / 2;
  const double t = (1.0 - target) / (1.0 + target);
  Box out = gt;
  out.cx += (gt.cx <= 0.5 ? 1.0 : -1.0) * t * gt.w;
  return out;
}

Box shift_box(const Box& gt, const ShiftConfig& cfg, Rng& rng, bool* fell_back) {
  if (auto b = try_shift_box(gt, cfg, rng)) {
    if (fell_back) *fell_back = false;
    return *b;
  }
  if (fell_back) *fell_back = true;
  return fallback_shift(gt, cfg);
}

}  // namespace hqm
