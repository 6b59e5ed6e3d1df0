#include "hqm/scenes.hpp"

#include <algorithm>
#include <cmath>

#include "hqm/errors.hpp"

namespace hqm {

void GenerationConfig::validate() const {
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  if (num_verbs < 1) throw ConfigError("num_verbs must be positive");
  if (min_pairs < 1 || max_pairs < min_pairs) throw ConfigError("pair count range must satisfy 1 <= min_pairs <= max_pairs");
  if (grid_h < 1 || grid_w < 1) throw ConfigError("grid dimensions must be positive");
  if (!(min_box > 0.0 && min_box <= max_box && max_box <= 0.5)) throw ConfigError("box sizes must satisfy 0 < min_box <= max_box <= 0.5");
}

std::vector<int> verb_rule(const Box& human, const Box& object, int object_class, int num_verbs) {
  std::vector<int> verbs(num_verbs, 0);
  const int left_of = human.cx < object.cx ? 1 : 0;
  const int larger_object = object.w * object.h > human.w * human.h ? 1 : 0;
  const int primary = (object_class + 2 * left_of + larger_object) % num_verbs;
  verbs[primary] = 1;
  if (object_class % 2 == 0 && human.cy + 0.05 < object.cy) verbs[(primary + 2) % num_verbs] = 1;
  return verbs;
}

namespace {

Box clamp_inside(Box b) {
  b.cx = std::clamp(b.cx, b.w / 2, 1.0 - b.w / 2);
  b.cy = std::clamp(b.cy, b.h / 2, 1.0 - b.h / 2);
  return b;
}

Corners pair_extent(const HOIPair& p) {
  const Corners a = to_corners(p.human), b = to_corners(p.object);
  return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

bool extents_overlap(const Corners& a, const Corners& b) { return a.x1 < b.x2 && b.x1 < a.x2 && a.y1 < b.y2 && b.y1 < a.y2; }

// Keeps every quantity the verb rule thresholds clear of its threshold, so
// labels never hinge on sub-cell differences.
bool verb_margins_ok(const HOIPair& p) {
  const double area_ratio = (p.object.w * p.object.h) / (p.human.w * p.human.h);
  const double dy = p.object.cy - p.human.cy;
  return std::abs(p.object.cx - p.human.cx) >= 0.05 && (area_ratio <= 1.0 / 1.3 || area_ratio >= 1.3) && std::abs(dy - 0.05) >= 0.03;
}

}  // namespace

Scene generate_scene(const GenerationConfig& cfg, Rng& rng) {
  cfg.validate();
  Scene scene;
  scene.grid_h = cfg.grid_h;
  scene.grid_w = cfg.grid_w;
  const int wanted = cfg.min_pairs + static_cast<int>(rng.index(static_cast<std::size_t>(cfg.max_pairs - cfg.min_pairs + 1)));

  std::vector<Corners> taken;
  constexpr int kAttempts = 50;
  for (int n = 0; n < wanted; ++n) {
    for (int attempt = 0; attempt < kAttempts; ++attempt) {
      HOIPair p;
      p.human.w = rng.uniform(cfg.min_box, cfg.max_box);
      p.human.h = rng.uniform(cfg.min_box, cfg.max_box);
      p.human.cx = rng.uniform(p.human.w / 2, 1.0 - p.human.w / 2);
      p.human.cy = rng.uniform(p.human.h / 2, 1.0 - p.human.h / 2);
      p.object.w = rng.uniform(cfg.min_box, cfg.max_box);
      p.object.h = rng.uniform(cfg.min_box, cfg.max_box);
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      p.object.cx = p.human.cx + side * rng.uniform(0.05, 0.25);
      p.object.cy = p.human.cy + rng.uniform(-0.15, 0.15);
      p.object = clamp_inside(p.object);
      p.object_class = static_cast<int>(rng.index(static_cast<std::size_t>(cfg.num_classes)));
      p.verbs = verb_rule(p.human, p.object, p.object_class, cfg.num_verbs);
      if (!verb_margins_ok(p)) continue;

      const Corners extent = pair_extent(p);
      const bool clash = std::any_of(taken.begin(), taken.end(), [&](const Corners& c) { return extents_overlap(c, extent); });
      if (clash) continue;
      taken.push_back(extent);
      scene.pairs.push_back(std::move(p));
      break;
    }
  }
  return scene;
}

Dataset generate_dataset(const GenerationConfig& cfg, std::uint64_t seed, std::size_t count) {
  cfg.validate();
  Dataset ds;
  ds.generation = cfg;
  ds.seed = seed;
  ds.scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(seed + i);
    ds.scenes.push_back(generate_scene(cfg, rng));
  }
  return ds;
}

Tensor class_table(int num_classes, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> values(static_cast<std::size_t>(num_classes + 1) * dim);
  for (auto& v : values) v = rng.normal();
  return Tensor({static_cast<std::size_t>(num_classes + 1), dim}, std::move(values));
}

Tensor positional_embedding(std::size_t grid_h, std::size_t grid_w, std::size_t dim) {
  if (dim == 0 || dim % 4 != 0) throw ConfigError("positional embedding dimension must be a positive multiple of 4");
  const std::size_t half = dim / 2, freqs = dim / 4;
  std::vector<double> out(grid_h * grid_w * dim);
  for (std::size_t r = 0; r < grid_h; ++r) {
    for (std::size_t c = 0; c < grid_w; ++c) {
      double* row = out.data() + (r * grid_w + c) * dim;
      const auto ty = static_cast<double>(r), tx = static_cast<double>(c);
      for (std::size_t k = 0; k < freqs; ++k) {
        const double omega = std::pow(kPositionTemperature, -2.0 * static_cast<double>(k) / static_cast<double>(half));
        row[2 * k] = std::sin(ty * omega);
        row[2 * k + 1] = std::cos(ty * omega);
        row[half + 2 * k] = std::sin(tx * omega);
        row[half + 2 * k + 1] = std::cos(tx * omega);
      }
    }
  }
  return Tensor({grid_h * grid_w, dim}, std::move(out));
}

double cell_coverage(const Box& box, std::size_t row, std::size_t col, std::size_t grid_h, std::size_t grid_w) {
  const double ch = 1.0 / static_cast<double>(grid_h), cw = 1.0 / static_cast<double>(grid_w);
  const double x1 = static_cast<double>(col) * cw, y1 = static_cast<double>(row) * ch;
  const Corners b = to_corners(box);
  const double iw = std::max(0.0, std::min(b.x2, x1 + cw) - std::max(b.x1, x1));
  const double ih = std::max(0.0, std::min(b.y2, y1 + ch) - std::max(b.y1, y1));
  return (iw * ih) / (cw * ch);
}

FeatureGrid encode_scene(const Scene& scene, const Tensor& table) {
  const std::size_t dim = table.cols();
  const auto num_classes = static_cast<int>(table.rows()) - 1;
  FeatureGrid grid;
  grid.grid_h = scene.grid_h;
  grid.grid_w = scene.grid_w;
  grid.pos_embed = positional_embedding(scene.grid_h, scene.grid_w, dim);

  std::vector<double> feats(grid.pos_embed.data().begin(), grid.pos_embed.data().end());
  auto paint = [&](const Box& box, int table_row) {
    const Corners c = to_corners(box);
    const auto r0 = static_cast<std::size_t>(std::clamp(std::floor(c.y1 * scene.grid_h), 0.0, double(scene.grid_h - 1)));
    const auto r1 = static_cast<std::size_t>(std::clamp(std::floor(c.y2 * scene.grid_h), 0.0, double(scene.grid_h - 1)));
    const auto c0 = static_cast<std::size_t>(std::clamp(std::floor(c.x1 * scene.grid_w), 0.0, double(scene.grid_w - 1)));
    const auto c1 = static_cast<std::size_t>(std::clamp(std::floor(c.x2 * scene.grid_w), 0.0, double(scene.grid_w - 1)));
    for (std::size_t r = r0; r <= r1; ++r) {
      for (std::size_t col = c0; col <= c1; ++col) {
        const double frac = cell_coverage(box, r, col, scene.grid_h, scene.grid_w);
        if (frac <= 0.0) continue;
        double* cell = feats.data() + (r * scene.grid_w + col) * dim;
        for (std::size_t d = 0; d < dim; ++d) cell[d] += frac * table.at(static_cast<std::size_t>(table_row), d);
      }
    }
  };
  for (const auto& p : scene.pairs) {
    if (p.object_class < 0 || p.object_class >= num_classes) throw ContractError("object class outside the class table");
    paint(p.human, num_classes);
    paint(p.object, p.object_class);
  }
  grid.features = Tensor({scene.grid_h * scene.grid_w, dim}, std::move(feats));
  return grid;
}

}  // namespace hqm
