#pragma once

// Synthetic HOI scenes and their feature-grid encoding. Stands in for an
// image backbone plus transformer encoder.

#include <cstdint>
#include <vector>

#include "hqm/geometry.hpp"
#include "hqm/numerics.hpp"
#include "hqm/rng.hpp"

namespace hqm {

struct HOIPair {
  Box human;
  Box object;
  int object_class = 0;
  /// Multi-hot, one entry per verb class.
  std::vector<int> verbs;

  bool has_verb(std::size_t v) const { return v < verbs.size() && verbs[v] != 0; }
};

struct Scene {
  std::vector<HOIPair> pairs;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

struct GenerationConfig {
  int num_classes = 5;
  int num_verbs = 4;
  int min_pairs = 1;
  int max_pairs = 3;
  std::size_t grid_h = 16;
  std::size_t grid_w = 16;
  double min_box = 0.2;
  double max_box = 0.4;

  void validate() const;
};

struct Dataset {
  GenerationConfig generation;
  std::uint64_t seed = 0;
  std::vector<Scene> scenes;
};

/// Verb labels as a fixed function of pair geometry and object class:
/// primary verb from (class, horizontal order, which box is larger), plus a
/// second verb for even classes when the human sits clearly above the object.
std::vector<int> verb_rule(const Box& human, const Box& object, int object_class, int num_verbs);

Scene generate_scene(const GenerationConfig& cfg, Rng& rng);

/// Scene i is drawn from Rng(seed + i).
Dataset generate_dataset(const GenerationConfig& cfg, std::uint64_t seed, std::size_t count);

/// Fixed random embedding per object class; row `num_classes` is the human.
Tensor class_table(int num_classes, std::size_t dim, std::uint64_t seed);

/// Frequencies run from 1 rad per cell down to temperature^(-(dim/4-1)/(dim/4)).
constexpr double kPositionTemperature = 100.0;

/// 2D sine-cosine embedding of raw cell indices, (grid_h·grid_w)×dim. First
/// half of the channels encodes the row, second half the column, as
/// interleaved sin/cos pairs.
Tensor positional_embedding(std::size_t grid_h, std::size_t grid_w, std::size_t dim);

struct FeatureGrid {
  /// Instance evidence plus positional embedding.
  Tensor features;
  Tensor pos_embed;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

/// Fraction of grid cell (row, col) covered by `box`.
double cell_coverage(const Box& box, std::size_t row, std::size_t col, std::size_t grid_h, std::size_t grid_w);

FeatureGrid encode_scene(const Scene& scene, const Tensor& class_table);

}  // namespace hqm
