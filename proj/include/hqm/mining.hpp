#pragma once

// Hard-positive query mining: shifted-box queries (GBS), attention-map
// masking (AMM), and the schedules that combine them with the learnable
// queries during training.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hqm/geometry.hpp"
#include "hqm/losses.hpp"
#include "hqm/matching.hpp"
#include "hqm/model.hpp"
#include "hqm/rng.hpp"
#include "hqm/scenes.hpp"
#include "hqm/weights.hpp"

namespace hqm {

/// [x_h, y_h, w_h, h_h, x_o, y_o, w_o, h_o, x_h-x_o, y_h-y_o, w_h·h_h, w_o·h_o]
using PairPrior = std::array<double, 12>;

PairPrior pair_prior(const Box& human, const Box& object);
PairPrior pair_prior(const HOIPair& pair);

struct AmmConfig {
  /// Number of reference positions eligible for masking.
  std::size_t top_k = 24;
  /// Masking probability inside the top-K set.
  double gamma = 0.4;
  /// Draw fresh masks at every decoder layer; otherwise one draw per query
  /// and head is reused across layers.
  bool per_layer_resample = true;
  /// Read the mask draw as Bernoulli(gamma) = keep, i.e. mask with 1 - gamma.
  bool keep_with_gamma = false;

  void validate(std::size_t cells) const;
  double mask_probability() const { return keep_with_gamma ? 1.0 - gamma : gamma; }
};

enum class Strategy { baseline, gbs_only, amm_only, ajl, cjl, pjl };

struct AblationFlags {
  bool no_shift = false;        // encode the unshifted ground truth
  bool gaussian_noise = false;  // no shift; add N(0, 0.1²) after tanh
  bool no_topk = false;         // mask uniformly at rate gamma·K / cells
  bool reference_self = false;  // pick top-K from the hard query's own map
  bool mask_learnable = false;  // mask the learnable pass, no hard queries
};

struct HqmStrategy {
  Strategy strategy = Strategy::baseline;
  AblationFlags flags;

  bool uses_gbs() const;
  bool uses_amm() const;
  void validate() const;
  std::string name() const;
};

std::string strategy_name(Strategy s);
/// Parses names such as "baseline", "ajl", "gbs_only+no_shift".
HqmStrategy parse_strategy(const std::string& text);

constexpr double kGaussianNoiseSigma = 0.1;

struct GbsQueries {
  QuerySet queries;
  std::vector<Box> shifted_humans;
  std::vector<Box> shifted_objects;
  int fallbacks = 0;
};

/// One shifted-box query, 1 × D, strictly inside (-1, 1) unless the
/// Gaussian-noise variant is active.
Tensor gbs_encode(const HOIPair& pair, const Ffn2& prior_encoder, const ShiftConfig& shift, const AblationFlags& flags, Rng& rng,
                  Box* shifted_human = nullptr, Box* shifted_object = nullptr, bool* fell_back = nullptr);

/// gbs_encode for every pair, stacked in pair order.
GbsQueries build_gbs_queries(const std::vector<HOIPair>& pairs, const Ffn2& prior_encoder, const ShiftConfig& shift, const AblationFlags& flags,
                             Rng& rng);

/// Indices of the K largest entries, ties broken by lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> row, std::size_t k);

/// Binary mask: 1 outside the top-K of `reference`, Bernoulli inside.
std::vector<double> amm_mask_pattern(std::span<const double> reference, const AmmConfig& cfg, Rng& rng);

/// `attention` ⊙ mask, mask drawn from `reference`.
std::vector<double> amm_mask(std::span<const double> attention, std::span<const double> reference, const AmmConfig& cfg, Rng& rng);

/// Learnable rows matched to each target, copied without a gradient edge.
QuerySet select_positive_queries(const Assignment& assignment, const Tensor& learnable_queries);

enum class HardKind { gbs, amm };

/// Alternation used by AJL: even iterations GBS, odd iterations AMM.
HardKind ajl_step(std::size_t iteration);

/// Artifacts of the learnable-query pass that hard branches consume.
struct LearnablePass {
  DecoderOutputs outputs;
  Predictions predictions;
  Assignment assignment;
  LossBreakdown loss;
};

/// Stateful mask hook applying AMM row by row. `reference_rows[r]` is the
/// learnable query whose maps (same layer and head) guide row r; rows without
/// one are left unmasked. The reference_self flag makes every row use its
/// own map instead.
class AmmHook {
 public:
  AmmHook(const AmmConfig& cfg, const AblationFlags& flags, const std::vector<std::vector<Tensor>>* reference_maps,
          std::vector<std::optional<std::size_t>> reference_rows, Rng& rng);

  Tensor operator()(std::size_t layer, std::size_t head, const Tensor& attention);

  std::size_t masked_positions() const { return masked_; }
  std::size_t candidate_positions() const { return candidates_; }

 private:
  std::vector<double> draw_pattern(std::size_t row, std::size_t head, std::span<const double> reference, std::size_t cells);

  AmmConfig cfg_;
  AblationFlags flags_;
  const std::vector<std::vector<Tensor>>* reference_maps_;
  std::vector<std::optional<std::size_t>> reference_rows_;
  Rng* rng_;
  /// Draws reused across layers when per-layer resampling is off.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> cached_draws_;
  std::size_t masked_ = 0;
  std::size_t candidates_ = 0;
};

/// Decoder pass of the learnable queries plus matching and L_l. With the
/// mask_learnable ablation the pass itself is masked (self-referenced).
LearnablePass run_learnable_pass(const Scene& scene, const ProjectedMemory& memory, const DecoderParams& params, const HqmStrategy& strategy,
                                 const AmmConfig& amm, const LossWeights& weights, Rng& rng);

struct HardBranchResult {
  std::optional<Tensor> loss;
  bool ran_gbs = false;
  bool ran_amm = false;
  /// AMM requested but there were no matched queries to copy.
  bool zero_matched = false;
  int shift_fallbacks = 0;
  std::size_t masked_positions = 0;
  std::size_t candidate_positions = 0;
};

struct HardBranchContext {
  const Scene& scene;
  const ProjectedMemory& memory;
  const DecoderParams& params;
  const LearnablePass& learnable;
  const LossWeights& weights;
  const AmmConfig& amm;
  const ShiftConfig& shift;
  std::size_t iteration = 0;
  /// Values copied into AMM queries; params.queries when null. The copy is
  /// detached either way, so a fixed source gives the same gradients.
  const Tensor* copy_source = nullptr;
};

/// Hard-positive branch for one scene. Must run after the learnable pass of
/// the same iteration. Returns no loss for the baseline strategy.
HardBranchResult run_hard_branch(const HqmStrategy& strategy, const HardBranchContext& ctx, Rng& rng);

}  // namespace hqm
