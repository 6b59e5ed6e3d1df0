#pragma once

// Training loop, evaluation protocol, ablation runner and the other
// entry points behind the command-line tool.

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hqm/config.hpp"
#include "hqm/losses.hpp"
#include "hqm/mining.hpp"
#include "hqm/model.hpp"
#include "hqm/scenes.hpp"

namespace hqm {

// ---- evaluation ------------------------------------------------------------

struct Detection {
  Box human;
  Box object;
  int object_class = 0;
  double class_prob = 0.0;
  std::vector<double> verb_probs;
};

struct EvalReport {
  /// AP per verb; NaN for verbs with no ground truth in the dataset.
  std::vector<double> ap_per_verb;
  std::vector<std::size_t> gt_per_verb;
  /// Unweighted mean over verbs that have ground truth.
  double map = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

/// Prediction rows of a scene whose argmax class is not no-object.
std::vector<Detection> decode_detections(const Predictions& preds);

/// Per-verb AP. A detection scores class_prob · verb_prob[v] and is a true
/// positive for verb v when an unused ground-truth pair with verb v and the
/// same object class overlaps it with human and object IoU both ≥
/// `iou_threshold`. AP uses the all-points interpolated precision envelope.
EvalReport evaluate_detections(const std::vector<Scene>& scenes, const std::vector<std::vector<Detection>>& detections, int num_verbs,
                               double iou_threshold = 0.5);

/// Runs the learnable queries over every scene and scores them.
EvalReport evaluate(const DecoderParams& params, const std::vector<Scene>& scenes);

// ---- training --------------------------------------------------------------

struct SceneStep {
  LossBreakdown learnable;
  HardBranchResult hard;
  Tensor total;
};

/// Loss of one scene for one iteration: learnable pass, matching, hard
/// branch, α·L_l + β·L_h. `rng` feeds the hard branch only.
/// `copy_source` pins the values of AMM query copies (see HardBranchContext).
SceneStep scene_step(const Scene& scene, const FeatureGrid& grid, const DecoderParams& params, const RunConfig& cfg, std::size_t iteration, Rng& rng,
                     const Tensor* copy_source = nullptr);

/// Generator for the hard-branch draws of one scene slot in one iteration.
Rng step_rng(std::uint64_t seed, std::size_t iteration, std::size_t slot);

struct AdamW {
  std::vector<std::vector<double>> m, v;
  std::size_t steps = 0;

  void step(DecoderParams& params, const std::vector<Tensor>& grads, const OptimizerConfig& cfg, double lr);
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss_total = 0, loss_l = 0, loss_h = 0;
  double l1 = 0, giou = 0, ce = 0, focal = 0;
  double val_map = 0;
};

struct IterationRecord {
  std::size_t iteration = 0;
  double loss_l = 0;
  double loss_h = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

class Trainer {
 public:
  explicit Trainer(RunConfig cfg);

  /// One optimizer step over a batch of training-scene indices.
  IterationRecord step(const std::vector<std::size_t>& batch, double lr);

  /// Learnable-branch loss of a batch at the current parameters, without
  /// running any hard branch or updating anything.
  double learnable_loss(const std::vector<std::size_t>& batch) const;

  /// Full run; calls `on_epoch` after each epoch.
  std::vector<EpochMetrics> run(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  /// Shuffled batches of one epoch, drawn from the trainer's order stream.
  std::vector<std::vector<std::size_t>> epoch_batches();

  const DecoderParams& params() const { return params_; }
  DecoderParams& params() { return params_; }
  const RunConfig& config() const { return cfg_; }
  const std::vector<Scene>& val_scenes() const { return val_.scenes; }
  std::size_t iteration() const { return iteration_; }

 private:
  RunConfig cfg_;
  Dataset train_;
  Dataset val_;
  std::vector<FeatureGrid> train_grids_;
  DecoderParams params_;
  AdamW optimizer_;
  Rng order_rng_;
  std::size_t iteration_ = 0;
  EpochMetrics running_;
  std::size_t running_count_ = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  DecoderParams params;
};

/// Trains and, when `write_artifacts`, writes metrics.csv and the
/// checkpoint under cfg.out_dir.
TrainResult train(const RunConfig& cfg, bool write_artifacts = true, bool verbose = false);

/// First epoch (1-based) whose validation mAP reaches `threshold`; +inf if never.
double epochs_to_threshold(const std::vector<EpochMetrics>& metrics, double threshold);

// ---- checkpoints -----------------------------------------------------------

/// Writes manifest.json and params.bin (little-endian float64, manifest order).
void save_checkpoint(const std::string& dir, const RunConfig& cfg, const DecoderParams& params);
std::pair<RunConfig, DecoderParams> load_checkpoint(const std::string& dir);

// ---- ablation --------------------------------------------------------------

struct AblationRow {
  std::string strategy;
  std::string seed;  // seed value or "median"
  double final_map = 0.0;
  double epochs_to_threshold = 0.0;
};

/// One row per (strategy, seed), then one median row per strategy.
std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<HqmStrategy>& strategies, bool verbose = false);
std::string ablation_csv(const std::vector<AblationRow>& rows);
double median(std::vector<double> values);

// ---- diagnostics -----------------------------------------------------------

/// One CSV per (layer, head) with the unmasked attention of the learnable
/// queries. Returns the written paths.
std::vector<std::string> dump_attention(const DecoderParams& params, const Scene& scene, const std::string& out_dir);

struct GradCheckEntry {
  std::string strategy;
  double max_rel_error = 0.0;
  std::map<std::string, double> per_group;
  double seconds = 0.0;
};

/// Finite-difference check of the full per-scene loss for each strategy.
/// Requires N_q ≤ 4 and a grid no larger than 6×6.
std::vector<GradCheckEntry> grad_check(const RunConfig& cfg, const std::vector<HqmStrategy>& strategies, double eps = 1e-6);

/// Small configuration accepted by grad_check.
RunConfig tiny_config();

}  // namespace hqm
