#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "hqm/matching.hpp"
#include "hqm/model.hpp"
#include "hqm/numerics.hpp"
#include "hqm/scenes.hpp"
#include "hqm/weights.hpp"

namespace hqm {

struct LossBreakdown {
  Tensor l1, giou, ce, focal;
  Tensor weighted_total;
};

/// Mean over matched pairs of the human + object L1 distances, and of the
/// human + object (1 - GIoU) terms.
std::pair<Tensor, Tensor> box_losses(const Predictions& preds, const std::vector<HOIPair>& targets, const Assignment& assignment);

/// Weighted cross-entropy over every query row; unmatched rows target the
/// no-object class with weight `no_object_weight`.
Tensor ce_object_loss(const Tensor& class_logits, const std::vector<HOIPair>& targets, const Assignment& assignment, double no_object_weight);

/// Sigmoid focal loss over every row and verb; unmatched rows are supervised
/// against all-zero labels. Normalized by the number of positive labels.
Tensor focal_verb_loss(const Tensor& verb_logits, const std::vector<HOIPair>& targets, const Assignment& assignment, double focal_gamma,
                       double focal_alpha);

/// Verb labels for each prediction row under `assignment` (zeros when unmatched).
std::vector<double> verb_label_matrix(std::size_t rows, std::size_t num_verbs, const std::vector<HOIPair>& targets, const Assignment& assignment);

/// Sigmoid focal loss summed over all elements of `logits` against 0/1 `labels`.
Tensor sigmoid_focal_sum(const Tensor& logits, const std::vector<double>& labels, double focal_gamma, double focal_alpha);

LossBreakdown branch_loss(const Predictions& preds, const std::vector<HOIPair>& targets, const Assignment& assignment, const LossWeights& weights);

/// α·L_l + β·L_h, or α·L_l when no hard branch ran.
Tensor total_loss(const Tensor& learnable, const std::optional<Tensor>& hard, const LossWeights& weights);

}  // namespace hqm
