#include "hqm/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hqm/dual.hpp"
#include "hqm/errors.hpp"
#include "hqm/geometry.hpp"

namespace hqm {

namespace {

using D4 = Dual<4>;

// Σ over matched rows of pair_l1 and of (1 - giou) between predicted and
// target boxes, as two tape nodes.
std::pair<Tensor, Tensor> matched_box_sums(const Tensor& pred, const std::vector<std::size_t>& rows, const std::vector<Box>& targets) {
  const std::size_t n = pred.size();
  double l1_total = 0.0, giou_total = 0.0;
  std::vector<double> l1_grad(n, 0.0), giou_grad(n, 0.0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    const Box& t = targets[k];
    const double p[4] = {pred.at(r, 0), pred.at(r, 1), pred.at(r, 2), pred.at(r, 3)};
    const double tv[4] = {t.cx, t.cy, t.w, t.h};
    for (int i = 0; i < 4; ++i) {
      const double diff = p[i] - tv[i];
      l1_total += std::abs(diff);
      l1_grad[r * 4 + i] += diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
    }
    const BoxT<D4> pd{D4::variable(p[0], 0), D4::variable(p[1], 1), D4::variable(p[2], 2), D4::variable(p[3], 3)};
    const BoxT<D4> td{D4(t.cx), D4(t.cy), D4(t.w), D4(t.h)};
    const D4 g = giou(pd, td);
    giou_total += 1.0 - g.v;
    for (int i = 0; i < 4; ++i) giou_grad[r * 4 + i] -= g.d[i];
  }
  auto backward_with = [](std::vector<double> local) {
    return [local = std::move(local)](std::span<const double> g, std::span<std::vector<double>* const> in) {
      for (std::size_t i = 0; i < local.size(); ++i) (*in[0])[i] += g[0] * local[i];
    };
  };
  Tensor l1 = GradientTape::record({}, {l1_total}, {&pred}, backward_with(std::move(l1_grad)));
  Tensor gi = GradientTape::record({}, {giou_total}, {&pred}, backward_with(std::move(giou_grad)));
  return {std::move(l1), std::move(gi)};
}

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double stable_sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void check_assignment(const Assignment& a, std::size_t rows, std::size_t targets) {
  for (const auto& [q, t] : a.pairs)
    if (q >= rows || t >= targets) throw ContractError("assignment refers to a row or target that does not exist");
}

}  // namespace

std::pair<Tensor, Tensor> box_losses(const Predictions& preds, const std::vector<HOIPair>& targets, const Assignment& assignment) {
  if (assignment.empty()) throw ContractError("box losses need a non-empty assignment");
  check_assignment(assignment, preds.size(), targets.size());
  std::vector<std::size_t> rows;
  std::vector<Box> humans, objects;
  for (const auto& [q, t] : assignment.pairs) {
    rows.push_back(q);
    humans.push_back(targets[t].human);
    objects.push_back(targets[t].object);
  }
  const double inv_n = 1.0 / static_cast<double>(assignment.size());
  auto [l1_h, g_h] = matched_box_sums(preds.human_boxes, rows, humans);
  auto [l1_o, g_o] = matched_box_sums(preds.object_boxes, rows, objects);
  return {scale(add(l1_h, l1_o), inv_n), scale(add(g_h, g_o), inv_n)};
}

Tensor ce_object_loss(const Tensor& class_logits, const std::vector<HOIPair>& targets, const Assignment& assignment, double no_object_weight) {
  const std::size_t n = class_logits.rows(), c = class_logits.cols();
  check_assignment(assignment, n, targets.size());
  std::vector<std::size_t> label(n, c - 1);
  std::vector<double> weight(n, no_object_weight);
  for (const auto& [q, t] : assignment.pairs) {
    label[q] = static_cast<std::size_t>(targets[t].object_class);
    weight[q] = 1.0;
  }
  double weight_sum = 0.0, total = 0.0;
  std::vector<double> probs(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) top = std::max(top, class_logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += probs[i * c + j] = std::exp(class_logits.at(i, j) - top);
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    const double log_p = class_logits.at(i, label[i]) - top - std::log(z);
    total += -weight[i] * log_p;
    weight_sum += weight[i];
  }
  if (weight_sum <= 0.0) return Tensor::scalar(0.0);
  // d/dlogit = w (p - onehot) / Σw
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] *= weight[i] / weight_sum;
    probs[i * c + label[i]] -= weight[i] / weight_sum;
  }
  return GradientTape::record({}, {total / weight_sum}, {&class_logits}, [local = std::move(probs)](std::span<const double> g, std::span<std::vector<double>* const> in) {
    for (std::size_t i = 0; i < local.size(); ++i) (*in[0])[i] += g[0] * local[i];
  });
}

std::vector<double> verb_label_matrix(std::size_t rows, std::size_t num_verbs, const std::vector<HOIPair>& targets, const Assignment& assignment) {
  check_assignment(assignment, rows, targets.size());
  std::vector<double> labels(rows * num_verbs, 0.0);
  for (const auto& [q, t] : assignment.pairs)
    for (std::size_t v = 0; v < num_verbs; ++v) labels[q * num_verbs + v] = targets[t].has_verb(v) ? 1.0 : 0.0;
  return labels;
}

Tensor sigmoid_focal_sum(const Tensor& logits, const std::vector<double>& labels, double gamma, double alpha) {
  if (labels.size() != logits.size()) throw ShapeError("focal labels do not match logits");
  double total = 0.0;
  std::vector<double> local(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    const double p = stable_sigmoid(x);
    if (labels[i] > 0.5) {
      // α (1-p)^γ (-log p);  d/dx = α (1-p)^γ (γ p log p - (1 - p))
      const double log_p = log_sigmoid(x);
      const double mod = std::pow(1.0 - p, gamma);
      total += alpha * mod * -log_p;
      local[i] = alpha * mod * (gamma * p * log_p - (1.0 - p));
    } else {
      // (1-α) p^γ (-log(1-p));  d/dx = (1-α) p^γ (γ (1-p) (-log(1-p)) + p)
      const double log_q = log_sigmoid(-x);
      const double mod = std::pow(p, gamma);
      total += (1.0 - alpha) * mod * -log_q;
      local[i] = (1.0 - alpha) * mod * (gamma * (1.0 - p) * -log_q + p);
    }
  }
  return GradientTape::record({}, {total}, {&logits}, [local = std::move(local)](std::span<const double> g, std::span<std::vector<double>* const> in) {
    for (std::size_t i = 0; i < local.size(); ++i) (*in[0])[i] += g[0] * local[i];
  });
}

Tensor focal_verb_loss(const Tensor& verb_logits, const std::vector<HOIPair>& targets, const Assignment& assignment, double gamma, double alpha) {
  const auto labels = verb_label_matrix(verb_logits.rows(), verb_logits.cols(), targets, assignment);
  const double positives = std::count_if(labels.begin(), labels.end(), [](double y) { return y > 0.5; });
  return scale(sigmoid_focal_sum(verb_logits, labels, gamma, alpha), 1.0 / std::max(1.0, positives));
}

LossBreakdown branch_loss(const Predictions& preds, const std::vector<HOIPair>& targets, const Assignment& assignment, const LossWeights& w) {
  LossBreakdown out;
  std::tie(out.l1, out.giou) = box_losses(preds, targets, assignment);
  out.ce = ce_object_loss(preds.class_logits, targets, assignment, w.no_object_weight);
  out.focal = focal_verb_loss(preds.verb_logits, targets, assignment, w.focal_gamma, w.focal_alpha);
  out.weighted_total = add(add(scale(out.l1, w.lambda_b), scale(out.giou, w.lambda_u)), add(scale(out.ce, w.lambda_c), scale(out.focal, w.lambda_a)));
  return out;
}

Tensor total_loss(const Tensor& learnable, const std::optional<Tensor>& hard, const LossWeights& w) {
  if (!hard) return scale(learnable, w.alpha);
  return add(scale(learnable, w.alpha), scale(*hard, w.beta));
}

}  // namespace hqm
