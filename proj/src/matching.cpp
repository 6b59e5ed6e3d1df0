#include "hqm/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hqm/errors.hpp"
#include "hqm/geometry.hpp"

namespace hqm {

void LossWeights::validate() const {
  for (double w : {lambda_b, lambda_u, lambda_c, lambda_a, alpha, beta, no_object_weight, focal_gamma})
    if (!(w >= 0.0)) throw ConfigError("loss weights must be nonnegative");
  if (!(focal_alpha >= 0.0 && focal_alpha <= 1.0)) throw ConfigError("focal_alpha must lie in [0, 1]");
}

CostMatrix::CostMatrix(std::size_t queries, std::size_t targets, std::vector<double> v)
    : num_queries(queries), num_targets(targets), values(std::move(v)) {
  if (values.size() != queries * targets) throw ShapeError("cost matrix size does not match its dimensions");
}

std::size_t Assignment::query_for(std::size_t target) const {
  for (const auto& [q, t] : pairs)
    if (t == target) return q;
  throw ContractError("target " + std::to_string(target) + " is not assigned");
}

double Assignment::total_cost(const CostMatrix& cost) const {
  double total = 0.0;
  for (const auto& [q, t] : pairs) total += cost(q, t);
  return total;
}

Assignment identity_assignment(std::size_t n) {
  Assignment a;
  for (std::size_t i = 0; i < n; ++i) a.pairs.emplace_back(i, i);
  return a;
}

namespace {

Box box_row(const Tensor& boxes, std::size_t row) { return {boxes.at(row, 0), boxes.at(row, 1), boxes.at(row, 2), boxes.at(row, 3)}; }

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

CostMatrix matching_cost(const Predictions& preds, const std::vector<HOIPair>& targets, const LossWeights& weights) {
  if (targets.empty()) throw ContractError("matching needs at least one target");
  const std::size_t nq = preds.size(), ng = targets.size();
  const std::size_t nc = preds.class_logits.cols(), nv = preds.verb_logits.cols();
  CostMatrix cost(nq, ng, std::vector<double>(nq * ng));
  for (std::size_t q = 0; q < nq; ++q) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < nc; ++c) top = std::max(top, preds.class_logits.at(q, c));
    double z = 0.0;
    for (std::size_t c = 0; c < nc; ++c) z += std::exp(preds.class_logits.at(q, c) - top);
    const Box hq = box_row(preds.human_boxes, q), oq = box_row(preds.object_boxes, q);
    for (std::size_t t = 0; t < ng; ++t) {
      const auto& tgt = targets[t];
      const double prob = std::exp(preds.class_logits.at(q, static_cast<std::size_t>(tgt.object_class)) - top) / z;
      const double l1 = pair_l1(hq, tgt.human) + pair_l1(oq, tgt.object);
      const double gi = (1.0 - giou(hq, tgt.human)) + (1.0 - giou(oq, tgt.object));
      double bce = 0.0;
      for (std::size_t v = 0; v < nv; ++v) {
        const double x = preds.verb_logits.at(q, v);
        bce += tgt.has_verb(v) ? softplus(-x) : softplus(x);
      }
      bce /= static_cast<double>(nv);
      cost(q, t) = weights.lambda_c * (1.0 - prob) + weights.lambda_b * l1 + weights.lambda_u * gi + weights.lambda_a * bce;
    }
  }
  return cost;
}

Assignment hungarian(const CostMatrix& cost) {
  const std::size_t n = cost.num_targets, m = cost.num_queries;
  if (n == 0) return {};
  if (n > m) throw ContractError("more targets than queries");
  for (double c : cost.values)
    if (!std::isfinite(c)) throw ContractError("hungarian needs finite costs");

  // Rows are targets (1-based), columns queries (1-based); column 0 is the
  // virtual start of each augmenting path.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    owner[0] = row;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(j - 1, i0 - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Assignment a;
  for (std::size_t j = 1; j <= m; ++j)
    if (owner[j] != 0) a.pairs.emplace_back(j - 1, owner[j] - 1);
  std::sort(a.pairs.begin(), a.pairs.end(), [](const auto& x, const auto& y) { return x.second < y.second; });
  return a;
}

Assignment brute_force_assignment(const CostMatrix& cost) {
  constexpr std::size_t kMaxQueries = 8;
  if (cost.num_queries > kMaxQueries) throw ContractError("brute-force assignment is limited to 8 queries");
  const std::size_t n = cost.num_targets, m = cost.num_queries;
  if (n > m) throw ContractError("more targets than queries");

  std::vector<std::size_t> current(n), best;
  std::vector<char> used(m, 0);
  double best_cost = std::numeric_limits<double>::infinity();
  // Depth-first over targets in order, queries ascending; strict improvement
  // keeps the lexicographically first optimum.
  auto search = [&](auto&& self, std::size_t t) -> void {
    if (t == n) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += cost(current[i], i);
      if (total < best_cost) {
        best_cost = total;
        best = current;
      }
      return;
    }
    for (std::size_t q = 0; q < m; ++q) {
      if (used[q]) continue;
      used[q] = 1;
      current[t] = q;
      self(self, t + 1);
      used[q] = 0;
    }
  };
  search(search, 0);

  Assignment a;
  for (std::size_t t = 0; t < n; ++t) a.pairs.emplace_back(best[t], t);
  return a;
}

}  // namespace hqm
