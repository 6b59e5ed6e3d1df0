#pragma once

#include <utility>
#include <vector>

#include "hqm/model.hpp"
#include "hqm/scenes.hpp"
#include "hqm/weights.hpp"

namespace hqm {

/// Query × target costs; rows are queries, columns ground-truth pairs.
struct CostMatrix {
  std::size_t num_queries = 0;
  std::size_t num_targets = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t queries, std::size_t targets, std::vector<double> v);

  double operator()(std::size_t query, std::size_t target) const { return values[query * num_targets + target]; }
  double& operator()(std::size_t query, std::size_t target) { return values[query * num_targets + target]; }
};

struct Assignment {
  /// (query, target), sorted by target; covers every target exactly once.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
  /// Query matched to `target`.
  std::size_t query_for(std::size_t target) const;
  double total_cost(const CostMatrix& cost) const;
};

/// Identity assignment used by hard-positive branches: row i answers target i.
Assignment identity_assignment(std::size_t n);

CostMatrix matching_cost(const Predictions& preds, const std::vector<HOIPair>& targets, const LossWeights& weights);

/// Minimum-cost assignment of every target to a distinct query
/// (shortest augmenting path with potentials, O(N_g² N_q)).
Assignment hungarian(const CostMatrix& cost);

/// Exhaustive minimum over all injections. Refuses more than 8 queries.
Assignment brute_force_assignment(const CostMatrix& cost);

}  // namespace hqm
