#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "hqm/errors.hpp"
#include "hqm/matching.hpp"
#include "test_helpers.hpp"

using namespace hqm;

namespace {

CostMatrix random_cost(std::size_t q, std::size_t t, Rng& rng, bool integer) {
  std::vector<double> v(q * t);
  for (auto& x : v) x = integer ? static_cast<double>(rng.index(5)) : rng.uniform(0, 10);
  return CostMatrix(q, t, v);
}

Predictions predictions_for(const std::vector<HOIPair>& targets, std::size_t rows, int classes, int verbs) {
  Predictions p;
  std::vector<double> h(rows * 4, 0.5), o(rows * 4, 0.5), c(rows * (classes + 1), 0.0), v(rows * verbs, -5.0);
  for (std::size_t i = 0; i < targets.size() && i < rows; ++i) {
    const auto& t = targets[i];
    const double hb[4] = {t.human.cx, t.human.cy, t.human.w, t.human.h}, ob[4] = {t.object.cx, t.object.cy, t.object.w, t.object.h};
    for (int k = 0; k < 4; ++k) {
      h[i * 4 + k] = hb[k];
      o[i * 4 + k] = ob[k];
    }
    c[i * (classes + 1) + t.object_class] = 8.0;
    for (int k = 0; k < verbs; ++k) v[i * verbs + k] = t.has_verb(k) ? 5.0 : -5.0;
  }
  p.human_boxes = Tensor({rows, 4}, h);
  p.object_boxes = Tensor({rows, 4}, o);
  p.class_logits = Tensor({rows, static_cast<std::size_t>(classes + 1)}, c);
  p.verb_logits = Tensor({rows, static_cast<std::size_t>(verbs)}, v);
  return p;
}

}  // namespace

TEST_CASE("hungarian on the 2x2 example") {
  const CostMatrix cost(2, 2, {1, 2, 2, 4});
  const Assignment a = hungarian(cost);
  CHECK(a.total_cost(cost) == 4.0);
  CHECK(a.query_for(0) == 1);
  CHECK(a.query_for(1) == 0);
  CHECK(brute_force_assignment(cost).total_cost(cost) == 4.0);
}

TEST_CASE("trivial and diagonal cases") {
  const CostMatrix one(1, 1, {3.5});
  CHECK(hungarian(one).pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}});
  CHECK(brute_force_assignment(one).total_cost(one) == 3.5);
  std::vector<double> v(25, 1.0);
  for (int i = 0; i < 5; ++i) v[i * 5 + i] = 0.0;
  const Assignment a = hungarian(CostMatrix(5, 5, v));
  for (std::size_t t = 0; t < 5; ++t) CHECK(a.query_for(t) == t);
}

TEST_CASE("hungarian matches brute force on random rectangular matrices") {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t q = 1 + rng.index(7);
    const std::size_t t = 1 + rng.index(q);
    const CostMatrix cost = random_cost(q, t, rng, trial % 2 == 0);
    const Assignment h = hungarian(cost), b = brute_force_assignment(cost);
    CHECK(h.total_cost(cost) == b.total_cost(cost));
    CHECK(h.size() == t);
  }
}

TEST_CASE("assignments are injective and sorted by target") {
  Rng rng(3);
  const CostMatrix cost = random_cost(8, 5, rng, false);
  const Assignment a = hungarian(cost);
  std::vector<std::size_t> queries;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.pairs[i].second == i);
    queries.push_back(a.pairs[i].first);
  }
  std::sort(queries.begin(), queries.end());
  CHECK(std::adjacent_find(queries.begin(), queries.end()) == queries.end());
}

TEST_CASE("constant shifts leave the optimum unchanged") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t q = 2 + rng.index(5);
    const std::size_t t = 1 + rng.index(q);
    const CostMatrix cost = random_cost(q, t, rng, false);
    const double base = hungarian(cost).total_cost(cost);
    // per-target constant: every injection pays it once
    CostMatrix col = cost;
    const std::size_t target = rng.index(t);
    for (std::size_t i = 0; i < q; ++i) col(i, target) += 3.0;
    CHECK(hungarian(col).total_cost(cost) == doctest::Approx(base).epsilon(1e-12));
    // per-query constant on a square matrix: every permutation pays it once
    const CostMatrix sq = random_cost(t, t, rng, false);
    CostMatrix row = sq;
    const std::size_t query = rng.index(t);
    for (std::size_t j = 0; j < t; ++j) row(query, j) += 2.5;
    CHECK(hungarian(row).total_cost(sq) == doctest::Approx(hungarian(sq).total_cost(sq)).epsilon(1e-12));
  }
}

TEST_CASE("hungarian is deterministic and rejects bad input") {
  Rng rng(4);
  const CostMatrix cost = random_cost(6, 3, rng, true);
  CHECK(hungarian(cost).pairs == hungarian(cost).pairs);
  CHECK_THROWS_AS(hungarian(CostMatrix(2, 3, std::vector<double>(6, 1.0))), ContractError);
  CHECK_THROWS_AS(hungarian(CostMatrix(2, 2, {1, NAN, 0, 0})), ContractError);
  CHECK_THROWS_AS(brute_force_assignment(CostMatrix(9, 1, std::vector<double>(9, 1.0))), ContractError);
}

TEST_CASE("matching cost prefers the exact prediction") {
  HOIPair t;
  t.human = Box{0.3, 0.4, 0.2, 0.3};
  t.object = Box{0.6, 0.5, 0.2, 0.2};
  t.object_class = 2;
  t.verbs = {0, 1, 0, 0};
  Predictions p = predictions_for({t}, 3, 5, 4);
  const LossWeights w;
  const CostMatrix c = matching_cost(p, {t}, w);
  for (double v : c.values) CHECK(std::isfinite(v));
  CHECK(c(0, 0) < c(1, 0));
  CHECK(c(0, 0) < c(2, 0));
  CHECK(c(0, 0) < 0.05);
  CHECK(hungarian(c).query_for(0) == 0);
}

TEST_CASE("matching cost grows with the L1 distance") {
  Rng rng(6);
  HOIPair t;
  t.human = Box{0.3, 0.4, 0.2, 0.3};
  t.object = Box{0.6, 0.5, 0.2, 0.2};
  t.object_class = 1;
  t.verbs = {1, 0, 0, 0};
  Predictions p = predictions_for({t}, 1, 5, 4);
  const LossWeights w;
  double previous = matching_cost(p, {t}, w)(0, 0);
  for (int step = 1; step <= 5; ++step) {
    std::vector<double> h(p.human_boxes.data().begin(), p.human_boxes.data().end());
    h[0] += 0.01;
    p.human_boxes = Tensor({1, 4}, h);
    const double now = matching_cost(p, {t}, w)(0, 0);
    CHECK(now > previous);
    previous = now;
  }
}
