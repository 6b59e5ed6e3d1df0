#include <cmath>

#include "doctest.h"
#include "hqm/errors.hpp"
#include "hqm/losses.hpp"
#include "test_helpers.hpp"

using namespace hqm;
using hqm::testing::random_tensor;

namespace {

std::vector<HOIPair> random_targets(std::size_t n, Rng& rng, int classes = 3, int verbs = 3) {
  std::vector<HOIPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    HOIPair p;
    p.human = Box{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)};
    p.object = Box{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3)};
    p.object_class = static_cast<int>(rng.index(classes));
    p.verbs.assign(verbs, 0);
    p.verbs[rng.index(verbs)] = 1;
    out.push_back(p);
  }
  return out;
}

Predictions random_predictions(std::size_t rows, Rng& rng, int classes = 3, int verbs = 3) {
  Predictions p;
  p.human_boxes = sigmoid(random_tensor({rows, 4}, rng));
  p.object_boxes = sigmoid(random_tensor({rows, 4}, rng));
  p.class_logits = random_tensor({rows, static_cast<std::size_t>(classes + 1)}, rng);
  p.verb_logits = random_tensor({rows, static_cast<std::size_t>(verbs)}, rng);
  return p;
}

Predictions exact_predictions(const std::vector<HOIPair>& targets, int classes, int verbs, double confidence) {
  const std::size_t n = targets.size();
  std::vector<double> h, o, c(n * (classes + 1), -confidence), v;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = targets[i];
    h.insert(h.end(), {t.human.cx, t.human.cy, t.human.w, t.human.h});
    o.insert(o.end(), {t.object.cx, t.object.cy, t.object.w, t.object.h});
    c[i * (classes + 1) + t.object_class] = confidence;
    for (int k = 0; k < verbs; ++k) v.push_back(t.has_verb(k) ? confidence : -confidence);
  }
  return Predictions{Tensor({n, 4}, h), Tensor({n, 4}, o), Tensor({n, static_cast<std::size_t>(classes + 1)}, c),
                     Tensor({n, static_cast<std::size_t>(verbs)}, v)};
}

}  // namespace

TEST_CASE("perfect predictions give zero box losses and vanishing class losses") {
  Rng rng(1);
  const auto targets = random_targets(3, rng);
  const Predictions p = exact_predictions(targets, 3, 3, 40.0);
  const auto [l1, g] = box_losses(p, targets, identity_assignment(3));
  CHECK(l1.item() == 0.0);
  CHECK(std::abs(g.item()) < 1e-15);
  CHECK(ce_object_loss(p.class_logits, targets, identity_assignment(3), 0.1).item() < 1e-12);
  CHECK(focal_verb_loss(p.verb_logits, targets, identity_assignment(3), 2.0, 0.25).item() < 1e-12);
}

TEST_CASE("box losses are symmetric in the pair order") {
  Rng rng(2);
  const auto targets = random_targets(2, rng);
  const Predictions p = random_predictions(4, rng);
  Assignment a;
  a.pairs = {{3, 0}, {1, 1}};
  Assignment swapped;
  swapped.pairs = {{1, 1}, {3, 0}};
  const auto x = box_losses(p, targets, a), y = box_losses(p, targets, swapped);
  CHECK(x.first.item() == doctest::Approx(y.first.item()).epsilon(1e-15));
  CHECK(x.second.item() == doctest::Approx(y.second.item()).epsilon(1e-15));
  CHECK_THROWS_AS(box_losses(p, targets, Assignment{}), ContractError);
}

TEST_CASE("uniform logits cost ln 3 per query") {
  HOIPair t;
  t.object_class = 1;
  t.verbs = {1};
  const Tensor logits = Tensor::zeros({4, 3});
  Assignment a;
  a.pairs = {{2, 0}};
  CHECK(ce_object_loss(logits, {t}, a, 0.1).item() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("focal closed form for a single zero logit") {
  const double got = sigmoid_focal_sum(Tensor::scalar(0.0), {1.0}, 2.0, 0.25).item();
  CHECK(got == doctest::Approx(0.25 * 0.25 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("focal with gamma 0 and alpha 0.5 is half the binary cross-entropy") {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const Tensor logits = random_tensor({3, 4}, rng, 3.0);
    std::vector<double> labels(12);
    double bce = 0.0;
    for (std::size_t k = 0; k < 12; ++k) {
      labels[k] = rng.bernoulli(0.4) ? 1.0 : 0.0;
      const double p = 1.0 / (1.0 + std::exp(-logits[k]));
      bce += labels[k] > 0.5 ? -std::log(p) : -std::log(1.0 - p);
    }
    CHECK(std::abs(sigmoid_focal_sum(logits, labels, 0.0, 0.5).item() - 0.5 * bce) < 1e-9);
  }
}

TEST_CASE("weighted total identity and total_loss") {
  Rng rng(5);
  const auto targets = random_targets(2, rng);
  const Predictions p = random_predictions(5, rng);
  const LossWeights w;
  const Assignment a = hungarian(matching_cost(p, targets, w));
  const LossBreakdown b = branch_loss(p, targets, a, w);
  const double expected = 2.5 * b.l1.item() + 1.0 * b.giou.item() + 1.0 * b.ce.item() + 1.0 * b.focal.item();
  CHECK(std::abs(b.weighted_total.item() - expected) < 1e-12);
  for (const Tensor* t : {&b.l1, &b.giou, &b.ce, &b.focal}) CHECK(t->item() >= 0.0);

  const Tensor l = Tensor::scalar(1.25), h = Tensor::scalar(0.5);
  CHECK(total_loss(l, h, w).item() == 1.75);
  LossWeights no_hard = w;
  no_hard.beta = 0.0;
  CHECK(total_loss(l, h, no_hard).item() == 1.25);
  CHECK(total_loss(l, std::nullopt, w).item() == 1.25);
  LossWeights doubled = w;
  doubled.alpha = 2.0;
  CHECK(total_loss(l, h, doubled).item() == 3.0);
}

TEST_CASE("loss gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(300 + seed);
    const auto targets = random_targets(2, rng);
    const Predictions p = random_predictions(4, rng);
    const LossWeights w;
    const Assignment a = hungarian(matching_cost(p, targets, w));
    auto f = [&](std::span<const Tensor> x) {
      const Predictions q{sigmoid(x[0]), sigmoid(x[1]), x[2], x[3]};
      return branch_loss(q, targets, a, w).weighted_total;
    };
    Rng raw(900 + seed);
    const std::vector<Tensor> params = {random_tensor({4, 4}, raw), random_tensor({4, 4}, raw), p.class_logits, p.verb_logits};
    CHECK_MESSAGE(finite_diff_check(f, params).max_rel_error < 1e-4, "seed " << seed);
  }
}

TEST_CASE("softmax cross-entropy toy passes a tight gradient check") {
  Rng rng(21);
  HOIPair t;
  t.object_class = 2;
  t.verbs = {1};
  Assignment a;
  a.pairs = {{1, 0}};
  auto f = [&](std::span<const Tensor> x) { return ce_object_loss(x[0], {t}, a, 0.1); };
  CHECK(finite_diff_check(f, {random_tensor({3, 4}, rng)}).max_rel_error < 1e-6);
}
