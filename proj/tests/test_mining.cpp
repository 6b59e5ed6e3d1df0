#include <cmath>

#include "doctest.h"
#include "hqm/errors.hpp"
#include "hqm/harness.hpp"
#include "hqm/mining.hpp"
#include "test_helpers.hpp"

using namespace hqm;

namespace {

// Small model and one generated scene, shared by the branch-level tests.
struct Fixture {
  RunConfig cfg = tiny_config();
  DecoderParams params;
  Scene scene;
  FeatureGrid grid;

  Fixture() {
    Rng init(11);
    params = DecoderParams::init(cfg.model, init);
    Rng gen(12);
    scene = generate_scene(cfg.data.generation, gen);
    grid = encode_scene(scene, class_table(cfg.model.num_classes, cfg.model.dim, cfg.model.feature_seed));
  }

  SceneStep step(const std::string& strategy, std::size_t iteration, Rng rng) {
    RunConfig c = cfg;
    c.strategy = parse_strategy(strategy);
    return scene_step(scene, grid, params, c, iteration, rng);
  }
};

}  // namespace

TEST_CASE("pair prior layout") {
  const PairPrior p = pair_prior(Box{0.3, 0.4, 0.2, 0.2}, Box{0.5, 0.4, 0.1, 0.2});
  const PairPrior expected = {0.3, 0.4, 0.2, 0.2, 0.5, 0.4, 0.1, 0.2, -0.2, 0.0, 0.04, 0.02};
  for (std::size_t i = 0; i < 12; ++i) CHECK(p[i] == doctest::Approx(expected[i]).epsilon(1e-15));

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Box h{rng.uniform(), rng.uniform(), rng.uniform(0.01, 1.0), rng.uniform(0.01, 1.0)};
    const Box o{rng.uniform(), rng.uniform(), rng.uniform(0.01, 1.0), rng.uniform(0.01, 1.0)};
    const PairPrior q = pair_prior(h, o);
    CHECK(q[8] == q[0] - q[4]);
    CHECK(q[9] == q[1] - q[5]);
    CHECK(q[10] == q[2] * q[3]);
    CHECK(q[11] == q[6] * q[7]);
  }
}

TEST_CASE("shifted-box queries stay inside the open unit cube") {
  Fixture f;
  Rng rng(4);
  for (const auto& pair : f.scene.pairs)
    for (int i = 0; i < 50; ++i) {
      Box sh, so;
      bool fell = false;
      const Tensor q = gbs_encode(pair, f.params.prior_encoder, f.cfg.shift, {}, rng, &sh, &so, &fell);
      CHECK(q.rows() == 1);
      CHECK(q.cols() == f.cfg.model.dim);
      for (double v : q.data()) CHECK((v > -1.0 && v < 1.0));
      CHECK(iou(sh, pair.human) >= f.cfg.shift.iou_lo - 1e-12);
      CHECK(iou(so, pair.object) <= f.cfg.shift.iou_hi + 1e-12);
    }
}

TEST_CASE("no-shift encoding is deterministic and the noise variant is not") {
  Fixture f;
  const HOIPair& pair = f.scene.pairs.front();
  AblationFlags no_shift;
  no_shift.no_shift = true;
  Rng a(1), b(2);
  CHECK(hqm::testing::bit_equal(gbs_encode(pair, f.params.prior_encoder, f.cfg.shift, no_shift, a),
                                gbs_encode(pair, f.params.prior_encoder, f.cfg.shift, no_shift, b)));
  AblationFlags noise;
  noise.gaussian_noise = true;
  Rng c(1), d(2);
  CHECK_FALSE(hqm::testing::bit_equal(gbs_encode(pair, f.params.prior_encoder, f.cfg.shift, noise, c),
                                      gbs_encode(pair, f.params.prior_encoder, f.cfg.shift, noise, d)));
}

TEST_CASE("attention masking example and limits") {
  const std::vector<double> attn = {0.4, 0.3, 0.2, 0.1};
  AmmConfig cfg;
  cfg.top_k = 2;
  cfg.gamma = 1.0;
  Rng rng(0);
  CHECK(amm_mask(attn, attn, cfg, rng) == std::vector<double>{0.0, 0.0, 0.2, 0.1});
  cfg.gamma = 0.0;
  CHECK(amm_mask(attn, attn, cfg, rng) == attn);
  cfg.top_k = 5;
  CHECK_THROWS_AS(cfg.validate(4), ConfigError);

  CHECK(top_k_indices(std::vector<double>{0.1, 0.5, 0.5, 0.2}, 2) == std::vector<std::size_t>{1, 2});
}

TEST_CASE("masking only touches the top-K of the reference at rate gamma") {
  AmmConfig cfg;
  cfg.top_k = 6;
  cfg.gamma = 0.4;
  Rng rng(21), data(22);
  std::size_t masked = 0, total = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> ref(30), attn(30);
    for (auto& v : ref) v = data.uniform();
    for (auto& v : attn) v = data.uniform();
    const auto out = amm_mask(attn, ref, cfg, rng);
    const auto top = top_k_indices(ref, cfg.top_k);
    for (std::size_t i = 0; i < 30; ++i) {
      const bool in_top = std::find(top.begin(), top.end(), i) != top.end();
      if (!in_top) CHECK(out[i] == attn[i]);
      else {
        ++total;
        if (out[i] == 0.0) ++masked;
        else CHECK(out[i] == attn[i]);
      }
    }
  }
  const double rate = static_cast<double>(masked) / static_cast<double>(total);
  CHECK(rate > 0.35);
  CHECK(rate < 0.45);
}

TEST_CASE("positive query selection copies matched rows without gradient") {
  GradientTape tape;
  const Tensor q = tape.watch(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  Assignment a;
  a.pairs = {{2, 0}, {0, 1}};
  const QuerySet s = select_positive_queries(a, q);
  CHECK(s.kind == QueryKind::amm_copy);
  CHECK(s.origin == std::vector<std::size_t>{0, 1});
  CHECK(s.embeddings.at(0, 0) == 5.0);
  CHECK(s.embeddings.at(1, 1) == 2.0);
  CHECK_FALSE(s.embeddings.requires_grad());
  CHECK_THROWS_AS(select_positive_queries(Assignment{}, q), ContractError);
}

TEST_CASE("alternation parity") {
  for (std::size_t i = 0; i < 10; ++i) CHECK(ajl_step(i) == (i % 2 == 0 ? HardKind::gbs : HardKind::amm));
}

TEST_CASE("strategy names") {
  CHECK(parse_strategy("ajl").strategy == Strategy::ajl);
  const HqmStrategy s = parse_strategy("gbs_only+no_shift");
  CHECK(s.flags.no_shift);
  CHECK(s.name() == "gbs_only+no_shift");
  CHECK_THROWS_AS(parse_strategy("nope"), ConfigError);
  CHECK_THROWS_AS(parse_strategy("ajl+bogus"), ConfigError);
  for (const char* n : {"baseline", "gbs_only", "amm_only", "ajl", "cjl", "pjl"}) CHECK(parse_strategy(n).name() == n);
  CHECK_FALSE(parse_strategy("baseline").uses_gbs());
  CHECK(parse_strategy("cjl").uses_gbs());
  CHECK(parse_strategy("cjl").uses_amm());
}

TEST_CASE("baseline runs no hard branch") {
  Fixture f;
  const SceneStep s = f.step("baseline", 0, Rng(1));
  CHECK_FALSE(s.hard.loss.has_value());
  CHECK(s.total.item() == s.learnable.weighted_total.item());
}

TEST_CASE("alternating schedule follows the single-branch strategies") {
  Fixture f;
  const SceneStep even = f.step("ajl", 0, Rng(5));
  const SceneStep gbs = f.step("gbs_only", 0, Rng(5));
  CHECK(even.hard.ran_gbs);
  CHECK_FALSE(even.hard.ran_amm);
  CHECK(even.total.item() == gbs.total.item());

  const SceneStep odd = f.step("ajl", 1, Rng(5));
  const SceneStep amm = f.step("amm_only", 1, Rng(5));
  CHECK(odd.hard.ran_amm);
  CHECK(odd.total.item() == amm.total.item());
}

TEST_CASE("parallel joint loss averages the two branches") {
  Fixture f;
  Rng r(8);
  RunConfig c = f.cfg;
  const ProjectedMemory memory = project_memory(f.grid, f.params);
  c.strategy = parse_strategy("baseline");
  const LearnablePass pass = run_learnable_pass(f.scene, memory, f.params, c.strategy, c.amm, c.weights, r);
  const HardBranchContext ctx{f.scene, memory, f.params, pass, c.weights, c.amm, c.shift, 0, nullptr};

  Rng shared(9);
  const HardBranchResult g = run_hard_branch(parse_strategy("gbs_only"), ctx, shared);
  const HardBranchResult a = run_hard_branch(parse_strategy("amm_only"), ctx, shared);
  Rng again(9);
  const HardBranchResult p = run_hard_branch(parse_strategy("pjl"), ctx, again);
  CHECK(p.ran_gbs);
  CHECK(p.ran_amm);
  CHECK(p.loss->item() == doctest::Approx(0.5 * g.loss->item() + 0.5 * a.loss->item()).epsilon(1e-14));
}

TEST_CASE("hard branches leave the learnable loss untouched") {
  Fixture f;
  const double reference = f.step("baseline", 0, Rng(1)).learnable.weighted_total.item();
  for (const char* s : {"gbs_only", "amm_only", "ajl", "cjl", "pjl"})
    for (std::size_t it : {0u, 1u}) {
      const SceneStep step = f.step(s, it, Rng(1 + it));
      CHECK_MESSAGE(step.learnable.weighted_total.item() == reference, s << " iteration " << it);
    }
}
