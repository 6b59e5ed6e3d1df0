#include "hqm/mining.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "hqm/errors.hpp"

namespace hqm {

PairPrior pair_prior(const Box& h, const Box& o) {
  return {h.cx, h.cy, h.w, h.h, o.cx, o.cy, o.w, o.h, h.cx - o.cx, h.cy - o.cy, h.w * h.h, o.w * o.h};
}

PairPrior pair_prior(const HOIPair& pair) { return pair_prior(pair.human, pair.object); }

void AmmConfig::validate(std::size_t cells) const {
  if (top_k < 1 || top_k > cells) throw ConfigError("AMM top_k must lie in [1, " + std::to_string(cells) + "]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("AMM gamma must lie in [0, 1]");
}

// ---- strategy --------------------------------------------------------------

bool HqmStrategy::uses_gbs() const {
  return strategy == Strategy::gbs_only || strategy == Strategy::ajl || strategy == Strategy::cjl || strategy == Strategy::pjl;
}

bool HqmStrategy::uses_amm() const {
  return strategy == Strategy::amm_only || strategy == Strategy::ajl || strategy == Strategy::cjl || strategy == Strategy::pjl;
}

void HqmStrategy::validate() const {
  if ((flags.no_shift || flags.gaussian_noise) && !uses_gbs()) throw ConfigError("no_shift / gaussian_noise need a strategy that runs GBS");
  if (flags.no_shift && flags.gaussian_noise) throw ConfigError("no_shift and gaussian_noise are separate variants");
  if ((flags.no_topk || flags.reference_self) && !uses_amm()) throw ConfigError("no_topk / reference_self need a strategy that runs AMM");
  if (flags.mask_learnable && strategy != Strategy::amm_only) throw ConfigError("mask_learnable is a variant of amm_only");
  if (flags.mask_learnable && (flags.no_topk || flags.reference_self)) throw ConfigError("mask_learnable cannot be combined with other AMM variants");
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::baseline: return "baseline";
    case Strategy::gbs_only: return "gbs_only";
    case Strategy::amm_only: return "amm_only";
    case Strategy::ajl: return "ajl";
    case Strategy::cjl: return "cjl";
    case Strategy::pjl: return "pjl";
  }
  return "unknown";
}

std::string HqmStrategy::name() const {
  std::string out = strategy_name(strategy);
  if (flags.no_shift) out += "+no_shift";
  if (flags.gaussian_noise) out += "+gaussian_noise";
  if (flags.no_topk) out += "+no_topk";
  if (flags.reference_self) out += "+reference_self";
  if (flags.mask_learnable) out += "+mask_learnable";
  return out;
}

HqmStrategy parse_strategy(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, '+');) parts.push_back(item);
  if (parts.empty()) throw ConfigError("empty strategy name");

  HqmStrategy s;
  const std::string& base = parts[0];
  if (base == "baseline") s.strategy = Strategy::baseline;
  else if (base == "gbs_only" || base == "gbs") s.strategy = Strategy::gbs_only;
  else if (base == "amm_only" || base == "amm") s.strategy = Strategy::amm_only;
  else if (base == "ajl") s.strategy = Strategy::ajl;
  else if (base == "cjl") s.strategy = Strategy::cjl;
  else if (base == "pjl") s.strategy = Strategy::pjl;
  else throw ConfigError("unknown strategy '" + base + "'");

  for (std::size_t i = 1; i < parts.size(); ++i) {
    const std::string& f = parts[i];
    if (f == "no_shift") s.flags.no_shift = true;
    else if (f == "gaussian_noise") s.flags.gaussian_noise = true;
    else if (f == "no_topk") s.flags.no_topk = true;
    else if (f == "reference_self") s.flags.reference_self = true;
    else if (f == "mask_learnable") s.flags.mask_learnable = true;
    else throw ConfigError("unknown ablation flag '" + f + "'");
  }
  s.validate();
  return s;
}

// ---- GBS -------------------------------------------------------------------

namespace {

struct EncodedPriors {
  Tensor queries;
  std::vector<Box> humans, objects;
  int fallbacks = 0;
};

EncodedPriors encode_priors(std::span<const HOIPair> pairs, const Ffn2& prior_encoder, const ShiftConfig& shift, const AblationFlags& flags, Rng& rng) {
  EncodedPriors out;
  const bool shifting = !flags.no_shift && !flags.gaussian_noise;
  std::vector<double> priors;
  for (const auto& pair : pairs) {
    Box h = pair.human, o = pair.object;
    if (shifting) {
      bool fb_h = false, fb_o = false;
      h = shift_box(pair.human, shift, rng, &fb_h);
      o = shift_box(pair.object, shift, rng, &fb_o);
      out.fallbacks += int(fb_h) + int(fb_o);
    }
    out.humans.push_back(h);
    out.objects.push_back(o);
    const PairPrior p = pair_prior(h, o);
    priors.insert(priors.end(), p.begin(), p.end());
  }
  const Tensor prior_tensor({pairs.size(), 12}, std::move(priors));
  out.queries = tanh(apply_ffn(prior_tensor, prior_encoder));
  if (flags.gaussian_noise) {
    std::vector<double> noise(out.queries.size());
    for (auto& v : noise) v = kGaussianNoiseSigma * rng.normal();
    out.queries = add(out.queries, Tensor(out.queries.shape(), std::move(noise)));
  }
  return out;
}

}  // namespace

Tensor gbs_encode(const HOIPair& pair, const Ffn2& prior_encoder, const ShiftConfig& shift, const AblationFlags& flags, Rng& rng,
                  Box* shifted_human, Box* shifted_object, bool* fell_back) {
  auto enc = encode_priors(std::span<const HOIPair>(&pair, 1), prior_encoder, shift, flags, rng);
  if (shifted_human) *shifted_human = enc.humans[0];
  if (shifted_object) *shifted_object = enc.objects[0];
  if (fell_back) *fell_back = enc.fallbacks > 0;
  return enc.queries;
}

GbsQueries build_gbs_queries(const std::vector<HOIPair>& pairs, const Ffn2& prior_encoder, const ShiftConfig& shift, const AblationFlags& flags,
                             Rng& rng) {
  auto enc = encode_priors(pairs, prior_encoder, shift, flags, rng);
  GbsQueries out;
  out.queries.kind = QueryKind::gbs;
  out.queries.embeddings = std::move(enc.queries);
  out.queries.origin.resize(pairs.size());
  std::iota(out.queries.origin.begin(), out.queries.origin.end(), std::size_t{0});
  out.shifted_humans = std::move(enc.humans);
  out.shifted_objects = std::move(enc.objects);
  out.fallbacks = enc.fallbacks;
  return out;
}

// ---- AMM -------------------------------------------------------------------

std::vector<std::size_t> top_k_indices(std::span<const double> row, std::size_t k) {
  if (k > row.size()) throw ConfigError("top-K larger than the attention map");
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
  idx.resize(k);
  return idx;
}

namespace {

// Slot s of `draws` decides the s-th ranked reference position.
std::vector<double> topk_pattern(std::span<const double> reference, std::size_t k, double mask_prob, std::span<const double> draws) {
  std::vector<double> mask(reference.size(), 1.0);
  const auto idx = top_k_indices(reference, k);
  for (std::size_t s = 0; s < idx.size(); ++s)
    if (draws[s] < mask_prob) mask[idx[s]] = 0.0;
  return mask;
}

std::vector<double> uniform_draws(std::size_t n, Rng& rng) {
  std::vector<double> d(n);
  for (auto& x : d) x = rng.uniform();
  return d;
}

}  // namespace

std::vector<double> amm_mask_pattern(std::span<const double> reference, const AmmConfig& cfg, Rng& rng) {
  cfg.validate(reference.size());
  const auto draws = uniform_draws(cfg.top_k, rng);
  return topk_pattern(reference, cfg.top_k, cfg.mask_probability(), draws);
}

std::vector<double> amm_mask(std::span<const double> attention, std::span<const double> reference, const AmmConfig& cfg, Rng& rng) {
  if (attention.size() != reference.size()) throw ShapeError("AMM attention and reference rows differ in length");
  auto out = amm_mask_pattern(reference, cfg, rng);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= attention[i];
  return out;
}

QuerySet select_positive_queries(const Assignment& assignment, const Tensor& learnable_queries) {
  if (assignment.empty()) throw ContractError("no matched queries to copy");
  QuerySet out;
  out.kind = QueryKind::amm_copy;
  std::vector<std::size_t> rows;
  for (const auto& [q, t] : assignment.pairs) {
    rows.push_back(q);
    out.origin.push_back(t);
  }
  out.embeddings = gather_rows(learnable_queries.detached(), rows);
  return out;
}

HardKind ajl_step(std::size_t iteration) { return iteration % 2 == 0 ? HardKind::gbs : HardKind::amm; }

AmmHook::AmmHook(const AmmConfig& cfg, const AblationFlags& flags, const std::vector<std::vector<Tensor>>* reference_maps,
                 std::vector<std::optional<std::size_t>> reference_rows, Rng& rng)
    : cfg_(cfg), flags_(flags), reference_maps_(reference_maps), reference_rows_(std::move(reference_rows)), rng_(&rng) {}

std::vector<double> AmmHook::draw_pattern(std::size_t row, std::size_t head, std::span<const double> reference, std::size_t cells) {
  const std::size_t n_draws = flags_.no_topk ? cells : cfg_.top_k;
  std::vector<double> draws;
  if (cfg_.per_layer_resample) {
    draws = uniform_draws(n_draws, *rng_);
  } else {
    auto& cached = cached_draws_[{row, head}];
    if (cached.empty()) cached = uniform_draws(n_draws, *rng_);
    draws = cached;
  }
  if (flags_.no_topk) {
    const double rate = cfg_.mask_probability() * static_cast<double>(cfg_.top_k) / static_cast<double>(cells);
    std::vector<double> mask(cells, 1.0);
    for (std::size_t i = 0; i < cells; ++i)
      if (draws[i] < rate) mask[i] = 0.0;
    candidates_ += cells;
    return mask;
  }
  candidates_ += cfg_.top_k;
  return topk_pattern(reference, cfg_.top_k, cfg_.mask_probability(), draws);
}

Tensor AmmHook::operator()(std::size_t layer, std::size_t head, const Tensor& attention) {
  const std::size_t n = attention.rows(), cells = attention.cols();
  cfg_.validate(cells);
  if (reference_rows_.size() != n) throw ContractError("AMM hook has " + std::to_string(reference_rows_.size()) + " reference rows for " + std::to_string(n) + " queries");
  std::vector<double> mask(n * cells);
  for (std::size_t r = 0; r < n; ++r) {
    std::span<const double> reference;
    if (flags_.reference_self) {
      reference = attention.data().subspan(r * cells, cells);
    } else if (reference_rows_[r]) {
      reference = (*reference_maps_)[layer][head].data().subspan(*reference_rows_[r] * cells, cells);
    } else {
      std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(r * cells), cells, 1.0);
      continue;
    }
    const auto pattern = draw_pattern(r, head, reference, cells);
    std::copy(pattern.begin(), pattern.end(), mask.begin() + static_cast<std::ptrdiff_t>(r * cells));
    masked_ += static_cast<std::size_t>(std::count(pattern.begin(), pattern.end(), 0.0));
  }
  return mul(attention, Tensor(attention.shape(), std::move(mask)));
}

// ---- branches --------------------------------------------------------------

LearnablePass run_learnable_pass(const Scene& scene, const ProjectedMemory& memory, const DecoderParams& params, const HqmStrategy& strategy,
                                 const AmmConfig& amm, const LossWeights& weights, Rng& rng) {
  LearnablePass pass;
  if (strategy.flags.mask_learnable) {
    AblationFlags self_ref = strategy.flags;
    self_ref.reference_self = true;
    AmmHook hook(amm, self_ref, nullptr, std::vector<std::optional<std::size_t>>(params.queries.rows()), rng);
    pass.outputs = decoder_forward(params.queries, memory, params, std::ref(hook));
  } else {
    pass.outputs = decoder_forward(params.queries, memory, params);
  }
  pass.predictions = detection_heads(pass.outputs.final_embedding(), params);
  pass.assignment = hungarian(matching_cost(pass.predictions, scene.pairs, weights));
  pass.loss = branch_loss(pass.predictions, scene.pairs, pass.assignment, weights);
  return pass;
}

namespace {

Tensor hard_loss(const Tensor& embedding, const std::vector<std::size_t>& origin, const HardBranchContext& ctx) {
  Assignment a;
  for (std::size_t r = 0; r < origin.size(); ++r) a.pairs.emplace_back(r, origin[r]);
  std::sort(a.pairs.begin(), a.pairs.end(), [](const auto& x, const auto& y) { return x.second < y.second; });
  const Predictions preds = detection_heads(embedding, ctx.params);
  return branch_loss(preds, ctx.scene.pairs, a, ctx.weights).weighted_total;
}

std::vector<std::optional<std::size_t>> matched_references(const std::vector<std::size_t>& origin, const Assignment& assignment) {
  std::vector<std::optional<std::size_t>> refs;
  for (std::size_t t : origin) {
    std::optional<std::size_t> q;
    for (const auto& [qq, tt] : assignment.pairs)
      if (tt == t) q = qq;
    refs.push_back(q);
  }
  return refs;
}

Tensor gbs_branch(const HqmStrategy& s, const HardBranchContext& ctx, Rng& rng, HardBranchResult& res) {
  res.ran_gbs = true;
  auto q = build_gbs_queries(ctx.scene.pairs, ctx.params.prior_encoder, ctx.shift, s.flags, rng);
  res.shift_fallbacks += q.fallbacks;
  const auto out = decoder_forward(q.queries.embeddings, ctx.memory, ctx.params);
  return hard_loss(out.final_embedding(), q.queries.origin, ctx);
}

std::optional<Tensor> amm_branch(const HqmStrategy& s, const HardBranchContext& ctx, Rng& rng, HardBranchResult& res) {
  res.ran_amm = true;
  if (ctx.learnable.assignment.empty()) {
    res.zero_matched = true;
    return std::nullopt;
  }
  const QuerySet q = select_positive_queries(ctx.learnable.assignment, ctx.copy_source ? *ctx.copy_source : ctx.params.queries);
  AmmHook hook(ctx.amm, s.flags, &ctx.learnable.outputs.attention, matched_references(q.origin, ctx.learnable.assignment), rng);
  const auto out = decoder_forward(q.embeddings, ctx.memory, ctx.params, std::ref(hook));
  res.masked_positions += hook.masked_positions();
  res.candidate_positions += hook.candidate_positions();
  return hard_loss(out.final_embedding(), q.origin, ctx);
}

Tensor cjl_branch(const HqmStrategy& s, const HardBranchContext& ctx, Rng& rng, HardBranchResult& res) {
  res.ran_gbs = res.ran_amm = true;
  auto q = build_gbs_queries(ctx.scene.pairs, ctx.params.prior_encoder, ctx.shift, s.flags, rng);
  res.shift_fallbacks += q.fallbacks;
  AmmHook hook(ctx.amm, s.flags, &ctx.learnable.outputs.attention, matched_references(q.queries.origin, ctx.learnable.assignment), rng);
  const auto out = decoder_forward(q.queries.embeddings, ctx.memory, ctx.params, std::ref(hook));
  res.masked_positions += hook.masked_positions();
  res.candidate_positions += hook.candidate_positions();
  return hard_loss(out.final_embedding(), q.queries.origin, ctx);
}

}  // namespace

HardBranchResult run_hard_branch(const HqmStrategy& strategy, const HardBranchContext& ctx, Rng& rng) {
  HardBranchResult res;
  switch (strategy.strategy) {
    case Strategy::baseline:
      break;
    case Strategy::gbs_only:
      res.loss = gbs_branch(strategy, ctx, rng, res);
      break;
    case Strategy::amm_only:
      if (!strategy.flags.mask_learnable) {
        res.loss = amm_branch(strategy, ctx, rng, res);
        if (!res.loss) res.loss = Tensor::scalar(0.0);
      }
      break;
    case Strategy::ajl:
      if (ajl_step(ctx.iteration) == HardKind::gbs) {
        res.loss = gbs_branch(strategy, ctx, rng, res);
      } else {
        res.loss = amm_branch(strategy, ctx, rng, res);
        if (!res.loss) res.loss = Tensor::scalar(0.0);
      }
      break;
    case Strategy::cjl:
      res.loss = cjl_branch(strategy, ctx, rng, res);
      break;
    case Strategy::pjl: {
      const Tensor g = gbs_branch(strategy, ctx, rng, res);
      const auto a = amm_branch(strategy, ctx, rng, res);
      res.loss = a ? add(scale(g, 0.5), scale(*a, 0.5)) : scale(g, 0.5);
      break;
    }
  }
  return res;
}

}  // namespace hqm
