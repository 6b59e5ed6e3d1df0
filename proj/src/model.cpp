#include "hqm/model.hpp"

#include <cmath>

#include "hqm/errors.hpp"

namespace hqm {

void ModelConfig::validate() const {
  if (dim == 0 || dim % 4 != 0) throw ConfigError("model dim must be a positive multiple of 4");
  if (heads == 0 || dim % heads != 0) throw ConfigError("heads must divide model dim");
  if (layers == 0) throw ConfigError("at least one decoder layer is required");
  if (num_queries == 0) throw ConfigError("num_queries must be positive");
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be positive");
  if (num_classes < 1 || num_verbs < 1) throw ConfigError("class and verb counts must be positive");
}

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(fan_in * fan_out);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor({fan_in, fan_out}, std::move(v));
}

Ffn2 make_ffn(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  return {xavier(in, hidden, rng), Tensor::zeros({hidden}), xavier(hidden, out, rng), Tensor::zeros({out})};
}

template <typename Self, typename Ptr>
std::vector<std::pair<std::string, Ptr>> collect(Self& p) {
  std::vector<std::pair<std::string, Ptr>> out;
  auto ffn = [&](const std::string& name, auto& f) {
    out.emplace_back(name + ".w1", &f.w1);
    out.emplace_back(name + ".b1", &f.b1);
    out.emplace_back(name + ".w2", &f.w2);
    out.emplace_back(name + ".b2", &f.b2);
  };
  out.emplace_back("queries", &p.queries);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string prefix = "layer" + std::to_string(l);
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
      const std::string hp = prefix + ".head" + std::to_string(h);
      out.emplace_back(hp + ".w_q", &layer.heads[h].w_q);
      out.emplace_back(hp + ".w_k", &layer.heads[h].w_k);
      out.emplace_back(hp + ".w_v", &layer.heads[h].w_v);
    }
    out.emplace_back(prefix + ".w_o", &layer.w_o);
    out.emplace_back(prefix + ".b_o", &layer.b_o);
    out.emplace_back(prefix + ".norm1_gain", &layer.norm1_gain);
    out.emplace_back(prefix + ".norm1_bias", &layer.norm1_bias);
    ffn(prefix + ".ffn", layer.ffn);
    out.emplace_back(prefix + ".norm2_gain", &layer.norm2_gain);
    out.emplace_back(prefix + ".norm2_bias", &layer.norm2_bias);
  }
  ffn("human_box", p.human_box);
  ffn("object_box", p.object_box);
  ffn("object_class", p.object_class);
  ffn("verb", p.verb);
  ffn("prior_encoder", p.prior_encoder);
  return out;
}

}  // namespace

DecoderParams DecoderParams::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  DecoderParams p;
  p.config = cfg;
  const std::size_t d = cfg.dim, dh = cfg.head_dim();
  std::vector<double> q(cfg.num_queries * d);
  for (auto& x : q) x = rng.normal();
  p.queries = Tensor({cfg.num_queries, d}, std::move(q));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    DecoderLayerParams layer;
    for (std::size_t h = 0; h < cfg.heads; ++h) layer.heads.push_back({xavier(d, dh, rng), xavier(d, dh, rng), xavier(d, dh, rng)});
    layer.w_o = xavier(d, d, rng);
    layer.b_o = Tensor::zeros({d});
    layer.norm1_gain = Tensor::filled({d}, 1.0);
    layer.norm1_bias = Tensor::zeros({d});
    layer.ffn = make_ffn(d, cfg.ffn_dim, d, rng);
    layer.norm2_gain = Tensor::filled({d}, 1.0);
    layer.norm2_bias = Tensor::zeros({d});
    p.layers.push_back(std::move(layer));
  }
  p.human_box = make_ffn(d, d, 4, rng);
  p.object_box = make_ffn(d, d, 4, rng);
  p.object_class = make_ffn(d, d, static_cast<std::size_t>(cfg.num_classes + 1), rng);
  p.verb = make_ffn(d, d, static_cast<std::size_t>(cfg.num_verbs), rng);
  p.prior_encoder = make_ffn(12, d, d, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> DecoderParams::named() { return collect<DecoderParams, Tensor*>(*this); }

std::vector<std::pair<std::string, const Tensor*>> DecoderParams::named() const {
  return collect<const DecoderParams, const Tensor*>(*this);
}

std::size_t DecoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->size();
  return n;
}

DecoderParams DecoderParams::watched(GradientTape& tape) const {
  DecoderParams out = *this;
  for (auto& [name, t] : out.named()) *t = tape.watch(*t);
  return out;
}

Tensor apply_ffn(const Tensor& x, const Ffn2& ffn) { return linear(relu(linear(x, ffn.w1, ffn.b1)), ffn.w2, ffn.b2); }

ProjectedMemory project_memory(const FeatureGrid& grid, const DecoderParams& params) {
  ProjectedMemory mem;
  mem.cells = grid.features.rows();
  const Tensor keys_in = add(grid.features, grid.pos_embed);
  for (const auto& layer : params.layers) {
    std::vector<Tensor> ks, vs;
    for (const auto& head : layer.heads) {
      ks.push_back(matmul(keys_in, head.w_k));
      vs.push_back(matmul(grid.features, head.w_v));
    }
    mem.keys.push_back(std::move(ks));
    mem.values.push_back(std::move(vs));
  }
  return mem;
}

DecoderOutputs decoder_forward(const Tensor& queries, const ProjectedMemory& memory, const DecoderParams& params, const MaskHook& hook) {
  const auto& cfg = params.config;
  if (queries.rank() != 2 || queries.cols() != cfg.dim)
    throw ShapeError("decoder queries must be N x " + std::to_string(cfg.dim) + ", got " + shape_str(queries.shape()));
  const std::size_t n = queries.rows();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim()));

  DecoderOutputs out;
  Tensor state = Tensor::zeros({n, cfg.dim});
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const Tensor q_in = add(state, queries);
    std::vector<Tensor> head_outputs, maps, masked_maps;
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
      const Tensor q = matmul(q_in, layer.heads[h].w_q);
      const Tensor attn = softmax_rows(scale(matmul_nt(q, memory.keys[l][h]), inv_sqrt));
      maps.push_back(attn.detached());
      Tensor used = attn;
      if (hook) {
        used = hook(l, h, attn);
        if (used.shape() != attn.shape())
          throw ContractError("mask hook returned " + shape_str(used.shape()) + " for an attention map of " + shape_str(attn.shape()));
      }
      masked_maps.push_back(used.detached());
      head_outputs.push_back(matmul(used, memory.values[l][h]));
    }
    const Tensor attended = linear(concat_cols(head_outputs), layer.w_o, layer.b_o);
    state = layer_norm_rows(add(state, attended), layer.norm1_gain, layer.norm1_bias);
    state = layer_norm_rows(add(state, apply_ffn(state, layer.ffn)), layer.norm2_gain, layer.norm2_bias);
    out.embeddings.push_back(state);
    out.attention.push_back(std::move(maps));
    out.masked_attention.push_back(std::move(masked_maps));
  }
  return out;
}

DecoderOutputs decoder_forward(const QuerySet& queries, const FeatureGrid& grid, const DecoderParams& params, const MaskHook& hook) {
  if (grid.features.cols() != params.config.dim) throw ShapeError("feature grid dimension does not match the model");
  return decoder_forward(queries.embeddings, project_memory(grid, params), params, hook);
}

Predictions detection_heads(const Tensor& embedding, const DecoderParams& params) {
  Predictions p;
  p.human_boxes = sigmoid(apply_ffn(embedding, params.human_box));
  p.object_boxes = sigmoid(apply_ffn(embedding, params.object_box));
  p.class_logits = apply_ffn(embedding, params.object_class);
  p.verb_logits = apply_ffn(embedding, params.verb);
  return p;
}

}  // namespace hqm
