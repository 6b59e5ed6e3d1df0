#pragma once

// Cross-attention transformer decoder with a masking hook, and the FFN
// detection heads.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hqm/numerics.hpp"
#include "hqm/rng.hpp"
#include "hqm/scenes.hpp"

namespace hqm {

struct ModelConfig {
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t num_queries = 16;
  std::size_t ffn_dim = 64;
  int num_classes = 5;
  int num_verbs = 4;
  /// Seed of the fixed class embedding table used to encode scenes.
  std::uint64_t feature_seed = 7;

  std::size_t head_dim() const { return dim / heads; }
  void validate() const;
};

/// Two-layer perceptron with a rectifier in between.
struct Ffn2 {
  Tensor w1, b1, w2, b2;
};

struct AttentionHeadParams {
  Tensor w_q, w_k, w_v;
};

struct DecoderLayerParams {
  std::vector<AttentionHeadParams> heads;
  Tensor w_o, b_o;
  Tensor norm1_gain, norm1_bias;
  Ffn2 ffn;
  Tensor norm2_gain, norm2_bias;
};

/// Every trainable tensor: learnable queries, decoder layers, detection
/// heads and the pair-prior encoder used for shifted-box queries.
struct DecoderParams {
  ModelConfig config;
  Tensor queries;
  std::vector<DecoderLayerParams> layers;
  Ffn2 human_box, object_box, object_class, verb;
  Ffn2 prior_encoder;

  static DecoderParams init(const ModelConfig& cfg, Rng& rng);

  /// Tensors in manifest order, with stable dotted names.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::size_t parameter_count() const;

  /// Copy whose tensors are all watched on `tape`.
  DecoderParams watched(GradientTape& tape) const;
};

Tensor apply_ffn(const Tensor& x, const Ffn2& ffn);

enum class QueryKind { learnable, gbs, amm_copy };

struct QuerySet {
  QueryKind kind = QueryKind::learnable;
  Tensor embeddings;
  /// For gbs / amm_copy: ground-truth pair answered by each row.
  std::vector<std::size_t> origin;
};

/// Key and value projections of one scene's feature grid, shared by every
/// decoder pass over that scene within a step.
struct ProjectedMemory {
  /// [layer][head]
  std::vector<std::vector<Tensor>> keys;
  std::vector<std::vector<Tensor>> values;
  std::size_t cells = 0;
};

ProjectedMemory project_memory(const FeatureGrid& grid, const DecoderParams& params);

/// Replaces an attention map (N × cells) before it multiplies the values.
using MaskHook = std::function<Tensor(std::size_t layer, std::size_t head, const Tensor& attention)>;

struct DecoderOutputs {
  /// Output embedding after each layer, N × D.
  std::vector<Tensor> embeddings;
  /// Row-stochastic maps before masking, [layer][head], untracked.
  std::vector<std::vector<Tensor>> attention;
  /// Maps actually used in the value product, [layer][head], untracked.
  std::vector<std::vector<Tensor>> masked_attention;

  const Tensor& final_embedding() const { return embeddings.back(); }
};

DecoderOutputs decoder_forward(const Tensor& queries, const ProjectedMemory& memory, const DecoderParams& params, const MaskHook& hook = {});
DecoderOutputs decoder_forward(const QuerySet& queries, const FeatureGrid& grid, const DecoderParams& params, const MaskHook& hook = {});

struct Predictions {
  Tensor human_boxes;   // N × 4, sigmoid
  Tensor object_boxes;  // N × 4, sigmoid
  Tensor class_logits;  // N × (C + 1), last = no-object
  Tensor verb_logits;   // N × V
  std::size_t size() const { return human_boxes.rows(); }
};

Predictions detection_heads(const Tensor& embedding, const DecoderParams& params);

}  // namespace hqm
