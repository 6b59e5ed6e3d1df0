#include "hqm/harness.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "hqm/errors.hpp"

namespace hqm {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- evaluation ------------------------------------------------------------

std::vector<Detection> decode_detections(const Predictions& preds) {
  std::vector<Detection> out;
  const std::size_t n = preds.size();
  const std::size_t c = preds.class_logits.cols();
  const std::size_t v = preds.verb_logits.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double top = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) top = std::max(top, preds.class_logits.at(i, j));
    std::vector<double> p(c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += p[j] = std::exp(preds.class_logits.at(i, j) - top);
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (p[j] > p[best]) best = j;
    if (best == c - 1) continue;  // no-object

    Detection d;
    auto box = [&](const Tensor& t) { return Box{t.at(i, 0), t.at(i, 1), t.at(i, 2), t.at(i, 3)}; };
    d.human = box(preds.human_boxes);
    d.object = box(preds.object_boxes);
    d.object_class = static_cast<int>(best);
    d.class_prob = p[best] / z;
    for (std::size_t k = 0; k < v; ++k) d.verb_probs.push_back(1.0 / (1.0 + std::exp(-preds.verb_logits.at(i, k))));
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

// All-points interpolated AP from a ranked list of TP flags.
double average_precision(const std::vector<bool>& tp, std::size_t num_gt) {
  if (num_gt == 0) return NAN;
  std::vector<double> recall, precision;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    hits += tp[i] ? 1 : 0;
    recall.push_back(static_cast<double>(hits) / static_cast<double>(num_gt));
    precision.push_back(static_cast<double>(hits) / static_cast<double>(i + 1));
  }
  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace

EvalReport evaluate_detections(const std::vector<Scene>& scenes, const std::vector<std::vector<Detection>>& detections, int num_verbs,
                               double iou_threshold) {
  if (detections.size() != scenes.size()) throw ContractError("one detection list per scene is required");
  EvalReport report;
  double ap_sum = 0.0;
  int ap_count = 0;
  for (int v = 0; v < num_verbs; ++v) {
    std::size_t num_gt = 0;
    for (const Scene& s : scenes)
      for (const HOIPair& p : s.pairs) num_gt += p.has_verb(v) ? 1 : 0;
    report.gt_per_verb.push_back(num_gt);
    if (num_gt == 0) {
      report.ap_per_verb.push_back(NAN);
      continue;
    }

    struct Ranked {
      double score;
      std::size_t scene, index;
    };
    std::vector<Ranked> ranked;
    for (std::size_t s = 0; s < detections.size(); ++s)
      for (std::size_t i = 0; i < detections[s].size(); ++i) {
        const Detection& d = detections[s][i];
        ranked.push_back({d.class_prob * d.verb_probs.at(v), s, i});
      }
    std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

    std::vector<std::vector<bool>> used(scenes.size());
    for (std::size_t s = 0; s < scenes.size(); ++s) used[s].assign(scenes[s].pairs.size(), false);
    std::vector<bool> tp;
    for (const Ranked& r : ranked) {
      const Detection& d = detections[r.scene][r.index];
      const auto& pairs = scenes[r.scene].pairs;
      double best_overlap = -1.0;
      std::size_t best_gt = pairs.size();
      for (std::size_t g = 0; g < pairs.size(); ++g) {
        const HOIPair& gt = pairs[g];
        if (used[r.scene][g] || !gt.has_verb(v) || gt.object_class != d.object_class) continue;
        const double overlap = std::min(iou(d.human, gt.human), iou(d.object, gt.object));
        if (overlap >= iou_threshold && overlap > best_overlap) {
          best_overlap = overlap;
          best_gt = g;
        }
      }
      const bool hit = best_gt < pairs.size();
      if (hit) used[r.scene][best_gt] = true;
      tp.push_back(hit);
      (hit ? report.true_positives : report.false_positives) += 1;
    }
    const double ap = average_precision(tp, num_gt);
    report.ap_per_verb.push_back(ap);
    ap_sum += ap;
    ++ap_count;
  }
  report.map = ap_count > 0 ? ap_sum / ap_count : 0.0;
  return report;
}

namespace {

Tensor feature_table(const ModelConfig& m) { return class_table(m.num_classes, m.dim, m.feature_seed); }

QuerySet learnable_queries(const DecoderParams& params) { return QuerySet{QueryKind::learnable, params.queries, {}}; }

}  // namespace

EvalReport evaluate(const DecoderParams& params, const std::vector<Scene>& scenes) {
  const Tensor table = feature_table(params.config);
  std::vector<std::vector<Detection>> dets;
  dets.reserve(scenes.size());
  for (const Scene& s : scenes) {
    const DecoderOutputs out = decoder_forward(learnable_queries(params), encode_scene(s, table), params);
    dets.push_back(decode_detections(detection_heads(out.final_embedding(), params)));
  }
  return evaluate_detections(scenes, dets, params.config.num_verbs);
}

// ---- training --------------------------------------------------------------

Rng step_rng(std::uint64_t seed, std::size_t iteration, std::size_t slot) {
  return Rng::derive(Rng::derive(seed, 3 + iteration).next_u64(), slot);
}

SceneStep scene_step(const Scene& scene, const FeatureGrid& grid, const DecoderParams& params, const RunConfig& cfg, std::size_t iteration, Rng& rng,
                     const Tensor* copy_source) {
  const ProjectedMemory memory = project_memory(grid, params);
  LearnablePass pass = run_learnable_pass(scene, memory, params, cfg.strategy, cfg.amm, cfg.weights, rng);
  const HardBranchContext ctx{scene, memory, params, pass, cfg.weights, cfg.amm, cfg.shift, iteration, copy_source};
  HardBranchResult hard = run_hard_branch(cfg.strategy, ctx, rng);
  Tensor total = total_loss(pass.loss.weighted_total, hard.loss, cfg.weights);
  return SceneStep{std::move(pass.loss), std::move(hard), std::move(total)};
}

void AdamW::step(DecoderParams& params, const std::vector<Tensor>& grads, const OptimizerConfig& cfg, double lr) {
  auto named = params.named();
  if (grads.size() != named.size()) throw ContractError("one gradient per parameter tensor is required");
  if (m.empty()) {
    for (const auto& [name, t] : named) {
      m.emplace_back(t->size(), 0.0);
      v.emplace_back(t->size(), 0.0);
    }
  }
  for (std::size_t k = 0; k < named.size(); ++k)
    for (double g : grads[k].data())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in '" + named[k].first + "' at step " + std::to_string(steps));

  ++steps;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps));
  for (std::size_t k = 0; k < named.size(); ++k) {
    auto data = named[k].second->mutable_data();
    const auto g = grads[k].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[k][i] = cfg.beta1 * m[k][i] + (1.0 - cfg.beta1) * g[i];
      v[k][i] = cfg.beta2 * v[k][i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double update = (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + cfg.epsilon);
      data[i] -= lr * (update + cfg.weight_decay * data[i]);
    }
  }
}

std::string metrics_csv_header() { return "epoch,loss_total,loss_l,loss_h,l1,giou,ce,focal,val_map"; }

namespace {

std::string fmt(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

std::string metrics_csv_row(const EpochMetrics& m) {
  std::string row = std::to_string(m.epoch);
  for (double x : {m.loss_total, m.loss_l, m.loss_h, m.l1, m.giou, m.ce, m.focal, m.val_map}) row += "," + fmt(x);
  return row;
}

Trainer::Trainer(RunConfig cfg) : cfg_(std::move(cfg)), order_rng_(Rng::derive(cfg_.seed, 2)) {
  cfg_.validate();
  train_ = generate_dataset(cfg_.data.generation, cfg_.data.train_seed, cfg_.data.train_scenes);
  val_ = generate_dataset(cfg_.data.generation, cfg_.data.val_seed, cfg_.data.val_scenes);
  const Tensor table = feature_table(cfg_.model);
  train_grids_.reserve(train_.scenes.size());
  for (const Scene& s : train_.scenes) train_grids_.push_back(encode_scene(s, table));
  Rng init = Rng::derive(cfg_.seed, 1);
  params_ = DecoderParams::init(cfg_.model, init);
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches() {
  std::vector<std::size_t> order(train_.scenes.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng_.index(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += cfg_.optimizer.batch_size)
    batches.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + cfg_.optimizer.batch_size));
  return batches;
}

IterationRecord Trainer::step(const std::vector<std::size_t>& batch, double lr) {
  if (batch.empty()) throw ContractError("empty batch");
  GradientTape tape;
  const DecoderParams tracked = params_.watched(tape);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::optional<Tensor> total;
  IterationRecord rec;
  rec.iteration = iteration_;
  for (std::size_t slot = 0; slot < batch.size(); ++slot) {
    const std::size_t idx = batch[slot];
    Rng rng = step_rng(cfg_.seed, iteration_, slot);
    SceneStep s = scene_step(train_.scenes[idx], train_grids_[idx], tracked, cfg_, iteration_, rng);
    const double l = s.learnable.weighted_total.item();
    const double h = s.hard.loss ? s.hard.loss->item() : 0.0;
    rec.loss_l += l * inv_b;
    rec.loss_h += h * inv_b;
    running_.loss_total += s.total.item();
    running_.loss_l += l;
    running_.loss_h += h;
    running_.l1 += s.learnable.l1.item();
    running_.giou += s.learnable.giou.item();
    running_.ce += s.learnable.ce.item();
    running_.focal += s.learnable.focal.item();
    ++running_count_;
    total = total ? add(*total, s.total) : s.total;
  }
  if (!std::isfinite(total->item())) throw NumericError("non-finite loss at iteration " + std::to_string(iteration_));
  const Gradients grads = tape.backward(scale(*total, inv_b));
  std::vector<Tensor> per_param;
  for (const auto& [name, t] : tracked.named()) per_param.push_back(grads.of(*t));
  optimizer_.step(params_, per_param, cfg_.optimizer, lr);
  ++iteration_;
  return rec;
}

double Trainer::learnable_loss(const std::vector<std::size_t>& batch) const {
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  HqmStrategy plain = cfg_.strategy;
  plain.strategy = Strategy::baseline;
  plain.flags = {};
  for (std::size_t slot = 0; slot < batch.size(); ++slot) {
    const std::size_t idx = batch[slot];
    Rng rng = step_rng(cfg_.seed, iteration_, slot);
    const ProjectedMemory memory = project_memory(train_grids_[idx], params_);
    // Same accumulation order as step(), so the two agree bit for bit.
    total += run_learnable_pass(train_.scenes[idx], memory, params_, plain, cfg_.amm, cfg_.weights, rng).loss.weighted_total.item() * inv_b;
  }
  return total;
}

std::vector<EpochMetrics> Trainer::run(const std::function<void(const EpochMetrics&)>& on_epoch) {
  std::vector<EpochMetrics> history;
  const auto& o = cfg_.optimizer;
  for (std::size_t epoch = 0; epoch < o.epochs; ++epoch) {
    const double lr = epoch >= o.decay_epoch() ? o.learning_rate * o.decay_factor : o.learning_rate;
    running_ = EpochMetrics{};
    running_count_ = 0;
    for (const auto& batch : epoch_batches()) step(batch, lr);
    EpochMetrics m = running_;
    const double n = static_cast<double>(std::max<std::size_t>(1, running_count_));
    for (double* x : {&m.loss_total, &m.loss_l, &m.loss_h, &m.l1, &m.giou, &m.ce, &m.focal}) *x /= n;
    m.epoch = epoch + 1;
    m.val_map = val_.scenes.empty() ? 0.0 : evaluate(params_, val_.scenes).map;
    history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return history;
}

TrainResult train(const RunConfig& cfg, bool write_artifacts, bool verbose) {
  Trainer trainer(cfg);
  std::ofstream csv;
  if (write_artifacts) {
    fs::create_directories(cfg.out_dir);
    csv.open(fs::path(cfg.out_dir) / "metrics.csv", std::ios::binary);
    if (!csv) throw FormatError("cannot write metrics.csv under '" + cfg.out_dir + "'");
    csv << metrics_csv_header() << '\n';
  }
  auto history = trainer.run([&](const EpochMetrics& m) {
    if (write_artifacts) csv << metrics_csv_row(m) << '\n' << std::flush;
    if (verbose) std::cerr << cfg.strategy.name() << " seed " << cfg.seed << " epoch " << m.epoch << " loss " << fmt(m.loss_total) << " val_map " << fmt(m.val_map) << '\n';
  });
  if (write_artifacts) save_checkpoint((fs::path(cfg.out_dir) / "checkpoint").string(), cfg, trainer.params());
  return TrainResult{std::move(history), trainer.params()};
}

double epochs_to_threshold(const std::vector<EpochMetrics>& metrics, double threshold) {
  for (const auto& m : metrics)
    if (m.val_map >= threshold) return static_cast<double>(m.epoch);
  return INFINITY;
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "hqm-checkpoint";

void put_le(std::ostream& out, double x) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& dir, const RunConfig& cfg, const DecoderParams& params) {
  fs::create_directories(dir);
  json tensors = json::array();
  std::size_t offset = 0;
  std::ofstream blob(fs::path(dir) / "params.bin", std::ios::binary);
  if (!blob) throw FormatError("cannot write params.bin under '" + dir + "'");
  for (const auto& [name, t] : params.named()) {
    tensors.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}});
    for (double x : t->data()) put_le(blob, x);
    offset += t->size();
  }
  blob.close();
  const json manifest{{"format", kCheckpointFormat}, {"version", 1}, {"config", to_json(cfg)}, {"dtype", "float64-le"}, {"count", offset}, {"tensors", tensors}};
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!out) throw FormatError("cannot write manifest.json under '" + dir + "'");
  out << manifest.dump(1) << '\n';
}

std::pair<RunConfig, DecoderParams> load_checkpoint(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!in) throw FormatError("no manifest.json in '" + dir + "'");
  json manifest;
  RunConfig cfg;
  try {
    manifest = json::parse(in);
    if (manifest.value("format", std::string{}) != kCheckpointFormat || manifest.value("version", 0) != 1)
      throw FormatError("'" + dir + "' is not a version 1 checkpoint");
    cfg = run_config_from_json(manifest.at("config"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config is invalid: ") + e.what());
  }

  Rng unused(0);
  DecoderParams params = DecoderParams::init(cfg.model, unused);
  auto named = params.named();
  const json& tensors = manifest.at("tensors");
  if (tensors.size() != named.size()) throw FormatError("checkpoint tensor list does not match the configured model");

  std::ifstream blob(fs::path(dir) / "params.bin", std::ios::binary);
  if (!blob) throw FormatError("no params.bin in '" + dir + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  if (bytes.size() != 8 * params.parameter_count()) throw FormatError("params.bin size does not match the manifest");

  for (std::size_t k = 0; k < named.size(); ++k) {
    const json& entry = tensors[k];
    auto& [name, t] = named[k];
    if (entry.at("name").get<std::string>() != name || entry.at("shape").get<Shape>() != t->shape())
      throw FormatError("checkpoint tensor '" + entry.at("name").get<std::string>() + "' does not match model tensor '" + name + "' " + shape_str(t->shape()));
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    if (offset + t->size() > bytes.size() / 8) throw FormatError("tensor '" + name + "' runs past the end of params.bin");
    auto data = t->mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_le(&bytes[8 * (offset + i)]);
  }
  return {cfg, std::move(params)};
}

// ---- ablation --------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) return NAN;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  const double a = values[n / 2 - 1], b = values[n / 2];
  if (std::isinf(a) || std::isinf(b)) return std::isinf(b) ? b : a;
  return 0.5 * (a + b);
}

std::vector<AblationRow> ablate(const RunConfig& base, const std::vector<HqmStrategy>& strategies, bool verbose) {
  if (strategies.empty()) throw ConfigError("ablate needs at least one strategy");
  if (base.ablation_seeds.empty()) throw ConfigError("ablate needs at least one seed");
  std::vector<AblationRow> rows, medians;
  for (const HqmStrategy& strategy : strategies) {
    std::vector<double> maps, epochs;
    for (std::uint64_t seed : base.ablation_seeds) {
      RunConfig cfg = base;
      cfg.strategy = strategy;
      cfg.seed = seed;
      const TrainResult r = train(cfg, false, verbose);
      AblationRow row{strategy.name(), std::to_string(seed), r.metrics.back().val_map, epochs_to_threshold(r.metrics, cfg.map_threshold)};
      maps.push_back(row.final_map);
      epochs.push_back(row.epochs_to_threshold);
      rows.push_back(std::move(row));
    }
    medians.push_back({strategy.name(), "median", median(maps), median(epochs)});
  }
  rows.insert(rows.end(), medians.begin(), medians.end());
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "strategy,seed,final_map,epochs_to_threshold\n";
  for (const auto& r : rows) out += r.strategy + "," + r.seed + "," + fmt(r.final_map) + "," + fmt(r.epochs_to_threshold) + "\n";
  return out;
}

// ---- diagnostics -----------------------------------------------------------

std::vector<std::string> dump_attention(const DecoderParams& params, const Scene& scene, const std::string& out_dir) {
  if (scene.grid_h * scene.grid_w == 0) throw ContractError("scene has an empty grid");
  const FeatureGrid grid = encode_scene(scene, feature_table(params.config));
  const DecoderOutputs out = decoder_forward(learnable_queries(params), grid, params);
  fs::create_directories(out_dir);
  std::vector<std::string> paths;
  for (std::size_t l = 0; l < out.attention.size(); ++l)
    for (std::size_t h = 0; h < out.attention[l].size(); ++h) {
      const Tensor& a = out.attention[l][h];
      const fs::path path = fs::path(out_dir) / ("attention_layer" + std::to_string(l) + "_head" + std::to_string(h) + ".csv");
      std::ofstream f(path, std::ios::binary);
      if (!f) throw FormatError("cannot write '" + path.string() + "'");
      char buf[32];
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) {
          std::snprintf(buf, sizeof buf, "%.17g", a.at(r, c));
          if (c) f << ',';
          f << buf;
        }
        f << '\n';
      }
      if (!f) throw FormatError("write to '" + path.string() + "' failed");
      paths.push_back(path.string());
    }
  return paths;
}

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.data.generation.num_classes = 2;
  cfg.data.generation.num_verbs = 2;
  cfg.data.generation.min_pairs = 2;
  cfg.data.generation.max_pairs = 2;
  cfg.data.generation.grid_h = 4;
  cfg.data.generation.grid_w = 4;
  cfg.data.generation.min_box = 0.2;
  cfg.data.generation.max_box = 0.35;
  cfg.data.train_scenes = 4;
  cfg.data.val_scenes = 2;
  cfg.model.dim = 8;
  cfg.model.heads = 2;
  cfg.model.layers = 2;
  cfg.model.num_queries = 4;
  cfg.model.ffn_dim = 8;
  cfg.model.num_classes = 2;
  cfg.model.num_verbs = 2;
  cfg.amm.top_k = 4;
  cfg.optimizer.epochs = 1;
  cfg.optimizer.batch_size = 2;
  cfg.out_dir = "runs/tiny";
  return cfg;
}

namespace {

std::string group_of(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace

std::vector<GradCheckEntry> grad_check(const RunConfig& cfg, const std::vector<HqmStrategy>& strategies, double eps) {
  cfg.validate();
  const auto& g = cfg.data.generation;
  if (cfg.model.num_queries > 4 || g.grid_h > 6 || g.grid_w > 6)
    throw ContractError("grad-check needs N_q <= 4 and a grid no larger than 6x6");
  if (strategies.empty()) throw ConfigError("grad-check needs at least one strategy");

  Rng scene_rng = Rng::derive(cfg.seed, 5);
  const Scene scene = generate_scene(g, scene_rng);
  const FeatureGrid grid = encode_scene(scene, feature_table(cfg.model));
  Rng init = Rng::derive(cfg.seed, 1);
  const DecoderParams base = DecoderParams::init(cfg.model, init);

  std::vector<std::string> names;
  std::vector<Tensor> flat;
  for (const auto& [name, t] : base.named()) {
    names.push_back(name);
    flat.push_back(*t);
  }

  std::vector<GradCheckEntry> report;
  for (const HqmStrategy& strategy : strategies) {
    RunConfig run = cfg;
    run.strategy = strategy;
    // Every evaluation replays the same shift and mask draws, and AMM copies
    // keep their unperturbed values: they are detached in training.
    auto f = [&](std::span<const Tensor> values) {
      DecoderParams p = base;
      auto slots = p.named();
      for (std::size_t k = 0; k < slots.size(); ++k) *slots[k].second = values[k];
      Rng rng = step_rng(cfg.seed, 0, 0);
      std::size_t iteration = 0;
      return scene_step(scene, grid, p, run, iteration, rng, &base.queries).total;
    };
    const auto start = std::chrono::steady_clock::now();
    const FiniteDiffReport fd = finite_diff_check(f, flat, eps);
    GradCheckEntry entry;
    entry.strategy = strategy.name();
    entry.max_rel_error = fd.max_rel_error;
    for (std::size_t k = 0; k < names.size(); ++k) {
      double& slot = entry.per_group[group_of(names[k])];
      slot = std::max(slot, fd.per_param[k]);
    }
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.push_back(std::move(entry));
  }
  return report;
}

}  // namespace hqm
