#include "hqm/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "hqm/errors.hpp"

namespace hqm {

using nlohmann::json;

std::size_t OptimizerConfig::decay_epoch() const {
  return static_cast<std::size_t>(std::llround(decay_fraction * static_cast<double>(epochs)));
}

void RunConfig::validate() const {
  data.generation.validate();
  model.validate();
  if (model.num_classes != data.generation.num_classes || model.num_verbs != data.generation.num_verbs)
    throw ConfigError("model and dataset disagree on the number of classes or verbs");
  if (data.train_scenes == 0) throw ConfigError("train_scenes must be >= 1");
  strategy.validate();
  amm.validate(data.generation.grid_h * data.generation.grid_w);
  shift.validate();
  weights.validate();
  const auto& o = optimizer;
  if (o.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (o.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(o.learning_rate > 0) || !std::isfinite(o.learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(o.weight_decay >= 0)) throw ConfigError("weight_decay must be >= 0");
  if (!(o.beta1 >= 0 && o.beta1 < 1) || !(o.beta2 >= 0 && o.beta2 < 1)) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(o.epsilon > 0)) throw ConfigError("epsilon must be positive");
  if (!(o.decay_fraction >= 0 && o.decay_fraction <= 1)) throw ConfigError("decay_fraction must lie in [0, 1]");
  if (!(o.decay_factor > 0 && o.decay_factor <= 1)) throw ConfigError("decay_factor must lie in (0, 1]");
  if (!(map_threshold > 0 && map_threshold <= 1)) throw ConfigError("map_threshold must lie in (0, 1]");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j.is_object()) throw ConfigError("'" + name_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + name_ + "." + it.key() + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

json data_json(const DataConfig& d) {
  json j = to_json(d.generation);
  j["train_scenes"] = d.train_scenes;
  j["val_scenes"] = d.val_scenes;
  j["train_seed"] = d.train_seed;
  j["val_seed"] = d.val_seed;
  return j;
}

void read_generation(Section& s, GenerationConfig& g) {
  s.read("num_classes", g.num_classes);
  s.read("num_verbs", g.num_verbs);
  s.read("min_pairs", g.min_pairs);
  s.read("max_pairs", g.max_pairs);
  s.read("grid_h", g.grid_h);
  s.read("grid_w", g.grid_w);
  s.read("min_box", g.min_box);
  s.read("max_box", g.max_box);
}

}  // namespace

json to_json(const GenerationConfig& g) {
  return json{{"num_classes", g.num_classes}, {"num_verbs", g.num_verbs}, {"min_pairs", g.min_pairs}, {"max_pairs", g.max_pairs},
              {"grid_h", g.grid_h},           {"grid_w", g.grid_w},       {"min_box", g.min_box},       {"max_box", g.max_box}};
}

GenerationConfig generation_config_from_json(const json& j) {
  GenerationConfig g;
  Section s(j, "generation");
  read_generation(s, g);
  s.finish();
  return g;
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["data"] = data_json(c.data);
  j["model"] = {{"dim", c.model.dim},         {"heads", c.model.heads},     {"layers", c.model.layers},
                {"num_queries", c.model.num_queries}, {"ffn_dim", c.model.ffn_dim}, {"feature_seed", c.model.feature_seed}};
  j["strategy"] = c.strategy.name();
  j["amm"] = {{"top_k", c.amm.top_k}, {"gamma", c.amm.gamma}, {"per_layer_resample", c.amm.per_layer_resample}, {"keep_with_gamma", c.amm.keep_with_gamma}};
  j["shift"] = {{"iou_lo", c.shift.iou_lo}, {"iou_hi", c.shift.iou_hi}, {"max_attempts", c.shift.max_attempts}, {"jitter_scale", c.shift.jitter_scale}};
  const auto& w = c.weights;
  j["weights"] = {{"lambda_b", w.lambda_b}, {"lambda_u", w.lambda_u},   {"lambda_c", w.lambda_c},       {"lambda_a", w.lambda_a},
                  {"alpha", w.alpha},       {"beta", w.beta},           {"no_object_weight", w.no_object_weight},
                  {"focal_gamma", w.focal_gamma}, {"focal_alpha", w.focal_alpha}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"learning_rate", o.learning_rate}, {"weight_decay", o.weight_decay}, {"beta1", o.beta1},
                    {"beta2", o.beta2},                 {"epsilon", o.epsilon},           {"decay_fraction", o.decay_fraction},
                    {"decay_factor", o.decay_factor},   {"epochs", o.epochs},             {"batch_size", o.batch_size}};
  j["out_dir"] = c.out_dir;
  j["ablation_seeds"] = c.ablation_seeds;
  j["map_threshold"] = c.map_threshold;
  return j;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section top(j, "config");
  top.read("seed", c.seed);
  if (const json* d = top.child("data")) {
    Section s(*d, "data");
    read_generation(s, c.data.generation);
    s.read("train_scenes", c.data.train_scenes);
    s.read("val_scenes", c.data.val_scenes);
    s.read("train_seed", c.data.train_seed);
    s.read("val_seed", c.data.val_seed);
    s.finish();
  }
  if (const json* m = top.child("model")) {
    Section s(*m, "model");
    s.read("dim", c.model.dim);
    s.read("heads", c.model.heads);
    s.read("layers", c.model.layers);
    s.read("num_queries", c.model.num_queries);
    s.read("ffn_dim", c.model.ffn_dim);
    s.read("feature_seed", c.model.feature_seed);
    s.finish();
  }
  c.model.num_classes = c.data.generation.num_classes;
  c.model.num_verbs = c.data.generation.num_verbs;
  std::string strategy = c.strategy.name();
  top.read("strategy", strategy);
  c.strategy = parse_strategy(strategy);
  if (const json* a = top.child("amm")) {
    Section s(*a, "amm");
    s.read("top_k", c.amm.top_k);
    s.read("gamma", c.amm.gamma);
    s.read("per_layer_resample", c.amm.per_layer_resample);
    s.read("keep_with_gamma", c.amm.keep_with_gamma);
    s.finish();
  }
  if (const json* sh = top.child("shift")) {
    Section s(*sh, "shift");
    s.read("iou_lo", c.shift.iou_lo);
    s.read("iou_hi", c.shift.iou_hi);
    s.read("max_attempts", c.shift.max_attempts);
    s.read("jitter_scale", c.shift.jitter_scale);
    s.finish();
  }
  if (const json* w = top.child("weights")) {
    Section s(*w, "weights");
    s.read("lambda_b", c.weights.lambda_b);
    s.read("lambda_u", c.weights.lambda_u);
    s.read("lambda_c", c.weights.lambda_c);
    s.read("lambda_a", c.weights.lambda_a);
    s.read("alpha", c.weights.alpha);
    s.read("beta", c.weights.beta);
    s.read("no_object_weight", c.weights.no_object_weight);
    s.read("focal_gamma", c.weights.focal_gamma);
    s.read("focal_alpha", c.weights.focal_alpha);
    s.finish();
  }
  if (const json* o = top.child("optimizer")) {
    Section s(*o, "optimizer");
    s.read("learning_rate", c.optimizer.learning_rate);
    s.read("weight_decay", c.optimizer.weight_decay);
    s.read("beta1", c.optimizer.beta1);
    s.read("beta2", c.optimizer.beta2);
    s.read("epsilon", c.optimizer.epsilon);
    s.read("decay_fraction", c.optimizer.decay_fraction);
    s.read("decay_factor", c.optimizer.decay_factor);
    s.read("epochs", c.optimizer.epochs);
    s.read("batch_size", c.optimizer.batch_size);
    s.finish();
  }
  top.read("out_dir", c.out_dir);
  top.read("ablation_seeds", c.ablation_seeds);
  top.read("map_threshold", c.map_threshold);
  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

// ---- datasets --------------------------------------------------------------

namespace {

json box_json(const Box& b) { return json::array({b.cx, b.cy, b.w, b.h}); }

Box box_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw FormatError("box must be an array of 4 numbers");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

json to_json(const Dataset& ds) {
  json scenes = json::array();
  for (const Scene& s : ds.scenes) {
    json pairs = json::array();
    for (const HOIPair& p : s.pairs)
      pairs.push_back({{"human", box_json(p.human)}, {"object", box_json(p.object)}, {"object_class", p.object_class}, {"verbs", p.verbs}});
    scenes.push_back({{"pairs", std::move(pairs)}});
  }
  return json{{"format", "hqm-dataset"}, {"version", 1}, {"generation", to_json(ds.generation)}, {"seed", ds.seed}, {"scenes", std::move(scenes)}};
}

Dataset dataset_from_json(const json& j) {
  try {
    if (j.value("format", std::string{}) != "hqm-dataset") throw FormatError("not a dataset document");
    if (j.value("version", 0) != 1) throw FormatError("unsupported dataset version");
    Dataset ds;
    try {
      ds.generation = generation_config_from_json(j.at("generation"));
      ds.generation.validate();
    } catch (const ConfigError& e) {
      throw FormatError(std::string("dataset generation config: ") + e.what());
    }
    ds.seed = j.at("seed").get<std::uint64_t>();
    for (const json& sj : j.at("scenes")) {
      Scene s;
      s.grid_h = ds.generation.grid_h;
      s.grid_w = ds.generation.grid_w;
      for (const json& pj : sj.at("pairs")) {
        HOIPair p;
        p.human = box_from(pj.at("human"));
        p.object = box_from(pj.at("object"));
        p.object_class = pj.at("object_class").get<int>();
        p.verbs = pj.at("verbs").get<std::vector<int>>();
        if (p.object_class < 0 || p.object_class >= ds.generation.num_classes) throw FormatError("object_class out of range");
        if (p.verbs.size() != static_cast<std::size_t>(ds.generation.num_verbs)) throw FormatError("verb vector has the wrong length");
        s.pairs.push_back(std::move(p));
      }
      ds.scenes.push_back(std::move(s));
    }
    return ds;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed dataset: ") + e.what());
  }
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << to_json(ds).dump(1) << '\n';
  if (!out) throw FormatError("write to '" + path + "' failed");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset '" + path + "'");
  try {
    return dataset_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError("dataset '" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace hqm
