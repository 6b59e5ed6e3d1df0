// Command-line front end: gen-data, train, eval, ablate, dump-attn, grad-check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "hqm/config.hpp"
#include "hqm/errors.hpp"
#include "hqm/harness.hpp"

namespace fs = std::filesystem;
using namespace hqm;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig resolve(const Globals& g, RunConfig cfg) {
  if (!g.config_path.empty()) cfg = load_run_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  cfg.validate();
  return cfg;
}

std::vector<HqmStrategy> parse_list(const std::string& text) {
  std::vector<HqmStrategy> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(parse_strategy(item));
  if (out.empty()) throw ConfigError("no strategies given");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f << text;
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j;
  nlohmann::json ap = nlohmann::json::array();
  for (double x : r.ap_per_verb) ap.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
  j["ap_per_verb"] = ap;
  j["gt_per_verb"] = r.gt_per_verb;
  j["map"] = r.map;
  j["true_positives"] = r.true_positives;
  j["false_positives"] = r.false_positives;
  return j.dump(2) + "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale HOI set-prediction detector with hard-positive query mining"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the run seed");
  app.add_option("--out", g.out, "Output directory");

  std::string strategy;
  std::size_t epochs = 0;
  bool verbose = false;

  auto* gen = app.add_subcommand("gen-data", "Write train.json and val.json for the configured splits");

  auto* tr = app.add_subcommand("train", "Train one run; writes metrics.csv and checkpoint/");
  tr->add_option("--strategy", strategy, "Override the strategy, e.g. ajl or gbs_only+no_shift");
  tr->add_option("--epochs", epochs, "Override the epoch count");
  tr->add_flag("-v,--verbose", verbose, "Log each epoch to stderr");

  std::string checkpoint, dataset;
  std::size_t scene_index = 0;
  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  ev->add_option("--dataset", dataset, "Dataset JSON (default: the configured validation split)");

  std::string strategies = "baseline,gbs_only,amm_only,ajl";
  auto* ab = app.add_subcommand("ablate", "Train each strategy over the configured seeds; writes ablation.csv");
  ab->add_option("--strategies", strategies, "Comma-separated strategies");
  ab->add_option("--epochs", epochs, "Override the epoch count");
  ab->add_flag("-v,--verbose", verbose, "Log each epoch to stderr");

  auto* dump = app.add_subcommand("dump-attn", "Write one attention CSV per decoder layer and head");
  dump->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  dump->add_option("--dataset", dataset, "Dataset JSON (default: the configured validation split)");
  dump->add_option("--scene", scene_index, "Scene index in the dataset");

  std::string grad_strategies = "baseline,gbs_only,amm_only,cjl,pjl";
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full loss per strategy");
  gc->add_option("--strategies", grad_strategies, "Comma-separated strategies");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve(g, RunConfig{});
      const auto& d = cfg.data;
      fs::create_directories(cfg.out_dir);
      save_dataset(generate_dataset(d.generation, d.train_seed, d.train_scenes), (fs::path(cfg.out_dir) / "train.json").string());
      save_dataset(generate_dataset(d.generation, d.val_seed, d.val_scenes), (fs::path(cfg.out_dir) / "val.json").string());
      std::cout << "wrote " << (fs::path(cfg.out_dir) / "train.json").string() << " and val.json\n";
    } else if (tr->parsed()) {
      RunConfig cfg = resolve(g, RunConfig{});
      if (!strategy.empty()) cfg.strategy = parse_strategy(strategy);
      if (epochs) cfg.optimizer.epochs = epochs;
      cfg.validate();
      const TrainResult r = train(cfg, true, verbose);
      std::cout << "final val_map " << r.metrics.back().val_map << "\nwrote " << cfg.out_dir << "/metrics.csv and " << cfg.out_dir << "/checkpoint\n";
    } else if (ev->parsed()) {
      auto [cfg, params] = load_checkpoint(checkpoint);
      Dataset ds = dataset.empty() ? generate_dataset(cfg.data.generation, cfg.data.val_seed, cfg.data.val_scenes) : load_dataset(dataset);
      const auto& s = ds.generation;
      if (s.num_classes != cfg.model.num_classes || s.num_verbs != cfg.model.num_verbs || s.grid_h != cfg.data.generation.grid_h ||
          s.grid_w != cfg.data.generation.grid_w)
        throw FormatError("dataset does not match the checkpoint's class, verb or grid configuration");
      const std::string text = report_json(evaluate(params, ds.scenes));
      std::cout << text;
      if (!g.out.empty()) write_text(fs::path(g.out) / "eval.json", text);
    } else if (ab->parsed()) {
      RunConfig cfg = resolve(g, RunConfig{});
      if (epochs) cfg.optimizer.epochs = epochs;
      cfg.validate();
      const std::string csv = ablation_csv(ablate(cfg, parse_list(strategies), verbose));
      write_text(fs::path(cfg.out_dir) / "ablation.csv", csv);
      std::cout << csv;
    } else if (dump->parsed()) {
      auto [cfg, params] = load_checkpoint(checkpoint);
      Dataset ds = dataset.empty() ? generate_dataset(cfg.data.generation, cfg.data.val_seed, cfg.data.val_scenes) : load_dataset(dataset);
      if (scene_index >= ds.scenes.size()) throw ConfigError("scene index out of range");
      const std::string out = g.out.empty() ? cfg.out_dir + "/attention" : g.out;
      for (const auto& p : dump_attention(params, ds.scenes[scene_index], out)) std::cout << p << '\n';
    } else if (gc->parsed()) {
      RunConfig cfg = g.config_path.empty() ? tiny_config() : load_run_config(g.config_path);
      if (g.seed) cfg.seed = *g.seed;
      bool ok = true;
      for (const auto& e : grad_check(cfg, parse_list(grad_strategies))) {
        std::printf("%s max_rel_error %.3e (%.1f s)\n", e.strategy.c_str(), e.max_rel_error, e.seconds);
        for (const auto& [group, err] : e.per_group) std::printf("  %-16s %.3e\n", group.c_str(), err);
        ok = ok && e.max_rel_error < 1e-4;
      }
      return ok ? 0 : 3;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
