#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "hqm/geometry.hpp"
#include "hqm/mining.hpp"
#include "hqm/model.hpp"
#include "hqm/scenes.hpp"
#include "hqm/weights.hpp"

namespace hqm {

struct DataConfig {
  GenerationConfig generation;
  std::size_t train_scenes = 512;
  std::size_t val_scenes = 128;
  /// Benchmark splits are fixed; the run seed only drives initialization,
  /// shuffling and hard-query draws.
  std::uint64_t train_seed = 1000;
  std::uint64_t val_seed = 5000000;
};

struct OptimizerConfig {
  double learning_rate = 3e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Learning rate is multiplied by decay_factor from epoch
  /// round(decay_fraction · epochs) on.
  double decay_fraction = 0.8;
  double decay_factor = 0.1;
  std::size_t epochs = 40;
  std::size_t batch_size = 8;

  std::size_t decay_epoch() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  ModelConfig model;
  HqmStrategy strategy;
  AmmConfig amm;
  ShiftConfig shift;
  LossWeights weights;
  OptimizerConfig optimizer;
  std::string out_dir = "runs/default";
  /// Seeds used by `ablate`.
  std::vector<std::uint64_t> ablation_seeds = {0, 1, 2, 3, 4};
  /// Validation mAP that counts as "converged" for epochs-to-threshold.
  double map_threshold = 0.5;

  /// Cross-checks every sub-config; throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

nlohmann::json to_json(const GenerationConfig& cfg);
GenerationConfig generation_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Dataset& ds);
Dataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace hqm
