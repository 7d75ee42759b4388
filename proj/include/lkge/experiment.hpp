#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lkge/growth.hpp"
#include "lkge/runner.hpp"
#include "lkge/synthetic.hpp"

namespace lkge {

// How to obtain a base KG and turn it into a growth dataset.
struct DatasetRecipe {
  std::string triples;                      // tab-separated input, or
  std::optional<SyntheticConfig> synthetic;  // a generated KG
  std::size_t subsample_entities = 0;        // 0 keeps the whole KG
  std::uint64_t subsample_seed = 0;
  BuilderConfig builder;
};

GrowthDataset build_from_recipe(const DatasetRecipe& recipe);

// JSON (de)serialization. Unknown keys raise ConfigError.
BuilderConfig builder_config_from_json(const nlohmann::json& j,
                                       BuilderConfig base = {});
nlohmann::json to_json(const BuilderConfig& cfg);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j,
                                           SyntheticConfig base = {});
nlohmann::json to_json(const SyntheticConfig& cfg);
DatasetRecipe dataset_recipe_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetRecipe& recipe);

struct ExperimentRun {
  std::string name;
  RunConfig config;
};

struct ExperimentManifest {
  // Exactly one of a prebuilt dataset directory or a recipe.
  std::string dataset_dir;
  std::optional<DatasetRecipe> recipe;
  std::vector<ExperimentRun> runs;
  std::vector<std::uint64_t> seeds;
  std::string output_root;

  void validate() const;
};

// Relative paths in the manifest resolve against `base_dir`.
ExperimentManifest manifest_from_json(const nlohmann::json& j,
                                      const std::filesystem::path& base_dir);
ExperimentManifest load_manifest(const std::filesystem::path& path);

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;  // sample stddev; 0 for a single seed
  std::size_t n = 0;
};

Stat summarize(std::span<const double> values);

struct SeedAggregate {
  nlohmann::json config;  // shared config, seed removed
  std::vector<std::uint64_t> seeds;
  std::map<std::string, Stat> metrics;
};

// Reads run.json from every directory. Throws ConfigError when the runs
// differ in anything but the seed and output directory.
SeedAggregate aggregate_seeds(std::span<const std::filesystem::path> run_dirs);
nlohmann::json to_json(const SeedAggregate& agg);

struct ExperimentOptions {
  bool force = false;
};

// Builds or loads the dataset, trains every (run, seed) pair into
// <output_root>/<run>/seed<k>/ and writes <output_root>/means.json. Runs
// whose run.json already exists are reused unless `force`.
nlohmann::json run_experiment(const ExperimentManifest& m,
                              const ExperimentOptions& opt = {});

}  // namespace lkge
