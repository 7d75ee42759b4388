#include "lkge/experiment.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>

#include "json_util.hpp"
#include "lkge/error.hpp"

namespace lkge {

namespace fs = std::filesystem;
using json = nlohmann::json;
using detail::read_key;
using detail::reject_unknown;

GrowthDataset build_from_recipe(const DatasetRecipe& recipe) {
  std::vector<Fact> facts;
  KgVocabulary vocab;
  if (recipe.synthetic) {
    auto kg = generate_synthetic(*recipe.synthetic);
    facts = std::move(kg.facts);
    vocab = std::move(kg.vocab);
  } else if (!recipe.triples.empty()) {
    facts = load_triples(recipe.triples, vocab);
  } else {
    throw ConfigError("dataset recipe needs 'triples' or 'synthetic'");
  }
  if (recipe.subsample_entities > 0) {
    Rng rng(recipe.subsample_seed);
    auto sub = subsample_entities(facts, vocab, recipe.subsample_entities, rng);
    facts = std::move(sub.facts);
    vocab = std::move(sub.vocab);
  }
  spdlog::info("base KG: {} facts, {} entities, {} relations", facts.size(),
               vocab.entities.size(), vocab.relations.size());
  return build_dataset(facts, vocab, recipe.builder);
}

BuilderConfig builder_config_from_json(const json& j, BuilderConfig c) {
  reject_unknown(j,
                 {"variant", "num_snapshots", "seed", "split_ratio",
                  "seed_facts", "hybrid_stop_numerator", "closure_on_quota",
                  "relation_closure", "hybrid_max_attempts"},
                 "builder.");
  if (auto it = j.find("variant"); it != j.end()) {
    c.variant = parse_growth_variant(it->get<std::string>());
  }
  read_key(j, "num_snapshots", c.num_snapshots);
  read_key(j, "seed", c.seed);
  read_key(j, "split_ratio", c.split_ratio);
  read_key(j, "seed_facts", c.seed_facts);
  read_key(j, "hybrid_stop_numerator", c.hybrid_stop_numerator);
  read_key(j, "relation_closure", c.relation_closure);
  read_key(j, "hybrid_max_attempts", c.hybrid_max_attempts);
  if (auto it = j.find("closure_on_quota"); it != j.end() && !it->is_null()) {
    c.closure_on_quota = it->get<bool>();
  }
  c.validate();
  return c;
}

json to_json(const BuilderConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"num_snapshots", c.num_snapshots},
          {"seed", c.seed},
          {"split_ratio", c.split_ratio},
          {"seed_facts", c.seed_facts},
          {"hybrid_stop_numerator", c.hybrid_stop_numerator},
          {"closure_on_quota", c.closure()},
          {"relation_closure", c.relation_closure},
          {"hybrid_max_attempts", c.hybrid_max_attempts}};
}

SyntheticConfig synthetic_config_from_json(const json& j, SyntheticConfig c) {
  reject_unknown(j,
                 {"num_entities", "num_relations", "num_types", "latent_dim",
                  "num_facts", "max_objects", "noise", "zipf_exponent",
                  "relation_zipf_exponent", "attribute_fraction",
                  "max_attribute_values", "seed"},
                 "synthetic.");
  read_key(j, "num_entities", c.num_entities);
  read_key(j, "num_relations", c.num_relations);
  read_key(j, "num_types", c.num_types);
  read_key(j, "latent_dim", c.latent_dim);
  read_key(j, "num_facts", c.num_facts);
  read_key(j, "max_objects", c.max_objects);
  read_key(j, "noise", c.noise);
  read_key(j, "zipf_exponent", c.zipf_exponent);
  read_key(j, "relation_zipf_exponent", c.relation_zipf_exponent);
  read_key(j, "attribute_fraction", c.attribute_fraction);
  read_key(j, "max_attribute_values", c.max_attribute_values);
  read_key(j, "seed", c.seed);
  c.validate();
  return c;
}

json to_json(const SyntheticConfig& c) {
  return {{"num_entities", c.num_entities},
          {"num_relations", c.num_relations},
          {"num_types", c.num_types},
          {"latent_dim", c.latent_dim},
          {"num_facts", c.num_facts},
          {"max_objects", c.max_objects},
          {"noise", c.noise},
          {"zipf_exponent", c.zipf_exponent},
          {"relation_zipf_exponent", c.relation_zipf_exponent},
          {"attribute_fraction", c.attribute_fraction},
          {"max_attribute_values", c.max_attribute_values},
          {"seed", c.seed}};
}

DatasetRecipe dataset_recipe_from_json(const json& j) {
  reject_unknown(j,
                 {"triples", "synthetic", "subsample_entities",
                  "subsample_seed", "builder"},
                 "dataset.");
  DatasetRecipe r;
  read_key(j, "triples", r.triples);
  if (auto it = j.find("synthetic"); it != j.end()) {
    r.synthetic = synthetic_config_from_json(*it);
  }
  if (r.triples.empty() == !r.synthetic.has_value()) {
    throw ConfigError("dataset recipe needs exactly one of 'triples' or 'synthetic'");
  }
  read_key(j, "subsample_entities", r.subsample_entities);
  read_key(j, "subsample_seed", r.subsample_seed);
  if (auto it = j.find("builder"); it != j.end()) {
    r.builder = builder_config_from_json(*it);
  }
  return r;
}

json to_json(const DatasetRecipe& r) {
  json j = {{"subsample_entities", r.subsample_entities},
            {"subsample_seed", r.subsample_seed},
            {"builder", to_json(r.builder)}};
  if (r.synthetic) {
    j["synthetic"] = to_json(*r.synthetic);
  } else {
    j["triples"] = r.triples;
  }
  return j;
}

void ExperimentManifest::validate() const {
  if (dataset_dir.empty() == !recipe.has_value()) {
    throw ConfigError("manifest needs exactly one of a dataset directory or a recipe");
  }
  if (runs.empty()) throw ConfigError("manifest lists no runs");
  if (seeds.empty()) throw ConfigError("manifest lists no seeds");
  for (std::size_t a = 0; a < seeds.size(); ++a) {
    for (std::size_t b = a + 1; b < seeds.size(); ++b) {
      if (seeds[a] == seeds[b]) {
        throw ConfigError(fmt::format("seed {} is listed twice", seeds[a]));
      }
    }
  }
  for (std::size_t a = 0; a < runs.size(); ++a) {
    if (runs[a].name.empty() || runs[a].name.find('/') != std::string::npos) {
      throw ConfigError(fmt::format("invalid run name '{}'", runs[a].name));
    }
    for (std::size_t b = a + 1; b < runs.size(); ++b) {
      if (runs[a].name == runs[b].name) {
        throw ConfigError(fmt::format("run name '{}' is used twice", runs[a].name));
      }
    }
  }
  if (output_root.empty()) throw ConfigError("manifest needs an output_root");
}

ExperimentManifest manifest_from_json(const json& j, const fs::path& base_dir) {
  reject_unknown(j, {"format_version", "dataset", "runs", "seeds", "output_root"},
                 "");
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return (path.is_absolute() ? path : base_dir / path).lexically_normal().string();
  };

  ExperimentManifest m;
  const auto ds = j.find("dataset");
  if (ds == j.end()) throw ConfigError("manifest has no 'dataset'");
  if (ds->is_string()) {
    m.dataset_dir = resolve(ds->get<std::string>());
  } else {
    m.recipe = dataset_recipe_from_json(*ds);
    if (!m.recipe->triples.empty()) m.recipe->triples = resolve(m.recipe->triples);
  }

  const auto runs = j.find("runs");
  if (runs == j.end() || !runs->is_array()) {
    throw ConfigError("manifest needs a 'runs' array");
  }
  for (const auto& r : *runs) {
    reject_unknown(r, {"name", "strategy", "config"}, "runs[].");
    ExperimentRun run;
    json cfg = r.value("config", json::object());
    if (auto s = r.find("strategy"); s != r.end()) cfg["strategy"] = *s;
    run.config = run_config_from_json(cfg);
    run.name = r.value("name", std::string(to_string(run.config.strategy.kind)));
    m.runs.push_back(std::move(run));
  }
  read_key(j, "seeds", m.seeds);
  std::string out;
  read_key(j, "output_root", out);
  if (!out.empty()) m.output_root = resolve(out);
  m.validate();
  return m;
}

ExperimentManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read manifest {}", path.string()));
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return manifest_from_json(j, path.parent_path());
}

Stat summarize(std::span<const double> values) {
  Stat s;
  s.n = values.size();
  if (values.empty()) {
    s.mean = s.stddev = std::nan("");
    return s;
  }
  double sum = 0.0;
  for (auto v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double sq = 0.0;
    for (auto v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(s.n - 1));
  }
  return s;
}

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()), 0);
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
  if (!out) throw IoError(fmt::format("error writing {}", path.string()));
}

json shared_config(json cfg) {
  cfg.erase("seed");
  cfg.erase("output_dir");
  return cfg;
}

}  // namespace

SeedAggregate aggregate_seeds(std::span<const fs::path> run_dirs) {
  if (run_dirs.empty()) throw ConfigError("no runs to aggregate");
  SeedAggregate agg;
  std::map<std::string, std::vector<double>> values;
  for (const auto& dir : run_dirs) {
    const auto run = read_json_file(dir / "run.json");
    const auto cfg = shared_config(run.at("config"));
    if (agg.seeds.empty()) {
      agg.config = cfg;
    } else if (cfg != agg.config) {
      const auto diff = json::diff(agg.config, cfg);
      throw ConfigError(fmt::format(
          "refusing to aggregate {}: its config differs from {} ({})",
          dir.string(), run_dirs.front().string(), diff.dump()));
    }
    agg.seeds.push_back(run.at("config").at("seed").get<std::uint64_t>());
    for (const char* k : {"mrr", "hits1", "hits3", "hits10"}) {
      const auto& v = run.at("union").at(k);
      if (!v.is_null()) values[std::string("union_") + k].push_back(v.get<double>());
    }
    for (const char* k : {"fwt", "bwt"}) {
      if (!run.at(k).is_null()) values[k].push_back(run.at(k).get<double>());
    }
    const auto& cum = run.at("cumulative_train_seconds");
    if (!cum.empty()) values["train_seconds"].push_back(cum.back().get<double>());
  }
  for (const auto& [k, v] : values) agg.metrics[k] = summarize(v);
  return agg;
}

json to_json(const SeedAggregate& agg) {
  json metrics = json::object();
  for (const auto& [k, s] : agg.metrics) {
    metrics[k] = {{"mean", s.mean}, {"stddev", s.stddev}, {"n", s.n}};
  }
  return {{"config", agg.config},
          {"seeds", agg.seeds},
          {"num_seeds", agg.seeds.size()},
          {"metrics", metrics}};
}

json run_experiment(const ExperimentManifest& m, const ExperimentOptions& opt) {
  m.validate();
  const fs::path root(m.output_root);
  fs::create_directories(root);

  fs::path dataset_dir;
  if (m.recipe) {
    dataset_dir = root / "dataset";
    if (opt.force || !fs::exists(dataset_dir / "meta.json")) {
      spdlog::info("building dataset into {}", dataset_dir.string());
      save_dataset(build_from_recipe(*m.recipe), dataset_dir);
      write_json_file(dataset_dir / "recipe.json", to_json(*m.recipe));
    }
  } else {
    dataset_dir = m.dataset_dir;
  }
  const auto ds = load_dataset(dataset_dir);

  json runs = json::object();
  for (const auto& run : m.runs) {
    std::vector<fs::path> dirs;
    for (auto seed : m.seeds) {
      auto cfg = run.config;
      cfg.seed = seed;
      cfg.dataset_path = dataset_dir.string();
      const auto dir = root / run.name / fmt::format("seed{}", seed);
      cfg.output_dir = dir.string();
      dirs.push_back(dir);
      if (!opt.force && fs::exists(dir / "run.json")) {
        spdlog::info("{}: run.json exists, reusing", dir.string());
        continue;
      }
      spdlog::info("training {} seed {}", run.name, seed);
      run_lifelong(ds, cfg);
    }
    runs[run.name] = to_json(aggregate_seeds(dirs));
  }
  json means = {{"format_version", kFormatVersion},
                {"dataset",
                 {{"path", dataset_dir.string()},
                  {"variant", ds.build.variant},
                  {"num_snapshots", ds.size()}}},
                {"runs", runs}};
  write_json_file(root / "means.json", means);
  return means;
}

}  // namespace lkge
