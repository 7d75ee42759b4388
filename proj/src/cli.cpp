#include "lkge/cli.hpp"

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

#include "lkge/checkpoint.hpp"
#include "lkge/error.hpp"
#include "lkge/experiment.hpp"
#include "lkge/growth.hpp"
#include "lkge/kg.hpp"
#include "lkge/runner.hpp"
#include "lkge/synthetic.hpp"

namespace lkge {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

void configure_logging() {
  auto logger = spdlog::get("lkge");
  if (!logger) {
    logger = spdlog::stderr_color_mt("lkge");
    spdlog::set_default_logger(logger);
  }
  auto level = spdlog::level::info;
  if (const char* env = std::getenv("LKGE_LOG_LEVEL"); env && *env) {
    level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"; only accept it when asked for.
    if (level == spdlog::level::off && std::string_view(env) != "off") {
      level = spdlog::level::info;
      spdlog::warn("LKGE_LOG_LEVEL='{}' not recognized, using info", env);
    }
  }
  spdlog::set_level(level);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void emit(const json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot write {}", out));
  f << j.dump(2) << '\n';
}

// True when `path` exists and the command should leave it alone.
bool keep_existing(const fs::path& path, bool force) {
  if (force || !fs::exists(path)) return false;
  spdlog::warn("{} exists; leaving it unchanged (pass --force to overwrite)",
               path.string());
  return true;
}

struct BuildArgs {
  std::string input, out, config, variant;
  std::optional<int> snapshots, seed_facts, stop_numerator;
  std::optional<std::uint64_t> seed;
  std::optional<bool> closure, relation_closure;
  bool force = false;
};

void cmd_build_dataset(const BuildArgs& a) {
  const fs::path out(a.out);
  if (keep_existing(out / "meta.json", a.force)) return;
  BuilderConfig cfg;
  if (!a.config.empty()) cfg = builder_config_from_json(read_json(a.config));
  if (!a.variant.empty()) cfg.variant = parse_growth_variant(a.variant);
  if (a.snapshots) cfg.num_snapshots = *a.snapshots;
  if (a.seed) cfg.seed = *a.seed;
  if (a.seed_facts) cfg.seed_facts = *a.seed_facts;
  if (a.stop_numerator) cfg.hybrid_stop_numerator = *a.stop_numerator;
  if (a.closure) cfg.closure_on_quota = *a.closure;
  if (a.relation_closure) cfg.relation_closure = *a.relation_closure;
  cfg.validate();

  KgVocabulary vocab;
  LoadStats stats;
  const auto facts = load_triples(a.input, vocab, &stats);
  spdlog::info("{}: {} facts ({} duplicates dropped), {} entities, {} relations",
               a.input, facts.size(), stats.duplicates, vocab.entities.size(),
               vocab.relations.size());
  const auto ds = build_dataset(facts, vocab, cfg);
  save_dataset(ds, out);
  for (const auto& s : ds.snapshots) {
    spdlog::info("snapshot {}: |T_delta|={} |E|={} |R|={} train/valid/test={}/{}/{}",
                 s.index, s.delta_size(), s.num_entities, s.num_relations,
                 s.train.size(), s.valid.size(), s.test.size());
  }
}

struct TrainArgs {
  std::string dataset, strategy, config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> max_epochs;
  bool force = false;
};

void cmd_train(const TrainArgs& a) {
  const fs::path out(a.out);
  if (keep_existing(out / "run.json", a.force)) return;
  RunConfig cfg;
  if (!a.config.empty()) cfg = run_config_from_json(read_json(a.config));
  if (!a.strategy.empty()) cfg.strategy.kind = parse_strategy(a.strategy);
  if (a.seed) cfg.seed = *a.seed;
  if (a.max_epochs) cfg.max_epochs = *a.max_epochs;
  cfg.dataset_path = a.dataset;
  cfg.output_dir = a.out;
  cfg.validate();
  const auto ds = load_dataset(a.dataset);
  const auto record = run_lifelong(ds, cfg);
  spdlog::info("union MRR {:.4f}, wrote {}", record.union_metrics.mrr,
               (out / "run.json").string());
}

struct EvalArgs {
  std::string checkpoint, dataset, run, out, norm = "l2";
  std::optional<int> snapshot;
  bool union_eval = false;
  bool raw = false;
  bool force = false;
};

Norm parse_norm(const std::string& s) {
  if (s == "l2") return Norm::l2;
  if (s == "l1") return Norm::l1;
  throw ConfigError(fmt::format("norm must be l1 or l2, got '{}'", s));
}

json eval_run_dir(const EvalArgs& a, const GrowthDataset& ds,
                  const KnownFacts* filter) {
  const fs::path dir(a.run);
  auto cfg = run_config_from_json(read_json(dir / "run.json").at("config"));
  cfg.filtered = filter != nullptr;
  const int n = static_cast<int>(ds.size());
  TransferMatrix h(n);
  std::optional<Checkpoint> last;
  for (int i = 1; i <= n; ++i) {
    const auto ckpt = load_checkpoint(dir / fmt::format("snapshot{}.ckpt", i));
    const auto row = evaluate_history(ckpt, ds, i, filter, cfg.norm);
    for (int j = 1; j <= i; ++j) h.set(i, j, row[static_cast<std::size_t>(j - 1)]);
    if (i < n) h.set(i, i + 1, evaluate_future(ckpt, ds, i, cfg, filter));
    last = ckpt;
  }
  RunRecord r;
  r.config = cfg;
  r.h = h;
  r.transfer = fwt_bwt(h);
  r.union_metrics = union_eval(last->to_state(), ds, {cfg.norm, filter});
  auto j = to_json(r);
  j.erase("snapshots");
  j.erase("cumulative_train_seconds");
  j["filtered"] = filter != nullptr;
  return j;
}

void cmd_eval(const EvalArgs& a) {
  if (!a.out.empty() && keep_existing(a.out, a.force)) return;
  const auto ds = load_dataset(a.dataset);
  std::optional<KnownFacts> known;
  if (!a.raw) known.emplace(ds);
  const KnownFacts* filter = known ? &*known : nullptr;

  if (!a.run.empty()) {
    emit(eval_run_dir(a, ds, filter), a.out);
    return;
  }
  if (a.checkpoint.empty()) {
    throw ConfigError("eval needs --checkpoint or --run");
  }
  const auto ckpt = load_checkpoint(a.checkpoint);
  const auto st = ckpt.to_state();
  const auto norm = parse_norm(a.norm);
  json j = {{"format_version", kFormatVersion},
            {"checkpoint", a.checkpoint},
            {"filtered", !a.raw}};
  if (a.union_eval) {
    j["union"] = metrics_to_json(union_eval(st, ds, {norm, filter}, ckpt.snapshot));
    j["up_to"] = ckpt.snapshot;
  } else {
    const int i = a.snapshot.value_or(ckpt.snapshot);
    const auto& snap = ds.snapshot(i);
    if (snap.num_entities > st.num_entities() ||
        snap.num_relations > st.num_relations()) {
      throw BoundsError(fmt::format(
          "checkpoint of snapshot {} has no embeddings for snapshot {}'s "
          "vocabulary; evaluate the run directory with --run instead",
          ckpt.snapshot, i));
    }
    j["snapshot"] = i;
    j["metrics"] = metrics_to_json(
        link_prediction(st, snap.test, snap.num_entities, i, {norm, filter}));
  }
  emit(j, a.out);
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string layout = "accuracy";
  std::string out;
  bool stddev = false;
  bool force = false;
};

void cmd_report(const ReportArgs& a) {
  if (!a.out.empty() && keep_existing(a.out, a.force)) return;
  std::vector<std::string> metrics;
  if (a.layout == "accuracy") {
    metrics = {"union_mrr", "union_hits1", "union_hits3", "union_hits10"};
  } else if (a.layout == "transfer") {
    metrics = {"fwt", "bwt"};
  } else if (a.layout == "time") {
    metrics = {"train_seconds"};
  } else {
    throw ConfigError(fmt::format("unknown layout '{}' (accuracy|transfer|time)", a.layout));
  }

  struct Column {
    std::string dataset;
    json runs;
  };
  std::vector<Column> columns;
  std::vector<std::string> models;
  for (const auto& in : a.inputs) {
    fs::path p(in);
    if (fs::is_directory(p)) p /= "means.json";
    const auto means = read_json(p);
    Column c{means.at("dataset").at("variant").get<std::string>(), means.at("runs")};
    for (const auto& [name, v] : c.runs.items()) {
      if (std::find(models.begin(), models.end(), name) == models.end()) {
        models.push_back(name);
      }
    }
    columns.push_back(std::move(c));
  }

  std::string csv = "model";
  for (const auto& c : columns) {
    for (const auto& m : metrics) {
      csv += fmt::format(",{}_{}", c.dataset, m);
      if (a.stddev) csv += fmt::format(",{}_{}_sd", c.dataset, m);
    }
  }
  csv += '\n';
  for (const auto& model : models) {
    csv += model;
    for (const auto& c : columns) {
      for (const auto& m : metrics) {
        const json* cell = nullptr;
        if (c.runs.contains(model) && c.runs[model].at("metrics").contains(m)) {
          cell = &c.runs[model]["metrics"][m];
        }
        csv += cell ? fmt::format(",{:.4f}", cell->at("mean").get<double>()) : ",";
        if (a.stddev) {
          csv += cell ? fmt::format(",{:.4f}", cell->at("stddev").get<double>()) : ",";
        }
      }
    }
    csv += '\n';
  }
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    std::ofstream f(a.out, std::ios::trunc);
    if (!f) throw IoError(fmt::format("cannot write {}", a.out));
    f << csv;
  }
}

struct SynthArgs {
  std::string out, config;
  std::optional<std::uint32_t> entities, relations, types;
  std::optional<std::size_t> facts, latent_dim;
  std::optional<double> attribute_fraction, noise;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void cmd_synth(const SynthArgs& a) {
  if (keep_existing(a.out, a.force)) return;
  SyntheticConfig cfg;
  if (!a.config.empty()) cfg = synthetic_config_from_json(read_json(a.config));
  if (a.entities) cfg.num_entities = *a.entities;
  if (a.relations) cfg.num_relations = *a.relations;
  if (a.types) cfg.num_types = *a.types;
  if (a.facts) cfg.num_facts = *a.facts;
  if (a.latent_dim) cfg.latent_dim = *a.latent_dim;
  if (a.attribute_fraction) cfg.attribute_fraction = *a.attribute_fraction;
  if (a.noise) cfg.noise = *a.noise;
  if (a.seed) cfg.seed = *a.seed;
  const auto kg = generate_synthetic(cfg);
  write_triples(a.out, kg.facts, kg.vocab);
  spdlog::info("wrote {} facts over {} entities and {} relations to {}",
               kg.facts.size(), kg.vocab.entities.size(),
               kg.vocab.relations.size(), a.out);
}

struct SubsampleArgs {
  std::string input, out;
  std::size_t entities = 3000;
  std::uint64_t seed = 0;
  bool force = false;
};

void cmd_subsample(const SubsampleArgs& a) {
  if (keep_existing(a.out, a.force)) return;
  KgVocabulary vocab;
  const auto facts = load_triples(a.input, vocab);
  Rng rng(a.seed);
  const auto sub = subsample_entities(facts, vocab, a.entities, rng);
  write_triples(a.out, sub.facts, sub.vocab);
  spdlog::info("kept {} facts over {} entities", sub.facts.size(),
               sub.vocab.entities.size());
}

struct ExperimentArgs {
  std::string manifest;
  bool force = false;
};

void cmd_experiment(const ExperimentArgs& a) {
  const auto m = load_manifest(a.manifest);
  const auto means = run_experiment(m, {a.force});
  spdlog::info("wrote {}", (fs::path(m.output_root) / "means.json").string());
  for (const auto& [name, agg] : means.at("runs").items()) {
    const auto& mrr = agg.at("metrics").at("union_mrr");
    spdlog::info("{}: union MRR {:.4f} +/- {:.4f} over {} seeds", name,
                 mrr.at("mean").get<double>(), mrr.at("stddev").get<double>(),
                 agg.at("num_seeds").get<std::size_t>());
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  configure_logging();
  CLI::App app{"Lifelong knowledge graph embedding benchmark.\n"
               "Log verbosity: LKGE_LOG_LEVEL=trace|debug|info|warn|error|off",
               "lkge-bench"};
  app.require_subcommand(1);
  std::function<void()> action;

  BuildArgs build;
  auto* b = app.add_subcommand("build-dataset", "Build a growing-KG snapshot sequence");
  b->add_option("--input", build.input, "Tab-separated triples")->required();
  b->add_option("--out", build.out, "Output dataset directory")->required();
  b->add_option("--variant", build.variant, "entity|relation|fact|hybrid (default fact)");
  b->add_option("--snapshots", build.snapshots, "Number of snapshots (default 5)");
  b->add_option("--seed", build.seed, "Builder RNG seed (default 0)");
  b->add_option("--seed-facts", build.seed_facts, "Seed facts (default 10)");
  b->add_option("--hybrid-stop", build.stop_numerator,
                "Hybrid stop numerator (default 5)");
  b->add_option("--closure-on-quota", build.closure,
                "Entity closure at each quota (default: entity variant only)");
  b->add_option("--relation-closure", build.relation_closure,
                "Relation variant: add facts reachable via seen relations (default false)");
  b->add_option("--config", build.config, "Builder config JSON; flags override it");
  b->add_flag("--force", build.force, "Overwrite an existing dataset");
  b->callback([&] { action = [&] { cmd_build_dataset(build); }; });

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train over all snapshots of a dataset");
  t->add_option("--dataset", train.dataset, "Dataset directory")->required();
  t->add_option("--out", train.out, "Run output directory")->required();
  t->add_option("--strategy", train.strategy,
                "snapshot_only|retrain|finetune|lkge (default lkge)");
  t->add_option("--config", train.config,
                "Run config JSON (defaults: lr 0.001, batch 1024, dim 100, "
                "patience 3, max_epochs 200, margin 1, alpha 0.1, beta 0.1)");
  t->add_option("--seed", train.seed, "Run seed (default 0)");
  t->add_option("--max-epochs", train.max_epochs, "Epoch cap per snapshot");
  t->add_flag("--force", train.force, "Overwrite an existing run");
  t->callback([&] { action = [&] { cmd_train(train); }; });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Link prediction from checkpoints");
  e->add_option("--dataset", ev.dataset, "Dataset directory")->required();
  auto* ck = e->add_option("--checkpoint", ev.checkpoint, "snapshot<i>.ckpt file");
  auto* rn = e->add_option("--run", ev.run, "Run directory: recompute the h-matrix");
  ck->excludes(rn);
  auto* sn = e->add_option("--snapshot", ev.snapshot,
                           "Test set to rank (default: the checkpoint's)");
  auto* un = e->add_flag("--union", ev.union_eval, "Union of test sets 1..i");
  sn->excludes(un);
  e->add_flag("--raw", ev.raw, "Disable filtering of known facts");
  e->add_option("--norm", ev.norm, "l1|l2 (default l2)");
  e->add_option("--out", ev.out, "Write JSON here instead of stdout");
  e->add_flag("--force", ev.force, "Overwrite --out");
  e->callback([&] { action = [&] { cmd_eval(ev); }; });

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "CSV tables from experiment means.json");
  r->add_option("--input", rep.inputs, "means.json files or experiment roots")
      ->required();
  r->add_option("--layout", rep.layout, "accuracy|transfer|time (default accuracy)");
  r->add_flag("--stddev", rep.stddev, "Add stddev columns");
  r->add_option("--out", rep.out, "Write CSV here instead of stdout");
  r->add_flag("--force", rep.force, "Overwrite --out");
  r->callback([&] { action = [&] { cmd_report(rep); }; });

  ExperimentArgs ex;
  auto* x = app.add_subcommand("experiment", "Multi-seed runs from a manifest");
  x->add_option("--manifest", ex.manifest, "Manifest JSON")->required();
  x->add_flag("--force", ex.force, "Rebuild the dataset and rerun every run");
  x->callback([&] { action = [&] { cmd_experiment(ex); }; });

  SynthArgs syn;
  auto* s = app.add_subcommand("synth-kg", "Generate a synthetic KG");
  s->add_option("--out", syn.out, "Output triples file")->required();
  s->add_option("--config", syn.config, "Generator config JSON; flags override it");
  s->add_option("--entities", syn.entities, "Entities (default 6000)");
  s->add_option("--relations", syn.relations, "Relations (default 60)");
  s->add_option("--types", syn.types, "Entity types (default 6)");
  s->add_option("--facts", syn.facts, "Target fact count (default 40000)");
  s->add_option("--latent-dim", syn.latent_dim, "Latent dimension (default 16)");
  s->add_option("--attribute-fraction", syn.attribute_fraction,
                "Share of N-to-1 attribute relations (default 0)");
  s->add_option("--noise", syn.noise, "Random-object fraction (default 0.03)");
  s->add_option("--seed", syn.seed, "Generator seed (default 0)");
  s->add_flag("--force", syn.force, "Overwrite --out");
  s->callback([&] { action = [&] { cmd_synth(syn); }; });

  SubsampleArgs sub;
  auto* ss = app.add_subcommand("subsample", "Entity subsample keeping induced facts");
  ss->add_option("--input", sub.input, "Tab-separated triples")->required();
  ss->add_option("--out", sub.out, "Output triples file")->required();
  ss->add_option("--entities", sub.entities, "Target entity count (default 3000)");
  ss->add_option("--seed", sub.seed, "Sampling seed (default 0)");
  ss->add_flag("--force", sub.force, "Overwrite --out");
  ss->callback([&] { action = [&] { cmd_subsample(sub); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 2;
  }

  try {
    action();
    return 0;
  } catch (const ConfigError& err) {
    spdlog::error("{}", err.what());
    return 2;
  } catch (const std::exception& err) {
    spdlog::error("{}", err.what());
    return 1;
  }
}

}  // namespace lkge
