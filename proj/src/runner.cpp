#include "lkge/runner.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>

#include "lkge/error.hpp"
#include "lkge/rng.hpp"
#include "json_util.hpp"

namespace lkge {

using json = nlohmann::json;

std::string_view to_string(StrategyKind s) {
  switch (s) {
    case StrategyKind::snapshot_only:
      return "snapshot_only";
    case StrategyKind::retrain:
      return "retrain";
    case StrategyKind::finetune:
      return "finetune";
    case StrategyKind::lkge:
      return "lkge";
  }
  return "unknown";
}

StrategyKind parse_strategy(std::string_view name) {
  for (auto s : {StrategyKind::snapshot_only, StrategyKind::retrain,
                 StrategyKind::finetune, StrategyKind::lkge}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError(fmt::format(
      "unknown strategy '{}' (expected snapshot_only|retrain|finetune|lkge)",
      name));
}

void RunConfig::validate() const {
  strategy.lkge.validate();
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (dim < 1) throw ConfigError("dim must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (neg_ratio < 1) throw ConfigError("neg_ratio must be >= 1");
}

json to_json(const RunConfig& c) {
  const auto& l = c.strategy.lkge;
  return {
      {"strategy", to_string(c.strategy.kind)},
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"dim", c.dim},
      {"patience", c.patience},
      {"max_epochs", c.max_epochs},
      {"eval_every", c.eval_every},
      {"seed", c.seed},
      {"neg_ratio", c.neg_ratio},
      {"norm", c.norm == Norm::l2 ? "l2" : "l1"},
      {"normalize_entities", c.normalize_entities},
      {"valid_candidate_cap", c.valid_candidate_cap},
      {"filtered", c.filtered},
      {"evaluate_forward", c.evaluate_forward},
      {"margin", l.margin},
      {"lkge",
       {{"alpha", l.alpha},
        {"beta", l.beta},
        {"use_finetune", l.use_finetune},
        {"use_autoencoder", l.use_autoencoder},
        {"use_transfer", l.use_transfer},
        {"use_regularization", l.use_regularization},
        {"subject_only_reconstruction", l.subject_only_reconstruction},
        {"detach_reconstruction", l.detach_reconstruction},
        {"loss_scope", l.loss_scope == LossScope::full ? "full" : "batch"}}},
  };
}

using detail::read_key;
using detail::reject_unknown;

RunConfig run_config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"strategy", "learning_rate", "batch_size", "dim", "patience",
                  "max_epochs", "eval_every", "seed", "neg_ratio", "norm",
                  "normalize_entities", "valid_candidate_cap", "filtered",
                  "evaluate_forward", "margin", "lkge", "dataset_path",
                  "output_dir", "format_version"},
                 "");
  if (auto it = j.find("strategy"); it != j.end()) {
    c.strategy.kind = parse_strategy(it->get<std::string>());
  }
  read_key(j, "learning_rate", c.learning_rate);
  read_key(j, "batch_size", c.batch_size);
  read_key(j, "dim", c.dim);
  read_key(j, "patience", c.patience);
  read_key(j, "max_epochs", c.max_epochs);
  read_key(j, "eval_every", c.eval_every);
  read_key(j, "seed", c.seed);
  read_key(j, "neg_ratio", c.neg_ratio);
  if (auto it = j.find("norm"); it != j.end()) {
    const auto n = it->get<std::string>();
    if (n == "l2") {
      c.norm = Norm::l2;
    } else if (n == "l1") {
      c.norm = Norm::l1;
    } else {
      throw ConfigError(fmt::format("norm must be l1 or l2, got '{}'", n));
    }
  }
  read_key(j, "normalize_entities", c.normalize_entities);
  read_key(j, "valid_candidate_cap", c.valid_candidate_cap);
  read_key(j, "filtered", c.filtered);
  read_key(j, "evaluate_forward", c.evaluate_forward);
  read_key(j, "margin", c.strategy.lkge.margin);
  read_key(j, "dataset_path", c.dataset_path);
  read_key(j, "output_dir", c.output_dir);
  if (auto it = j.find("lkge"); it != j.end()) {
    const auto& l = *it;
    reject_unknown(l,
                   {"alpha", "beta", "margin", "use_finetune",
                    "use_autoencoder", "use_transfer", "use_regularization",
                    "subject_only_reconstruction", "detach_reconstruction",
                    "loss_scope"},
                   "lkge.");
    auto& k = c.strategy.lkge;
    read_key(l, "alpha", k.alpha);
    read_key(l, "beta", k.beta);
    read_key(l, "margin", k.margin);
    read_key(l, "use_finetune", k.use_finetune);
    read_key(l, "use_autoencoder", k.use_autoencoder);
    read_key(l, "use_transfer", k.use_transfer);
    read_key(l, "use_regularization", k.use_regularization);
    read_key(l, "subject_only_reconstruction", k.subject_only_reconstruction);
    read_key(l, "detach_reconstruction", k.detach_reconstruction);
    if (auto s = l.find("loss_scope"); s != l.end()) {
      const auto v = s->get<std::string>();
      if (v == "full") {
        k.loss_scope = LossScope::full;
      } else if (v == "batch") {
        k.loss_scope = LossScope::batch;
      } else {
        throw ConfigError(fmt::format("loss_scope must be full or batch, got '{}'", v));
      }
    }
  }
  c.validate();
  return c;
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopper::update(double metric) {
  ++count_;
  if (count_ == 1 || metric > best_) {
    best_ = metric;
    best_index_ = count_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

double RunRecord::cumulative_train_seconds(int up_to) const {
  double total = 0.0;
  for (const auto& s : snapshots) {
    if (up_to > 0 && s.index > up_to) break;
    total += s.train_seconds;
  }
  return total;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Loss configuration actually optimized by a strategy: the baselines only
// see the margin term.
LkgeConfig effective_loss(const RunConfig& cfg) {
  LkgeConfig l = cfg.strategy.lkge;
  if (cfg.strategy.kind != StrategyKind::lkge) {
    l.alpha = 0.0;
    l.beta = 0.0;
    l.use_autoencoder = false;
    l.use_regularization = false;
    l.use_transfer = false;
  }
  return l;
}

bool uses_transfer(const RunConfig& cfg) {
  return cfg.strategy.kind == StrategyKind::lkge &&
         cfg.strategy.lkge.use_transfer;
}

// Validation ranking, optionally against a fixed random subset of entities.
class Validator {
 public:
  Validator(std::span<const Fact> valid, const Snapshot& snap,
            const RunConfig& cfg, const KnownFacts* filter)
      : valid_(valid), snap_(snap), cfg_(cfg), filter_(filter) {
    if (cfg.valid_candidate_cap > 0 &&
        cfg.valid_candidate_cap < snap.num_entities) {
      Rng rng(derive_seed(cfg.seed, 0x7a11d000u + static_cast<unsigned>(snap.index)));
      std::vector<EntityId> all(snap.num_entities);
      for (std::uint32_t e = 0; e < snap.num_entities; ++e) all[e] = EntityId(e);
      rng.shuffle(std::span(all));
      all.resize(cfg.valid_candidate_cap);
      subset_ = std::move(all);
    }
  }

  bool empty() const { return valid_.empty(); }

  double mrr(const EmbeddingState& st) const {
    if (subset_.empty()) {
      return link_prediction(st, valid_, snap_.num_entities, snap_.index,
                             {cfg_.norm, filter_})
          .mrr;
    }
    const RankOptions ro{cfg_.norm, filter_, snap_.index};
    MetricAccumulator acc;
    std::vector<EntityId> cands;
    for (const auto& f : valid_) {
      for (const auto& q : {Query::tail_of(f), Query::head_of(f)}) {
        cands = subset_;
        if (std::find(cands.begin(), cands.end(), q.answer) == cands.end()) {
          cands.push_back(q.answer);
        }
        acc.add(rank(q, st, cands, ro));
      }
    }
    return acc.result().mrr;
  }

 private:
  std::span<const Fact> valid_;
  const Snapshot& snap_;
  const RunConfig& cfg_;
  const KnownFacts* filter_;
  std::vector<EntityId> subset_;
};

struct TrainOutcome {
  int epochs = 0;
  int best_epoch = 0;
  double best_metric = 0.0;
  LossBreakdown last_loss;
};

TrainOutcome train_snapshot(EmbeddingState& st, const FactLedger& ledger,
                            const Neighborhoods& nb,
                            std::span<const Fact> train,
                            const Validator& validator, const Snapshot& snap,
                            const RunConfig& cfg, Rng& rng,
                            const EpochCallback& on_epoch) {
  const LkgeConfig loss_cfg = effective_loss(cfg);
  SparseAdam opt({cfg.learning_rate}, st.dim);
  opt.ensure_rows(st.num_entities(), st.num_relations());
  GradientBuffer grads(st.num_entities(), st.num_relations(), st.dim);
  EarlyStopper stopper(cfg.patience);
  EmbeddingTable best_entities = st.entities;
  EmbeddingTable best_relations = st.relations;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::pair<Fact, Fact>> pairs;
  const auto num_entities = static_cast<std::uint32_t>(snap.num_entities);
  const auto t0 = Clock::now();

  TrainOutcome out;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span(order));
    LossBreakdown epoch_loss;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto stop = std::min(order.size(), start + cfg.batch_size);
      pairs.clear();
      for (std::size_t k = start; k < stop; ++k) {
        const auto& pos = train[order[k]];
        for (int n = 0; n < cfg.neg_ratio; ++n) {
          pairs.emplace_back(pos, negative_sample(pos, num_entities, rng));
        }
      }
      grads.clear();
      const auto loss =
          total_loss(pairs, st, ledger, nb, loss_cfg, &grads, cfg.norm);
      opt.step(grads, st);
      if (cfg.normalize_entities) normalize_entities(st);
      epoch_loss.new_facts += loss.new_facts;
      epoch_loss.old += loss.old;
      epoch_loss.mae += loss.mae;
      epoch_loss.total += loss.total;
    }
    out.epochs = epoch;
    out.last_loss = epoch_loss;
    if (epoch % cfg.eval_every != 0 && epoch != cfg.max_epochs) continue;

    // Without validation data, early stopping watches the training loss.
    const double metric =
        validator.empty() ? -epoch_loss.total : validator.mrr(st);
    if (stopper.update(metric)) {
      best_entities = st.entities;
      best_relations = st.relations;
      out.best_epoch = epoch;
      out.best_metric = metric;
    }
    if (on_epoch) {
      on_epoch({snap.index, epoch, epoch_loss,
                validator.empty() ? std::nan("") : metric, seconds_since(t0)});
    }
    spdlog::info(
        "snapshot {} epoch {} loss new={:.4f} old={:.4f} mae={:.4f} "
        "valid_mrr={:.4f} elapsed={:.2f}s",
        snap.index, epoch, epoch_loss.new_facts, epoch_loss.old, epoch_loss.mae,
        validator.empty() ? std::nan("") : metric, seconds_since(t0));
    if (stopper.should_stop()) break;
  }
  st.entities = std::move(best_entities);
  st.relations = std::move(best_relations);
  return out;
}

}  // namespace

std::vector<double> evaluate_history(const Checkpoint& model,
                                     const GrowthDataset& ds, int i,
                                     const KnownFacts* filter, Norm norm) {
  const auto st = model.to_state();
  std::vector<double> row;
  for (int j = 1; j <= i; ++j) {
    const auto& snap = ds.snapshot(j);
    row.push_back(
        link_prediction(st, snap.test, snap.num_entities, j, {norm, filter}).mrr);
  }
  return row;
}

double evaluate_future(const Checkpoint& model, const GrowthDataset& ds, int i,
                       const RunConfig& cfg, const KnownFacts* filter) {
  if (i < 1 || static_cast<std::size_t>(i) >= ds.size()) {
    throw BoundsError(fmt::format("no snapshot after {}", i));
  }
  const auto& next = ds.snapshot(i + 1);
  auto st = model.to_state();
  st.freeze();
  const Neighborhoods nb(next.train, next.num_entities, next.num_relations);
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
  extend_tables(st, next.num_entities, next.num_relations, &nb,
                uses_transfer(cfg), rng);
  return link_prediction(st, next.test, next.num_entities, i + 1,
                         {cfg.norm, filter})
      .mrr;
}

RunRecord run_lifelong(const GrowthDataset& ds, const RunConfig& cfg,
                       const EpochCallback& on_epoch) {
  cfg.validate();
  ds.validate();
  if (ds.size() == 0) throw ConfigError("dataset has no snapshots");

  namespace fs = std::filesystem;
  if (!cfg.output_dir.empty()) fs::create_directories(cfg.output_dir);

  const int n = static_cast<int>(ds.size());
  RunRecord record;
  record.config = cfg;
  record.h = TransferMatrix(n);

  std::optional<KnownFacts> known;
  if (cfg.filtered) known.emplace(ds);
  const KnownFacts* filter = known ? &*known : nullptr;

  Rng rng(cfg.seed);
  EmbeddingState st(0, 0, cfg.dim);
  FactLedger ledger;
  const auto kind = cfg.strategy.kind;

  for (int i = 1; i <= n; ++i) {
    const auto& snap = ds.snapshot(i);
    SnapshotReport report;
    report.index = i;
    const auto t0 = Clock::now();

    std::vector<Fact> train_storage;
    std::vector<Fact> valid_storage;
    std::span<const Fact> train = snap.train;
    std::span<const Fact> valid = snap.valid;
    if (kind == StrategyKind::retrain) {
      train_storage = ds.accumulated_train(i);
      valid_storage = ds.accumulated_valid(i);
      train = train_storage;
      valid = valid_storage;
    }

    const Neighborhoods nb(snap.train, snap.num_entities, snap.num_relations);
    switch (kind) {
      case StrategyKind::snapshot_only:
      case StrategyKind::retrain:
        st = EmbeddingState(snap.num_entities, snap.num_relations, cfg.dim);
        init_rows(st.entities, 0, rng);
        init_rows(st.relations, 0, rng);
        report.extension.random_entities = snap.num_entities;
        report.extension.random_relations = snap.num_relations;
        break;
      case StrategyKind::finetune:
        report.extension = extend_tables(st, snap.num_entities,
                                         snap.num_relations, nullptr, false, rng);
        break;
      case StrategyKind::lkge:
        st.freeze();
        report.extension =
            extend_tables(st, snap.num_entities, snap.num_relations, &nb,
                          cfg.strategy.lkge.use_transfer, rng);
        break;
    }
    ledger.transition(snap.train, snap.num_entities, snap.num_relations);

    const bool trains = kind != StrategyKind::lkge || i == 1 ||
                        cfg.strategy.lkge.use_finetune;
    report.train_facts = train.size();
    if (trains && !train.empty()) {
      const Validator validator(valid, snap, cfg, filter);
      const auto outcome = train_snapshot(st, ledger, nb, train, validator,
                                          snap, cfg, rng, on_epoch);
      report.epochs = outcome.epochs;
      report.best_epoch = outcome.best_epoch;
      report.best_valid_mrr = outcome.best_metric;
      report.last_loss = outcome.last_loss;
    }
    report.train_seconds = seconds_since(t0);

    Checkpoint ckpt{i, cfg.dim, st.entities, st.relations, ledger};
    if (!cfg.output_dir.empty()) {
      save_checkpoint(ckpt, fs::path(cfg.output_dir) / fmt::format("snapshot{}.ckpt", i));
    }

    const auto te = Clock::now();
    const auto row = evaluate_history(ckpt, ds, i, filter, cfg.norm);
    for (int j = 1; j <= i; ++j) record.h.set(i, j, row[static_cast<std::size_t>(j - 1)]);
    if (cfg.evaluate_forward && i < n) {
      record.h.set(i, i + 1, evaluate_future(ckpt, ds, i, cfg, filter));
    }
    report.eval_seconds = seconds_since(te);
    spdlog::info("snapshot {} done: {} epochs (best {}), train {:.2f}s, h[{}][{}]={:.4f}",
                 i, report.epochs, report.best_epoch, report.train_seconds, i, i,
                 row.back());
    record.snapshots.push_back(report);
    record.checkpoints.push_back(std::move(ckpt));
  }

  record.union_metrics = union_eval(st, ds, {cfg.norm, filter});
  record.transfer = fwt_bwt(record.h);
  if (!cfg.output_dir.empty()) write_run_record(record, cfg.output_dir);
  return record;
}

namespace {

json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

json optional_or_null(const std::optional<double>& v) {
  if (!v || std::isnan(*v)) return nullptr;
  return *v;
}

}  // namespace

json metrics_to_json(const Metrics& m) {
  return {{"mrr", number_or_null(m.mrr)},
          {"hits1", number_or_null(m.hits1)},
          {"hits3", number_or_null(m.hits3)},
          {"hits10", number_or_null(m.hits10)},
          {"num_queries", m.num_queries}};
}

json to_json(const RunRecord& r) {
  json snaps = json::array();
  for (const auto& s : r.snapshots) {
    snaps.push_back({{"index", s.index},
                     {"train_facts", s.train_facts},
                     {"epochs", s.epochs},
                     {"best_epoch", s.best_epoch},
                     {"best_valid_mrr", s.best_valid_mrr},
                     {"train_seconds", s.train_seconds},
                     {"eval_seconds", s.eval_seconds},
                     {"loss",
                      {{"new", s.last_loss.new_facts},
                       {"old", s.last_loss.old},
                       {"mae", s.last_loss.mae},
                       {"total", s.last_loss.total}}},
                     {"transferred_entities", s.extension.transferred_entities},
                     {"transferred_relations", s.extension.transferred_relations},
                     {"random_entities", s.extension.random_entities},
                     {"random_relations", s.extension.random_relations}});
  }
  json h = json::array();
  for (int i = 1; i <= r.h.size(); ++i) {
    json row = json::array();
    for (int j = 1; j <= r.h.size(); ++j) row.push_back(optional_or_null(r.h.get(i, j)));
    h.push_back(std::move(row));
  }
  double cumulative = 0.0;
  json cum = json::array();
  for (const auto& s : r.snapshots) {
    cumulative += s.train_seconds;
    cum.push_back(cumulative);
  }
  return {{"format_version", 1},
          {"config", to_json(r.config)},
          {"snapshots", snaps},
          {"h", h},
          {"fwt", optional_or_null(r.transfer.fwt)},
          {"bwt", optional_or_null(r.transfer.bwt)},
          {"union", metrics_to_json(r.union_metrics)},
          {"cumulative_train_seconds", cum}};
}

void write_run_record(const RunRecord& record, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "run.json";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << to_json(record).dump(2) << '\n';
  if (!out) throw IoError(fmt::format("error writing {}", path.string()));
}

}  // namespace lkge
