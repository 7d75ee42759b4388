#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "lkge/checkpoint.hpp"
#include "lkge/eval.hpp"
#include "lkge/kg.hpp"
#include "lkge/lkge.hpp"
#include "lkge/transe.hpp"

namespace lkge {

enum class StrategyKind { snapshot_only, retrain, finetune, lkge };

std::string_view to_string(StrategyKind s);
StrategyKind parse_strategy(std::string_view name);

struct Strategy {
  StrategyKind kind = StrategyKind::lkge;
  // Margin applies to every strategy; the remaining fields only to lkge.
  LkgeConfig lkge;
};

struct RunConfig {
  Strategy strategy;
  double learning_rate = 1e-3;
  std::size_t batch_size = 1024;
  std::size_t dim = 100;
  int patience = 3;
  int max_epochs = 200;
  int eval_every = 1;
  std::uint64_t seed = 0;
  int neg_ratio = 1;
  Norm norm = Norm::l2;
  bool normalize_entities = false;
  // 0 ranks validation queries against every entity of the snapshot.
  std::size_t valid_candidate_cap = 0;
  bool filtered = true;
  bool evaluate_forward = true;
  std::string dataset_path;
  std::string output_dir;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Keys absent from `j` keep the values of `base`; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

// Stops after `patience` consecutive evaluations without strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);

  // Records one evaluation; returns true when it is a new best.
  bool update(double metric);
  bool should_stop() const { return stale_ >= patience_; }
  int best_evaluation() const { return best_index_; }  // 1-based
  double best() const { return best_; }
  int evaluations() const { return count_; }

 private:
  int patience_;
  int count_ = 0;
  int stale_ = 0;
  int best_index_ = 0;
  double best_ = 0.0;
};

struct SnapshotReport {
  int index = 0;
  std::size_t train_facts = 0;
  int epochs = 0;
  int best_epoch = 0;
  double best_valid_mrr = 0.0;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
  LossBreakdown last_loss;
  ExtensionStats extension;
};

struct RunRecord {
  RunConfig config;
  std::vector<SnapshotReport> snapshots;
  TransferMatrix h;
  TransferScores transfer;
  Metrics union_metrics;
  std::vector<Checkpoint> checkpoints;

  double cumulative_train_seconds(int up_to = 0) const;
};

struct EpochLog {
  int snapshot;
  int epoch;
  LossBreakdown loss;  // summed over the epoch
  double valid_mrr;
  double elapsed_seconds;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains over every snapshot in order under cfg.strategy, filling h[i][j]
// for j <= i (and j = i + 1 when cfg.evaluate_forward). When
// cfg.output_dir is set, checkpoints are written as snapshot<i>.ckpt.
RunRecord run_lifelong(const GrowthDataset& ds, const RunConfig& cfg,
                       const EpochCallback& on_epoch = {});

// MRR of the model finalized on snapshot i over the test set of snapshot
// i + 1. Unseen items get embeddings through the strategy's transfer
// mechanism when it has one, otherwise a random draw seeded by (seed, i).
double evaluate_future(const Checkpoint& model, const GrowthDataset& ds, int i,
                       const RunConfig& cfg, const KnownFacts* filter);

// h[i][j] for all j <= i from a stored checkpoint.
std::vector<double> evaluate_history(const Checkpoint& model,
                                     const GrowthDataset& ds, int i,
                                     const KnownFacts* filter, Norm norm);

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json to_json(const RunRecord& record);

// Writes run.json into `dir` (and nothing else).
void write_run_record(const RunRecord& record, const std::filesystem::path& dir);

}  // namespace lkge
