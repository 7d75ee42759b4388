#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "lkge/kg.hpp"
#include "lkge/transe.hpp"

namespace lkge {

enum class Direction { head, tail };

// (?, r, o) for head prediction, (s, r, ?) for tail prediction.
struct Query {
  EntityId known;
  RelationId relation;
  EntityId answer;
  Direction direction = Direction::tail;

  static Query tail_of(const Fact& f) {
    return {f.subject, f.relation, f.object, Direction::tail};
  }
  static Query head_of(const Fact& f) {
    return {f.object, f.relation, f.subject, Direction::head};
  }
  Fact with_candidate(EntityId c) const {
    return direction == Direction::tail ? Fact{known, relation, c}
                                        : Fact{c, relation, known};
  }
};

// Known-true facts tagged with the snapshot that introduced them, indexed
// for filtered ranking.
class KnownFacts {
 public:
  KnownFacts() = default;
  explicit KnownFacts(const GrowthDataset& ds);

  void add(const Fact& f, int snapshot);

  // Appends every entity c != q.answer such that the completed fact is known
  // in snapshots 1..up_to.
  void collect_filtered(const Query& q, int up_to,
                        std::vector<std::uint32_t>& out) const;

  bool contains(const Fact& f, int up_to) const;

 private:
  struct Entry {
    std::uint32_t entity;
    int snapshot;
  };
  static std::uint64_t key(std::uint32_t e, std::uint32_t r) {
    return (std::uint64_t{e} << 32) | r;
  }
  std::unordered_map<std::uint64_t, std::vector<Entry>> tails_;  // (s, r)
  std::unordered_map<std::uint64_t, std::vector<Entry>> heads_;  // (o, r)
};

struct RankOptions {
  Norm norm = Norm::l2;
  const KnownFacts* filter = nullptr;  // null means raw ranking
  int filter_snapshot = 0;
};

// Mean-tie rank of the answer among candidates [0, num_candidates):
// 1 + #strictly better + #ties / 2, skipping filtered candidates.
double rank(const Query& q, const EmbeddingState& st,
            std::uint32_t num_candidates, const RankOptions& opt = {});

// Same over an explicit candidate list; the answer must be in it.
double rank(const Query& q, const EmbeddingState& st,
            std::span<const EntityId> candidates, const RankOptions& opt = {});

// Metrics over a set of ranks. All fields are NaN for an empty set.
struct Metrics {
  double mrr = std::numeric_limits<double>::quiet_NaN();
  double hits1 = std::numeric_limits<double>::quiet_NaN();
  double hits3 = std::numeric_limits<double>::quiet_NaN();
  double hits10 = std::numeric_limits<double>::quiet_NaN();
  std::size_t num_queries = 0;

  bool defined() const { return num_queries > 0; }
};

class MetricAccumulator {
 public:
  void add(double rank);
  void merge(const MetricAccumulator& other);
  Metrics result() const;
  std::size_t count() const { return count_; }

 private:
  std::size_t count_ = 0;
  double reciprocal_sum_ = 0.0;
  std::size_t hits1_ = 0;
  std::size_t hits3_ = 0;
  std::size_t hits10_ = 0;
};

struct EvalOptions {
  Norm norm = Norm::l2;
  const KnownFacts* filter = nullptr;
};

// Head and tail query for every test fact against candidates
// [0, num_candidates); filtering uses facts of snapshots 1..snapshot.
MetricAccumulator accumulate_link_prediction(const EmbeddingState& st,
                                             std::span<const Fact> test,
                                             std::uint32_t num_candidates,
                                             int snapshot,
                                             const EvalOptions& opt = {});

Metrics link_prediction(const EmbeddingState& st, std::span<const Fact> test,
                        std::uint32_t num_candidates, int snapshot,
                        const EvalOptions& opt = {});

// Micro-averaged metrics over the union of test sets 1..n, each ranked
// against its own snapshot's entities.
Metrics union_eval(const EmbeddingState& st, const GrowthDataset& ds,
                   const EvalOptions& opt = {}, int up_to = 0);

// h[i][j]: MRR of the model after snapshot i on test set j (1-based).
class TransferMatrix {
 public:
  TransferMatrix() = default;
  explicit TransferMatrix(int n) : n_(n), cells_(static_cast<std::size_t>(n * n)) {}

  int size() const { return n_; }
  void set(int i, int j, double mrr);
  std::optional<double> get(int i, int j) const;

 private:
  std::size_t slot(int i, int j) const;
  int n_ = 0;
  std::vector<std::optional<double>> cells_;
};

struct TransferScores {
  std::optional<double> fwt;
  std::optional<double> bwt;
};

// FWT = mean_{i=2..n} h[i-1][i]; BWT = mean_{i=1..n-1} (h[n][i] - h[i][i]).
// Either is empty when n < 2 or a required entry is missing.
TransferScores fwt_bwt(const TransferMatrix& h);

}  // namespace lkge
