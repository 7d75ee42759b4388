#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "lkge/kg.hpp"
#include "lkge/rng.hpp"
#include "lkge/transe.hpp"

namespace lkge {

// Per-item fact counters: facts seen in earlier snapshots and in the current
// training set. A fact counts once per distinct item it contains, so a
// self-loop (e, r, e) adds one to e.
struct FactLedger {
  std::vector<std::int64_t> entity_prev;
  std::vector<std::int64_t> entity_curr;
  std::vector<std::int64_t> relation_prev;
  std::vector<std::int64_t> relation_curr;

  // Moves to the next snapshot: prev += curr, then curr is recounted over
  // `train`. Vectors grow to the given vocabulary sizes.
  void transition(std::span<const Fact> train, std::size_t num_entities,
                  std::size_t num_relations);

  std::int64_t entity_previous(EntityId e) const;
  std::int64_t entity_current(EntityId e) const;
  std::int64_t relation_previous(RelationId r) const;
  std::int64_t relation_current(RelationId r) const;

  friend bool operator==(const FactLedger&, const FactLedger&) = default;
};

// Incident facts of every entity and relation in one training set.
class Neighborhoods {
 public:
  struct Incident {
    std::uint32_t fact;
    bool as_subject;  // self-loops are listed once, as subject
  };

  Neighborhoods() = default;
  Neighborhoods(std::span<const Fact> facts, std::size_t num_entities,
                std::size_t num_relations);

  std::span<const Fact> facts() const { return facts_; }
  std::span<const Incident> entity(std::size_t e) const;
  std::span<const std::uint32_t> relation(std::size_t r) const;
  std::size_t num_entities() const { return ent_offsets_.size() - 1; }
  std::size_t num_relations() const { return rel_offsets_.size() - 1; }

  // Facts containing the item, copied out.
  std::vector<Fact> entity_facts(std::size_t e) const;
  std::vector<Fact> relation_facts(std::size_t r) const;

 private:
  std::vector<Fact> facts_;
  std::vector<std::size_t> ent_offsets_{0};
  std::vector<Incident> ent_incident_;
  std::vector<std::size_t> rel_offsets_{0};
  std::vector<std::uint32_t> rel_incident_;
};

enum class LossScope { full, batch };

struct LkgeConfig {
  double alpha = 0.1;  // regularization weight
  double beta = 0.1;   // autoencoder weight
  double margin = 1.0;
  bool use_finetune = true;
  bool use_autoencoder = true;
  bool use_transfer = true;
  bool use_regularization = true;
  // Reconstruct entities from facts where they are the subject only.
  bool subject_only_reconstruction = false;
  // Treat reconstructions as constants in the autoencoder gradient.
  bool detach_reconstruction = false;
  LossScope loss_scope = LossScope::full;

  void validate() const;
};

// Masked reconstruction of an entity from its current-snapshot facts and the
// frozen previous embedding weighted by the historical fact count. Facts
// where e is the object contribute s + r. Throws UndefinedError when the
// item has no history and no facts.
Vector reconstruct_entity(EntityId e, std::span<const Fact> facts,
                          const EmbeddingState& st, const FactLedger& ledger,
                          bool subject_only = false);

Vector reconstruct_relation(RelationId r, std::span<const Fact> facts,
                            const EmbeddingState& st, const FactLedger& ledger);

// Restricts the autoencoder and regularization sums to a subset of items.
struct ItemScope {
  std::vector<std::uint32_t> entities;
  std::vector<std::uint32_t> relations;

  static ItemScope of_batch(std::span<const Fact> facts);
};

// Sum of squared distances between every item and its reconstruction.
// Gradients (when `grads` is non-null) are scaled by `scale`.
double mae_loss(const Neighborhoods& nb, const EmbeddingState& st,
                const FactLedger& ledger, const LkgeConfig& cfg,
                GradientBuffer* grads, double scale = 1.0,
                const ItemScope* scope = nullptr);

// Initial embedding of an unseen item from the frozen tables; nullopt means
// the item has no fact whose other members were seen before and must be
// randomly initialized.
std::optional<Vector> transfer_entity_init(EntityId e,
                                           std::span<const Fact> facts,
                                           const EmbeddingState& st);
std::optional<Vector> transfer_relation_init(RelationId r,
                                             std::span<const Fact> facts,
                                             const EmbeddingState& st);

// 1 - curr / (prev + curr). Throws UndefinedError when both are zero.
double reg_weight(std::int64_t prev_count, std::int64_t curr_count);

// Weighted squared drift of previously seen items from their frozen values.
double reg_loss(const EmbeddingState& st, const FactLedger& ledger,
                GradientBuffer* grads, double scale = 1.0,
                const ItemScope* scope = nullptr);

struct LossBreakdown {
  double new_facts = 0.0;
  double old = 0.0;
  double mae = 0.0;
  double total = 0.0;
};

// L_new + alpha * L_old + beta * L_MAE over one batch of
// (positive, negative) pairs. Disabled terms are neither evaluated nor
// differentiated and report zero.
LossBreakdown total_loss(std::span<const std::pair<Fact, Fact>> batch,
                         const EmbeddingState& st, const FactLedger& ledger,
                         const Neighborhoods& nb, const LkgeConfig& cfg,
                         GradientBuffer* grads, Norm norm = Norm::l2);

struct ExtensionStats {
  std::size_t transferred_entities = 0;
  std::size_t transferred_relations = 0;
  std::size_t random_entities = 0;
  std::size_t random_relations = 0;
};

// Appends rows for items [rows, num_*) of the current tables. With
// `use_transfer`, rows are initialized from the frozen tables using `nb`;
// the rest are drawn from `rng` in row order, entities first.
ExtensionStats extend_tables(EmbeddingState& st, std::size_t num_entities,
                             std::size_t num_relations,
                             const Neighborhoods* nb, bool use_transfer,
                             Rng& rng);

}  // namespace lkge
