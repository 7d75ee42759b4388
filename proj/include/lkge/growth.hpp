#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "lkge/kg.hpp"
#include "lkge/rng.hpp"

namespace lkge {

enum class GrowthVariant { entity, relation, fact, hybrid };

std::string_view to_string(GrowthVariant v);
GrowthVariant parse_growth_variant(std::string_view name);

struct BuilderConfig {
  GrowthVariant variant = GrowthVariant::fact;
  int num_snapshots = 5;
  std::uint64_t seed = 0;
  std::array<int, 3> split_ratio{3, 1, 1};
  int seed_facts = 10;
  int hybrid_stop_numerator = 5;
  // Add every fact between seen entities when a snapshot quota is reached.
  // Unset means "entity variant only".
  std::optional<bool> closure_on_quota;
  // Relation variant only: when the quota is reached, also add every fact
  // reachable from the seen entities through seen relations.
  bool relation_closure = false;
  // Hybrid runs that leave a snapshot without facts are redrawn this many
  // times before giving up.
  int hybrid_max_attempts = 100;

  bool closure() const {
    return closure_on_quota.value_or(variant == GrowthVariant::entity);
  }
  void validate() const;
};

// A base KG in source handle space.
struct BaseKg {
  std::span<const Fact> facts;
  std::uint32_t num_entities = 0;
  std::uint32_t num_relations = 0;
};

// Construction state in source handle space. Entities and relations are
// recorded in the order they join the cumulative vocabulary; that order
// becomes the dense handle order of the built dataset.
class GrowthState {
 public:
  explicit GrowthState(const BaseKg& base);

  bool entity_seen(std::uint32_t e) const { return entity_seen_[e] != 0; }
  bool relation_seen(std::uint32_t r) const { return relation_seen_[r] != 0; }
  bool fact_included(std::size_t f) const { return fact_included_[f] != 0; }

  // Each returns true when the item was new.
  bool add_entity(std::uint32_t e);
  bool add_relation(std::uint32_t r);
  bool add_fact(std::size_t f);

  void seal();

  std::size_t num_seen_entities() const { return entity_order_.size(); }
  std::size_t num_seen_relations() const { return relation_order_.size(); }
  std::size_t num_included_facts() const { return num_included_; }
  std::size_t num_sealed() const { return deltas_.size(); }
  std::size_t current_size() const { return current_.size(); }

  const std::vector<std::vector<std::size_t>>& deltas() const {
    return deltas_;
  }
  const std::vector<std::uint32_t>& entity_order() const {
    return entity_order_;
  }
  const std::vector<std::uint32_t>& relation_order() const {
    return relation_order_;
  }
  const std::vector<std::uint32_t>& entities_at_seal() const {
    return entities_at_seal_;
  }
  const std::vector<std::uint32_t>& relations_at_seal() const {
    return relations_at_seal_;
  }
  const BaseKg& base() const { return base_; }

  // Adds every remaining fact (shuffled), entity and relation, then seals.
  void absorb_remaining(Rng& rng);

 private:
  BaseKg base_;
  std::vector<char> entity_seen_;
  std::vector<char> relation_seen_;
  std::vector<char> fact_included_;
  std::size_t num_included_ = 0;
  std::vector<std::uint32_t> entity_order_;
  std::vector<std::uint32_t> relation_order_;
  std::vector<std::size_t> current_;
  std::vector<std::vector<std::size_t>> deltas_;
  std::vector<std::uint32_t> entities_at_seal_;
  std::vector<std::uint32_t> relations_at_seal_;
};

// Samples cfg.seed_facts distinct facts; their endpoints and relations form
// the initial vocabulary. The first snapshot stays open.
GrowthState seed_phase(const BaseKg& base, const BuilderConfig& cfg, Rng& rng);

// Connectivity-driven expansion for the entity, relation and fact variants.
// Seals every snapshot including the last one.
void expand_centric(GrowthState& state, const BuilderConfig& cfg, Rng& rng);

// Uniform draws from entities, relations and facts with random snapshot
// boundaries. Returns the number of deferred (inadmissible) fact draws.
std::size_t expand_hybrid(GrowthState& state, const BuilderConfig& cfg,
                          Rng& rng);

struct SplitSizes {
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

// valid and test take the floor of their share, train takes the rest. Sets
// smaller than the ratio sum go entirely to train.
SplitSizes split_sizes(std::size_t n, const std::array<int, 3>& ratio);

// Remaps the sealed deltas to dense handles and splits each one.
GrowthDataset divide(const GrowthState& state, const KgVocabulary& source,
                     const BuilderConfig& cfg, Rng& rng);

// seed_phase + expansion + divide with a fresh Rng(cfg.seed).
GrowthDataset build_dataset(std::span<const Fact> facts,
                            const KgVocabulary& vocab,
                            const BuilderConfig& cfg);

struct Subsample {
  std::vector<Fact> facts;
  KgVocabulary vocab;
};

// Randomized breadth-first entity subsample; keeps the induced facts.
Subsample subsample_entities(std::span<const Fact> facts,
                             const KgVocabulary& vocab,
                             std::size_t target_entities, Rng& rng);

}  // namespace lkge
