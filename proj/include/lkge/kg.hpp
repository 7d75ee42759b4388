#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lkge/rng.hpp"

namespace lkge {

// Dense integer handle. Tag distinguishes entities from relations so the two
// cannot be mixed up at call sites.
template <typename Tag>
struct Handle {
  std::uint32_t value = 0;

  constexpr Handle() = default;
  constexpr explicit Handle(std::uint32_t v) : value(v) {}
  constexpr std::size_t index() const { return value; }
  friend constexpr auto operator<=>(Handle, Handle) = default;
};

struct EntityTag {};
struct RelationTag {};
using EntityId = Handle<EntityTag>;
using RelationId = Handle<RelationTag>;

struct Fact {
  EntityId subject;
  RelationId relation;
  EntityId object;

  friend constexpr bool operator==(const Fact&, const Fact&) = default;
  friend constexpr auto operator<=>(const Fact&, const Fact&) = default;
};

struct FactHash {
  std::size_t operator()(const Fact& f) const noexcept {
    std::uint64_t h = f.subject.value;
    h = h * 0x9e3779b97f4a7c15ULL + f.relation.value;
    h = h * 0x9e3779b97f4a7c15ULL + f.object.value;
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

// String interner assigning handles in first-seen order.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  const std::string& name(std::uint32_t handle) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t, StringHash, std::equal_to<>>
      index_;
};

struct KgVocabulary {
  Vocabulary entities;
  Vocabulary relations;
};

struct LoadStats {
  std::size_t lines = 0;
  std::size_t duplicates = 0;
};

// Reads a tab-separated subject/relation/object file. Handles are interned
// into `vocab` in first-seen order; duplicate triples are dropped and
// counted. The vocabulary is only modified when the whole file parses.
std::vector<Fact> load_triples(const std::filesystem::path& path,
                               KgVocabulary& vocab,
                               LoadStats* stats = nullptr);

void write_triples(const std::filesystem::path& path,
                   const std::vector<Fact>& facts, const KgVocabulary& vocab);

struct Snapshot {
  int index = 0;  // 1-based
  std::vector<Fact> train;
  std::vector<Fact> valid;
  std::vector<Fact> test;
  std::uint32_t num_entities = 0;
  std::uint32_t num_relations = 0;

  std::size_t delta_size() const {
    return train.size() + valid.size() + test.size();
  }
};

// Provenance recorded in meta.json.
struct BuildInfo {
  std::string variant;
  std::uint64_t seed = 0;
  std::string rng{Rng::kName};
  int num_snapshots = 0;
  std::vector<int> split_ratio;
  int seed_facts = 0;
  int hybrid_stop_numerator = 0;
  bool closure_on_quota = false;
  bool relation_closure = false;
};

class GrowthDataset {
 public:
  std::vector<Snapshot> snapshots;
  Vocabulary entity_names;
  Vocabulary relation_names;
  BuildInfo build;

  std::size_t size() const { return snapshots.size(); }

  // 1-based access; throws BoundsError.
  const Snapshot& snapshot(int i) const;

  // Training facts of snapshots 1..i concatenated in snapshot order.
  std::vector<Fact> accumulated_train(int i) const;
  std::vector<Fact> accumulated_valid(int i) const;

  // Throws ContractError naming the first violated invariant.
  void validate() const;
};

struct DeltaStats {
  std::size_t facts = 0;
  std::uint32_t entities = 0;
  std::uint32_t relations = 0;

  friend bool operator==(const DeltaStats&, const DeltaStats&) = default;
};

DeltaStats delta_stats(const GrowthDataset& ds, int i);

// On-disk layout: entities.tsv, relations.tsv, meta.json and
// snapshot<i>/{train,valid,test}.tsv with handle columns.
void save_dataset(const GrowthDataset& ds, const std::filesystem::path& dir);
GrowthDataset load_dataset(const std::filesystem::path& dir);

inline constexpr int kFormatVersion = 1;

}  // namespace lkge

template <typename Tag>
struct std::hash<lkge::Handle<Tag>> {
  std::size_t operator()(lkge::Handle<Tag> h) const noexcept {
    return std::hash<std::uint32_t>{}(h.value);
  }
};
