#include "lkge/growth.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <numeric>

#include "lkge/error.hpp"

namespace lkge {

std::string_view to_string(GrowthVariant v) {
  switch (v) {
    case GrowthVariant::entity:
      return "entity";
    case GrowthVariant::relation:
      return "relation";
    case GrowthVariant::fact:
      return "fact";
    case GrowthVariant::hybrid:
      return "hybrid";
  }
  return "unknown";
}

GrowthVariant parse_growth_variant(std::string_view name) {
  for (auto v : {GrowthVariant::entity, GrowthVariant::relation,
                 GrowthVariant::fact, GrowthVariant::hybrid}) {
    if (name == to_string(v)) return v;
  }
  throw ConfigError(fmt::format(
      "unknown growth variant '{}' (expected entity|relation|fact|hybrid)",
      name));
}

void BuilderConfig::validate() const {
  if (num_snapshots < 2) {
    throw ConfigError(
        fmt::format("num_snapshots must be >= 2, got {}", num_snapshots));
  }
  for (int part : split_ratio) {
    if (part <= 0) throw ConfigError("split_ratio components must be positive");
  }
  if (seed_facts < 1) throw ConfigError("seed_facts must be >= 1");
  if (hybrid_stop_numerator < 1) {
    throw ConfigError("hybrid_stop_numerator must be >= 1");
  }
  if (hybrid_max_attempts < 1) {
    throw ConfigError("hybrid_max_attempts must be >= 1");
  }
}

GrowthState::GrowthState(const BaseKg& base)
    : base_(base),
      entity_seen_(base.num_entities, 0),
      relation_seen_(base.num_relations, 0),
      fact_included_(base.facts.size(), 0) {}

bool GrowthState::add_entity(std::uint32_t e) {
  if (entity_seen_[e]) return false;
  entity_seen_[e] = 1;
  entity_order_.push_back(e);
  return true;
}

bool GrowthState::add_relation(std::uint32_t r) {
  if (relation_seen_[r]) return false;
  relation_seen_[r] = 1;
  relation_order_.push_back(r);
  return true;
}

bool GrowthState::add_fact(std::size_t f) {
  if (fact_included_[f]) return false;
  fact_included_[f] = 1;
  ++num_included_;
  const Fact& fact = base_.facts[f];
  add_entity(fact.subject.value);
  add_relation(fact.relation.value);
  add_entity(fact.object.value);
  current_.push_back(f);
  return true;
}

void GrowthState::seal() {
  deltas_.push_back(std::move(current_));
  current_.clear();
  entities_at_seal_.push_back(static_cast<std::uint32_t>(entity_order_.size()));
  relations_at_seal_.push_back(
      static_cast<std::uint32_t>(relation_order_.size()));
}

void GrowthState::absorb_remaining(Rng& rng) {
  std::vector<std::size_t> rest;
  for (std::size_t f = 0; f < base_.facts.size(); ++f) {
    if (!fact_included_[f]) rest.push_back(f);
  }
  rng.shuffle(std::span(rest));
  for (auto f : rest) add_fact(f);
  for (std::uint32_t e = 0; e < base_.num_entities; ++e) add_entity(e);
  for (std::uint32_t r = 0; r < base_.num_relations; ++r) add_relation(r);
  seal();
}

GrowthState seed_phase(const BaseKg& base, const BuilderConfig& cfg,
                       Rng& rng) {
  cfg.validate();
  const auto k = static_cast<std::size_t>(cfg.seed_facts);
  if (base.facts.size() < k) {
    throw ConfigError(fmt::format("base KG has {} facts, fewer than the {} seed "
                                  "facts requested",
                                  base.facts.size(), k));
  }
  // Partial Fisher-Yates: the first k slots are a uniform sample.
  std::vector<std::size_t> order(base.facts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }
  GrowthState state(base);
  for (std::size_t i = 0; i < k; ++i) state.add_fact(order[i]);
  return state;
}

namespace {

// Compressed incidence lists: facts touching each entity.
struct Incidence {
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> facts;

  std::span<const std::size_t> of(std::uint32_t e) const {
    return std::span(facts).subspan(offsets[e], offsets[e + 1] - offsets[e]);
  }
};

Incidence entity_incidence(const BaseKg& base) {
  Incidence inc;
  inc.offsets.assign(base.num_entities + 1, 0);
  for (const auto& f : base.facts) {
    ++inc.offsets[f.subject.value + 1];
    if (f.object != f.subject) ++inc.offsets[f.object.value + 1];
  }
  std::partial_sum(inc.offsets.begin(), inc.offsets.end(), inc.offsets.begin());
  inc.facts.resize(inc.offsets.back());
  auto cursor = inc.offsets;
  for (std::size_t i = 0; i < base.facts.size(); ++i) {
    const auto& f = base.facts[i];
    inc.facts[cursor[f.subject.value]++] = i;
    if (f.object != f.subject) inc.facts[cursor[f.object.value]++] = i;
  }
  return inc;
}

Incidence relation_incidence(const BaseKg& base) {
  Incidence inc;
  inc.offsets.assign(base.num_relations + 1, 0);
  for (const auto& f : base.facts) ++inc.offsets[f.relation.value + 1];
  std::partial_sum(inc.offsets.begin(), inc.offsets.end(), inc.offsets.begin());
  inc.facts.resize(inc.offsets.back());
  auto cursor = inc.offsets;
  for (std::size_t i = 0; i < base.facts.size(); ++i) {
    inc.facts[cursor[base.facts[i].relation.value]++] = i;
  }
  return inc;
}

// Vector with O(1) insert, membership and swap-removal.
class IndexedPool {
 public:
  explicit IndexedPool(std::size_t universe) : pos_(universe, kAbsent) {}

  bool contains(std::size_t x) const { return pos_[x] != kAbsent; }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  std::size_t operator[](std::size_t i) const { return items_[i]; }

  void insert(std::size_t x) {
    if (contains(x)) return;
    pos_[x] = items_.size();
    items_.push_back(x);
  }

  void erase(std::size_t x) {
    const auto p = pos_[x];
    if (p == kAbsent) return;
    const auto last = items_.back();
    items_[p] = last;
    pos_[last] = p;
    items_.pop_back();
    pos_[x] = kAbsent;
  }

  std::size_t draw(Rng& rng) const {
    return items_[static_cast<std::size_t>(rng.below(items_.size()))];
  }

 private:
  static constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
  std::vector<std::size_t> items_;
  std::vector<std::size_t> pos_;
};

bool quota_met(const GrowthState& s, GrowthVariant v, int i, int n) {
  const auto& base = s.base();
  const auto ii = static_cast<std::uint64_t>(i);
  const auto nn = static_cast<std::uint64_t>(n);
  switch (v) {
    case GrowthVariant::entity:
      return nn * s.num_seen_entities() >= ii * base.num_entities;
    case GrowthVariant::relation:
      return nn * s.num_seen_relations() >= ii * base.num_relations;
    case GrowthVariant::fact:
      return nn * s.num_included_facts() >= ii * base.facts.size();
    case GrowthVariant::hybrid:
      break;
  }
  throw ContractError("quota_met called for the hybrid variant");
}

}  // namespace

void expand_centric(GrowthState& state, const BuilderConfig& cfg, Rng& rng) {
  if (cfg.variant == GrowthVariant::hybrid) {
    throw ConfigError("expand_centric does not build the hybrid variant");
  }
  const auto& base = state.base();
  const auto inc = entity_incidence(base);
  IndexedPool pool(base.facts.size());

  auto on_new_entity = [&](std::uint32_t e) {
    for (auto f : inc.of(e)) {
      if (!state.fact_included(f)) pool.insert(f);
    }
  };
  for (auto e : state.entity_order()) on_new_entity(e);

  auto include = [&](std::size_t f) {
    pool.erase(f);
    const auto& fact = base.facts[f];
    const bool s_new = !state.entity_seen(fact.subject.value);
    const bool o_new = !state.entity_seen(fact.object.value);
    state.add_fact(f);
    if (s_new) on_new_entity(fact.subject.value);
    if (o_new && fact.object != fact.subject) on_new_entity(fact.object.value);
  };

  const int n = cfg.num_snapshots;
  for (int i = static_cast<int>(state.num_sealed()) + 1; i < n; ++i) {
    while (!quota_met(state, cfg.variant, i, n)) {
      if (pool.empty()) {
        const auto left = base.facts.size() - state.num_included_facts();
        throw BuilderError(fmt::format(
            "snapshot {}: no fact touches a seen entity but the {} quota is "
            "unmet; {} facts and {} entities are disconnected from the "
            "sampled component",
            i, to_string(cfg.variant), left,
            base.num_entities - state.num_seen_entities()));
      }
      include(pool.draw(rng));
    }
    if (cfg.closure()) {
      std::vector<std::size_t> closed;
      for (std::size_t k = 0; k < pool.size(); ++k) {
        const auto& fact = base.facts[pool[k]];
        if (state.entity_seen(fact.subject.value) &&
            state.entity_seen(fact.object.value)) {
          closed.push_back(pool[k]);
        }
      }
      std::sort(closed.begin(), closed.end());
      for (auto f : closed) include(f);
    }
    if (cfg.relation_closure && cfg.variant == GrowthVariant::relation) {
      // Everything reachable through seen relations; new entities bring new
      // candidates, so repeat until nothing is added.
      std::vector<std::size_t> closed;
      do {
        closed.clear();
        for (std::size_t k = 0; k < pool.size(); ++k) {
          if (state.relation_seen(base.facts[pool[k]].relation.value)) {
            closed.push_back(pool[k]);
          }
        }
        std::sort(closed.begin(), closed.end());
        for (auto f : closed) include(f);
      } while (!closed.empty());
    }
    state.seal();
  }
  state.absorb_remaining(rng);
}

namespace {

enum class ItemKind : std::uint8_t { entity, relation, fact };

struct HybridPool {
  // Item codes: entities [0, E), relations [E, E+R), facts [E+R, E+R+T).
  std::uint32_t num_entities;
  std::uint32_t num_relations;

  ItemKind kind(std::size_t code) const {
    if (code < num_entities) return ItemKind::entity;
    if (code < std::size_t{num_entities} + num_relations) {
      return ItemKind::relation;
    }
    return ItemKind::fact;
  }
  std::size_t entity_code(std::uint32_t e) const { return e; }
  std::size_t relation_code(std::uint32_t r) const {
    return std::size_t{num_entities} + r;
  }
  std::size_t fact_code(std::size_t f) const {
    return std::size_t{num_entities} + num_relations + f;
  }
  std::size_t fact_of(std::size_t code) const {
    return code - num_entities - num_relations;
  }
};

// One expansion attempt from the seeded state. Returns deferred draws.
std::size_t hybrid_attempt(GrowthState& state, const BuilderConfig& cfg,
                           Rng& rng, const Incidence& ent_inc,
                           const Incidence& rel_inc) {
  const auto& base = state.base();
  const HybridPool codes{base.num_entities, base.num_relations};
  const std::size_t universe =
      std::size_t{base.num_entities} + base.num_relations + base.facts.size();
  const double stop_p =
      static_cast<double>(cfg.hybrid_stop_numerator) / static_cast<double>(universe);

  IndexedPool pool(universe);
  IndexedPool admissible(base.facts.size());
  std::vector<std::uint8_t> missing(base.facts.size(), 0);
  std::size_t pending_vocab = 0;  // entities + relations still in the pool

  for (std::uint32_t e = 0; e < base.num_entities; ++e) {
    if (!state.entity_seen(e)) {
      pool.insert(codes.entity_code(e));
      ++pending_vocab;
    }
  }
  for (std::uint32_t r = 0; r < base.num_relations; ++r) {
    if (!state.relation_seen(r)) {
      pool.insert(codes.relation_code(r));
      ++pending_vocab;
    }
  }
  for (std::size_t f = 0; f < base.facts.size(); ++f) {
    if (state.fact_included(f)) continue;
    const auto& fact = base.facts[f];
    std::uint8_t m = 0;
    if (!state.entity_seen(fact.subject.value)) ++m;
    if (fact.object != fact.subject && !state.entity_seen(fact.object.value)) {
      ++m;
    }
    if (!state.relation_seen(fact.relation.value)) ++m;
    missing[f] = m;
    pool.insert(codes.fact_code(f));
    if (m == 0) admissible.insert(f);
  }

  auto release = [&](std::span<const std::size_t> facts) {
    for (auto f : facts) {
      if (state.fact_included(f)) continue;
      if (--missing[f] == 0) admissible.insert(f);
    }
  };
  auto include_fact = [&](std::size_t f) {
    pool.erase(codes.fact_code(f));
    admissible.erase(f);
    state.add_fact(f);
  };

  std::size_t deferred = 0;
  const int n = cfg.num_snapshots;
  int open = static_cast<int>(state.num_sealed()) + 1;
  while (open < n && !pool.empty()) {
    const auto code = pool.draw(rng);
    switch (codes.kind(code)) {
      case ItemKind::entity: {
        const auto e = static_cast<std::uint32_t>(code);
        pool.erase(code);
        --pending_vocab;
        state.add_entity(e);
        release(ent_inc.of(e));
        break;
      }
      case ItemKind::relation: {
        const auto r = static_cast<std::uint32_t>(code - base.num_entities);
        pool.erase(code);
        --pending_vocab;
        state.add_relation(r);
        release(rel_inc.of(r));
        break;
      }
      case ItemKind::fact: {
        const auto f = codes.fact_of(code);
        if (missing[f] == 0) {
          include_fact(f);
        } else if (!admissible.empty()) {
          include_fact(admissible.draw(rng));
        } else {
          ++deferred;
          if (pending_vocab == 0) {
            throw BuilderError(
                "hybrid pool holds only inadmissible facts; cannot expand");
          }
        }
        break;
      }
    }
    if (rng.bernoulli(stop_p)) {
      state.seal();
      ++open;
    }
  }
  while (static_cast<int>(state.num_sealed()) < n - 1) state.seal();
  state.absorb_remaining(rng);
  return deferred;
}

}  // namespace

std::size_t expand_hybrid(GrowthState& state, const BuilderConfig& cfg,
                          Rng& rng) {
  if (cfg.variant != GrowthVariant::hybrid) {
    throw ConfigError("expand_hybrid builds only the hybrid variant");
  }
  const auto ent_inc = entity_incidence(state.base());
  const auto rel_inc = relation_incidence(state.base());
  const GrowthState seeded = state;
  for (int attempt = 1; attempt <= cfg.hybrid_max_attempts; ++attempt) {
    state = seeded;
    const auto deferred = hybrid_attempt(state, cfg, rng, ent_inc, rel_inc);
    const auto& deltas = state.deltas();
    const bool all_nonempty = std::all_of(
        deltas.begin(), deltas.end(), [](const auto& d) { return !d.empty(); });
    if (all_nonempty) {
      if (deferred > 0) {
        spdlog::info("hybrid expansion deferred {} inadmissible fact draws",
                     deferred);
      }
      return deferred;
    }
    spdlog::debug("hybrid attempt {} left an empty snapshot; redrawing",
                  attempt);
  }
  throw BuilderError(fmt::format(
      "hybrid expansion produced an empty snapshot in all {} attempts",
      cfg.hybrid_max_attempts));
}

SplitSizes split_sizes(std::size_t n, const std::array<int, 3>& ratio) {
  const auto total = static_cast<std::size_t>(ratio[0] + ratio[1] + ratio[2]);
  if (n < total) return {n, 0, 0};
  SplitSizes s;
  s.valid = n * static_cast<std::size_t>(ratio[1]) / total;
  s.test = n * static_cast<std::size_t>(ratio[2]) / total;
  s.train = n - s.valid - s.test;
  return s;
}

GrowthDataset divide(const GrowthState& state, const KgVocabulary& source,
                     const BuilderConfig& cfg, Rng& rng) {
  const auto& base = state.base();
  std::vector<std::uint32_t> ent_map(base.num_entities, 0);
  std::vector<std::uint32_t> rel_map(base.num_relations, 0);

  GrowthDataset ds;
  for (std::size_t k = 0; k < state.entity_order().size(); ++k) {
    const auto e = state.entity_order()[k];
    ent_map[e] = static_cast<std::uint32_t>(k);
    ds.entity_names.intern(source.entities.name(e));
  }
  for (std::size_t k = 0; k < state.relation_order().size(); ++k) {
    const auto r = state.relation_order()[k];
    rel_map[r] = static_cast<std::uint32_t>(k);
    ds.relation_names.intern(source.relations.name(r));
  }

  const auto total =
      static_cast<std::size_t>(cfg.split_ratio[0] + cfg.split_ratio[1] +
                               cfg.split_ratio[2]);
  for (std::size_t i = 0; i < state.deltas().size(); ++i) {
    std::vector<Fact> delta;
    delta.reserve(state.deltas()[i].size());
    for (auto f : state.deltas()[i]) {
      const auto& fact = base.facts[f];
      delta.push_back({EntityId(ent_map[fact.subject.value]),
                       RelationId(rel_map[fact.relation.value]),
                       EntityId(ent_map[fact.object.value])});
    }
    rng.shuffle(std::span(delta));
    if (delta.size() < total) {
      spdlog::warn("snapshot {} has only {} new facts; all go to training",
                   i + 1, delta.size());
    }
    const auto sizes = split_sizes(delta.size(), cfg.split_ratio);
    Snapshot snap;
    snap.index = static_cast<int>(i) + 1;
    const auto train_end = delta.begin() + static_cast<std::ptrdiff_t>(sizes.train);
    const auto valid_end = train_end + static_cast<std::ptrdiff_t>(sizes.valid);
    snap.train.assign(delta.begin(), train_end);
    snap.valid.assign(train_end, valid_end);
    snap.test.assign(valid_end, delta.end());
    snap.num_entities = state.entities_at_seal()[i];
    snap.num_relations = state.relations_at_seal()[i];
    ds.snapshots.push_back(std::move(snap));
  }

  ds.build.variant = std::string(to_string(cfg.variant));
  ds.build.seed = cfg.seed;
  ds.build.num_snapshots = cfg.num_snapshots;
  ds.build.split_ratio.assign(cfg.split_ratio.begin(), cfg.split_ratio.end());
  ds.build.seed_facts = cfg.seed_facts;
  ds.build.hybrid_stop_numerator = cfg.hybrid_stop_numerator;
  ds.build.closure_on_quota = cfg.closure();
  ds.build.relation_closure = cfg.relation_closure;
  ds.validate();
  return ds;
}

GrowthDataset build_dataset(std::span<const Fact> facts,
                            const KgVocabulary& vocab,
                            const BuilderConfig& cfg) {
  cfg.validate();
  const BaseKg base{facts, static_cast<std::uint32_t>(vocab.entities.size()),
                    static_cast<std::uint32_t>(vocab.relations.size())};
  Rng rng(cfg.seed);
  auto state = seed_phase(base, cfg, rng);
  if (cfg.variant == GrowthVariant::hybrid) {
    expand_hybrid(state, cfg, rng);
  } else {
    expand_centric(state, cfg, rng);
  }
  return divide(state, vocab, cfg, rng);
}

Subsample subsample_entities(std::span<const Fact> facts,
                             const KgVocabulary& vocab,
                             std::size_t target_entities, Rng& rng) {
  const BaseKg base{facts, static_cast<std::uint32_t>(vocab.entities.size()),
                    static_cast<std::uint32_t>(vocab.relations.size())};
  const auto inc = entity_incidence(base);
  std::vector<char> picked(base.num_entities, 0);
  std::vector<std::uint32_t> chosen;
  // Frontier entries are drawn at random so the sample is not a pure BFS
  // ball around the start entity.
  IndexedPool frontier(base.num_entities);
  while (chosen.size() < std::min<std::size_t>(target_entities,
                                               base.num_entities)) {
    if (frontier.empty()) {
      std::vector<std::uint32_t> rest;
      for (std::uint32_t e = 0; e < base.num_entities; ++e) {
        if (!picked[e]) rest.push_back(e);
      }
      frontier.insert(rest[static_cast<std::size_t>(rng.below(rest.size()))]);
    }
    const auto e = static_cast<std::uint32_t>(frontier.draw(rng));
    frontier.erase(e);
    picked[e] = 1;
    chosen.push_back(e);
    for (auto f : inc.of(e)) {
      const auto& fact = facts[f];
      for (auto other : {fact.subject.value, fact.object.value}) {
        if (!picked[other]) frontier.insert(other);
      }
    }
  }

  // Entities left without an induced fact are dropped, so the result matches
  // what load_triples would intern from the written file.
  Subsample out;
  for (const auto& f : facts) {
    if (!picked[f.subject.value] || !picked[f.object.value]) continue;
    const auto s = out.vocab.entities.intern(vocab.entities.name(f.subject.value));
    const auto r =
        out.vocab.relations.intern(vocab.relations.name(f.relation.value));
    const auto o = out.vocab.entities.intern(vocab.entities.name(f.object.value));
    out.facts.push_back({EntityId(s), RelationId(r), EntityId(o)});
  }
  return out;
}

}  // namespace lkge
