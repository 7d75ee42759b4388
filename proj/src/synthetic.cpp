#include "lkge/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "lkge/error.hpp"
#include "lkge/rng.hpp"

namespace lkge {

void SyntheticConfig::validate() const {
  if (num_entities < 2) throw ConfigError("synthetic KG needs >= 2 entities");
  if (num_relations < 1) throw ConfigError("synthetic KG needs >= 1 relation");
  if (num_types < 1 || num_types > num_entities) {
    throw ConfigError("num_types must be in [1, num_entities]");
  }
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (max_objects < 1) throw ConfigError("max_objects must be >= 1");
  if (noise < 0.0 || noise > 1.0) throw ConfigError("noise must be in [0, 1]");
  if (attribute_fraction < 0.0 || attribute_fraction > 1.0) {
    throw ConfigError("attribute_fraction must be in [0, 1]");
  }
  if (max_attribute_values < 2) throw ConfigError("max_attribute_values must be >= 2");
  if (zipf_exponent < 0.0 || relation_zipf_exponent < 0.0) {
    throw ConfigError("zipf exponents must be >= 0");
  }
}

namespace {

// Members with unnormalized Zipf weights in member order.
struct TypeClass {
  std::vector<std::uint32_t> members;
  std::vector<double> cumulative;

  void set_zipf(double exponent) {
    cumulative.clear();
    double acc = 0.0;
    for (std::size_t rank = 0; rank < members.size(); ++rank) {
      acc += 1.0 / std::pow(static_cast<double>(rank + 1), exponent);
      cumulative.push_back(acc);
    }
  }

  std::uint32_t draw(Rng& rng) const {
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const auto k = std::min<std::size_t>(
        static_cast<std::size_t>(it - cumulative.begin()), members.size() - 1);
    return members[k];
  }
};

struct PlantedRelation {
  std::uint32_t domain;
  std::uint32_t range;
  std::uint32_t objects;
  std::vector<double> translation;  // unit projection axis for attributes
  std::vector<std::uint32_t> values;  // non-empty for attribute relations
};

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

SyntheticKg generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t k = cfg.latent_dim;

  std::vector<double> latent(static_cast<std::size_t>(cfg.num_entities) * k);
  for (auto& x : latent) x = rng.normal();
  auto z = [&](std::uint32_t e) { return latent.data() + std::size_t{e} * k; };

  // Round-robin types keep every class non-empty; popularity order is random.
  std::vector<TypeClass> types(cfg.num_types);
  for (std::uint32_t e = 0; e < cfg.num_entities; ++e) {
    types[e % cfg.num_types].members.push_back(e);
  }
  for (auto& t : types) {
    rng.shuffle(std::span(t.members));
    t.set_zipf(cfg.zipf_exponent);
  }

  std::vector<PlantedRelation> relations(cfg.num_relations);
  for (auto& r : relations) {
    r.domain = static_cast<std::uint32_t>(rng.below(cfg.num_types));
    r.range = static_cast<std::uint32_t>(rng.below(cfg.num_types));
    r.objects = 1 + static_cast<std::uint32_t>(rng.below(cfg.max_objects));
    r.translation.resize(k);
    for (auto& x : r.translation) x = rng.normal();
    if (rng.bernoulli(cfg.attribute_fraction)) {
      double norm = 0.0;
      for (auto x : r.translation) norm += x * x;
      norm = std::sqrt(norm);
      for (auto& x : r.translation) x /= norm;
      const auto& pool = types[r.range].members;
      const auto count = std::min<std::size_t>(
          pool.size(), 2 + rng.below(cfg.max_attribute_values - 1));
      while (r.values.size() < count) {
        const auto v = pool[rng.below(pool.size())];
        if (std::find(r.values.begin(), r.values.end(), v) == r.values.end()) {
          r.values.push_back(v);
        }
      }
    }
  }
  TypeClass relation_popularity;
  for (std::uint32_t r = 0; r < cfg.num_relations; ++r) {
    relation_popularity.members.push_back(r);
  }
  relation_popularity.set_zipf(cfg.relation_zipf_exponent);

  std::unordered_set<Fact, FactHash> seen;
  std::unordered_set<std::uint64_t> pairs;
  std::vector<Fact> raw;
  std::vector<double> point(k);
  std::vector<std::pair<double, std::uint32_t>> nearest;
  const std::size_t max_draws = cfg.num_facts * 50 + 1000;

  for (std::size_t draw = 0; draw < max_draws && raw.size() < cfg.num_facts;
       ++draw) {
    const auto ri = relation_popularity.draw(rng);
    const auto& rel = relations[ri];
    const auto s = types[rel.domain].draw(rng);
    if (!pairs.insert((std::uint64_t{s} << 32) | ri).second) continue;

    const auto* zs = z(s);
    if (!rel.values.empty()) {
      // Latent coordinates are standard normal, so the projection is too and
      // its CDF spreads subjects evenly over the values.
      double proj = 0.0;
      for (std::size_t j = 0; j < k; ++j) proj += zs[j] * rel.translation[j];
      const auto bucket = std::min<std::size_t>(
          static_cast<std::size_t>(normal_cdf(proj) * static_cast<double>(rel.values.size())),
          rel.values.size() - 1);
      const auto o = rel.values[bucket];
      if (o == s || rng.bernoulli(cfg.noise)) continue;
      const Fact f{EntityId(s), RelationId(ri), EntityId(o)};
      if (seen.insert(f).second) raw.push_back(f);
      continue;
    }
    for (std::size_t j = 0; j < k; ++j) point[j] = zs[j] + rel.translation[j];
    nearest.clear();
    for (auto o : types[rel.range].members) {
      if (o == s) continue;
      const auto* zo = z(o);
      double d = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double diff = point[j] - zo[j];
        d += diff * diff;
      }
      nearest.emplace_back(d, o);
    }
    if (nearest.empty()) continue;
    const auto m = std::min<std::size_t>(rel.objects, nearest.size());
    std::partial_sort(nearest.begin(), nearest.begin() + static_cast<std::ptrdiff_t>(m),
                      nearest.end());
    for (std::size_t j = 0; j < m && raw.size() < cfg.num_facts; ++j) {
      auto o = nearest[j].second;
      if (rng.bernoulli(cfg.noise)) {
        o = types[rel.range].members[rng.below(types[rel.range].members.size())];
        if (o == s) continue;
      }
      const Fact f{EntityId(s), RelationId(ri), EntityId(o)};
      if (seen.insert(f).second) raw.push_back(f);
    }
  }

  // Intern in order of first appearance so isolated entities never enter the
  // vocabulary.
  SyntheticKg out;
  out.facts.reserve(raw.size());
  for (const auto& f : raw) {
    const auto s = out.vocab.entities.intern(fmt::format("e{}", f.subject.value));
    const auto r = out.vocab.relations.intern(fmt::format("r{}", f.relation.value));
    const auto o = out.vocab.entities.intern(fmt::format("e{}", f.object.value));
    out.facts.push_back({EntityId(s), RelationId(r), EntityId(o)});
  }
  return out;
}

}  // namespace lkge
