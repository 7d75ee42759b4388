#include "lkge/lkge.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

#include "lkge/error.hpp"

namespace lkge {

namespace {

std::int64_t at_or_zero(const std::vector<std::int64_t>& v, std::size_t i) {
  return i < v.size() ? v[i] : 0;
}

void axpy(std::span<double> y, std::span<const double> x, double a) {
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += a * x[k];
}

}  // namespace

void FactLedger::transition(std::span<const Fact> train,
                            std::size_t num_entities,
                            std::size_t num_relations) {
  entity_prev.resize(std::max(entity_prev.size(), num_entities), 0);
  entity_curr.resize(entity_prev.size(), 0);
  relation_prev.resize(std::max(relation_prev.size(), num_relations), 0);
  relation_curr.resize(relation_prev.size(), 0);
  for (std::size_t i = 0; i < entity_prev.size(); ++i) {
    entity_prev[i] += entity_curr[i];
    entity_curr[i] = 0;
  }
  for (std::size_t i = 0; i < relation_prev.size(); ++i) {
    relation_prev[i] += relation_curr[i];
    relation_curr[i] = 0;
  }
  for (const auto& f : train) {
    if (f.subject.index() >= entity_curr.size() ||
        f.object.index() >= entity_curr.size() ||
        f.relation.index() >= relation_curr.size()) {
      throw BoundsError("ledger transition: fact outside the vocabulary");
    }
    ++entity_curr[f.subject.index()];
    if (f.object != f.subject) ++entity_curr[f.object.index()];
    ++relation_curr[f.relation.index()];
  }
}

std::int64_t FactLedger::entity_previous(EntityId e) const {
  return at_or_zero(entity_prev, e.index());
}
std::int64_t FactLedger::entity_current(EntityId e) const {
  return at_or_zero(entity_curr, e.index());
}
std::int64_t FactLedger::relation_previous(RelationId r) const {
  return at_or_zero(relation_prev, r.index());
}
std::int64_t FactLedger::relation_current(RelationId r) const {
  return at_or_zero(relation_curr, r.index());
}

Neighborhoods::Neighborhoods(std::span<const Fact> facts,
                             std::size_t num_entities,
                             std::size_t num_relations)
    : facts_(facts.begin(), facts.end()) {
  ent_offsets_.assign(num_entities + 1, 0);
  rel_offsets_.assign(num_relations + 1, 0);
  for (const auto& f : facts_) {
    if (f.subject.index() >= num_entities || f.object.index() >= num_entities ||
        f.relation.index() >= num_relations) {
      throw BoundsError("neighborhood index: fact outside the vocabulary");
    }
    ++ent_offsets_[f.subject.index() + 1];
    if (f.object != f.subject) ++ent_offsets_[f.object.index() + 1];
    ++rel_offsets_[f.relation.index() + 1];
  }
  std::partial_sum(ent_offsets_.begin(), ent_offsets_.end(),
                   ent_offsets_.begin());
  std::partial_sum(rel_offsets_.begin(), rel_offsets_.end(),
                   rel_offsets_.begin());
  ent_incident_.resize(ent_offsets_.back());
  rel_incident_.resize(rel_offsets_.back());
  auto ent_cursor = ent_offsets_;
  auto rel_cursor = rel_offsets_;
  for (std::size_t i = 0; i < facts_.size(); ++i) {
    const auto& f = facts_[i];
    const auto idx = static_cast<std::uint32_t>(i);
    ent_incident_[ent_cursor[f.subject.index()]++] = {idx, true};
    if (f.object != f.subject) {
      ent_incident_[ent_cursor[f.object.index()]++] = {idx, false};
    }
    rel_incident_[rel_cursor[f.relation.index()]++] = idx;
  }
}

std::span<const Neighborhoods::Incident> Neighborhoods::entity(
    std::size_t e) const {
  if (e + 1 >= ent_offsets_.size()) return {};
  return std::span(ent_incident_)
      .subspan(ent_offsets_[e], ent_offsets_[e + 1] - ent_offsets_[e]);
}

std::span<const std::uint32_t> Neighborhoods::relation(std::size_t r) const {
  if (r + 1 >= rel_offsets_.size()) return {};
  return std::span(rel_incident_)
      .subspan(rel_offsets_[r], rel_offsets_[r + 1] - rel_offsets_[r]);
}

std::vector<Fact> Neighborhoods::entity_facts(std::size_t e) const {
  std::vector<Fact> out;
  for (const auto& inc : entity(e)) out.push_back(facts_[inc.fact]);
  return out;
}

std::vector<Fact> Neighborhoods::relation_facts(std::size_t r) const {
  std::vector<Fact> out;
  for (auto idx : relation(r)) out.push_back(facts_[idx]);
  return out;
}

void LkgeConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0) {
    throw ConfigError("alpha and beta must be non-negative");
  }
  if (!(margin > 0.0)) throw ConfigError("margin must be positive");
}

namespace {

// Frozen row of an item, or nothing when the item is new.
std::span<const double> frozen_row(const EmbeddingTable& prev, std::size_t i) {
  if (i < prev.rows()) return prev.row(i);
  return {};
}

}  // namespace

Vector reconstruct_entity(EntityId e, std::span<const Fact> facts,
                          const EmbeddingState& st, const FactLedger& ledger,
                          bool subject_only) {
  const std::size_t d = st.dim;
  Vector acc(d, 0.0);
  std::int64_t used = 0;
  for (const auto& f : facts) {
    if (f.subject == e) {
      const auto r = st.relation(f.relation);
      const auto o = st.entity(f.object);
      for (std::size_t k = 0; k < d; ++k) acc[k] += o[k] - r[k];
    } else if (f.object == e) {
      if (subject_only) continue;
      const auto s = st.entity(f.subject);
      const auto r = st.relation(f.relation);
      for (std::size_t k = 0; k < d; ++k) acc[k] += s[k] + r[k];
    } else {
      throw ContractError(fmt::format(
          "reconstruct_entity: fact ({}, {}, {}) does not contain entity {}",
          f.subject.value, f.relation.value, f.object.value, e.value));
    }
    ++used;
  }
  const auto prev = ledger.entity_previous(e);
  const auto denom = prev + used;
  if (denom == 0) {
    throw UndefinedError(
        fmt::format("entity {} has no facts to reconstruct from", e.value));
  }
  if (prev > 0) {
    const auto old = frozen_row(st.prev_entities, e.index());
    if (old.empty()) {
      throw ContractError(fmt::format(
          "entity {} has a fact history but no frozen embedding", e.value));
    }
    axpy(acc, old, static_cast<double>(prev));
  }
  for (auto& x : acc) x /= static_cast<double>(denom);
  return acc;
}

Vector reconstruct_relation(RelationId r, std::span<const Fact> facts,
                            const EmbeddingState& st,
                            const FactLedger& ledger) {
  const std::size_t d = st.dim;
  Vector acc(d, 0.0);
  for (const auto& f : facts) {
    if (f.relation != r) {
      throw ContractError(fmt::format(
          "reconstruct_relation: fact does not contain relation {}", r.value));
    }
    const auto s = st.entity(f.subject);
    const auto o = st.entity(f.object);
    for (std::size_t k = 0; k < d; ++k) acc[k] += o[k] - s[k];
  }
  const auto prev = ledger.relation_previous(r);
  const auto denom = prev + static_cast<std::int64_t>(facts.size());
  if (denom == 0) {
    throw UndefinedError(
        fmt::format("relation {} has no facts to reconstruct from", r.value));
  }
  if (prev > 0) {
    const auto old = frozen_row(st.prev_relations, r.index());
    if (old.empty()) {
      throw ContractError(fmt::format(
          "relation {} has a fact history but no frozen embedding", r.value));
    }
    axpy(acc, old, static_cast<double>(prev));
  }
  for (auto& x : acc) x /= static_cast<double>(denom);
  return acc;
}

ItemScope ItemScope::of_batch(std::span<const Fact> facts) {
  ItemScope scope;
  for (const auto& f : facts) {
    scope.entities.push_back(f.subject.value);
    scope.entities.push_back(f.object.value);
    scope.relations.push_back(f.relation.value);
  }
  for (auto* v : {&scope.entities, &scope.relations}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  return scope;
}

namespace {

template <typename Fn>
void for_each_item(std::size_t count, const std::vector<std::uint32_t>* subset,
                   Fn&& fn) {
  if (subset) {
    for (auto i : *subset) {
      if (i < count) fn(static_cast<std::size_t>(i));
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) fn(i);
  }
}

}  // namespace

double mae_loss(const Neighborhoods& nb, const EmbeddingState& st,
                const FactLedger& ledger, const LkgeConfig& cfg,
                GradientBuffer* grads, double scale, const ItemScope* scope) {
  const std::size_t d = st.dim;
  const auto facts = nb.facts();
  const bool push_through = grads && !cfg.detach_reconstruction;
  Vector recon(d);
  Vector resid(d);
  double loss = 0.0;

  for_each_item(st.num_entities(), scope ? &scope->entities : nullptr,
                [&](std::size_t e) {
    const auto incident = nb.entity(e);
    std::fill(recon.begin(), recon.end(), 0.0);
    std::int64_t used = 0;
    for (const auto& inc : incident) {
      const auto& f = facts[inc.fact];
      const auto r = st.relations.row(f.relation.index());
      if (inc.as_subject) {
        const auto o = st.entities.row(f.object.index());
        for (std::size_t k = 0; k < d; ++k) recon[k] += o[k] - r[k];
      } else {
        if (cfg.subject_only_reconstruction) continue;
        const auto s = st.entities.row(f.subject.index());
        for (std::size_t k = 0; k < d; ++k) recon[k] += s[k] + r[k];
      }
      ++used;
    }
    const auto prev = at_or_zero(ledger.entity_prev, e);
    const auto denom = prev + used;
    if (denom == 0) return;
    if (prev > 0) {
      if (e >= st.prev_entities.rows()) {
        throw ContractError(fmt::format(
            "entity {} has {} earlier facts but no frozen embedding", e, prev));
      }
      axpy(recon, st.prev_entities.row(e), static_cast<double>(prev));
    }
    const double inv = 1.0 / static_cast<double>(denom);
    const auto x = st.entities.row(e);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      resid[k] = x[k] - recon[k] * inv;
      sq += resid[k] * resid[k];
    }
    loss += sq;
    if (!grads) return;
    grads->add_entity(e, resid, 2.0 * scale);
    if (!push_through) return;
    const double w = 2.0 * scale * inv;
    for (const auto& inc : incident) {
      const auto& f = facts[inc.fact];
      if (inc.as_subject) {
        grads->add_entity(f.object.index(), resid, -w);
        grads->add_relation(f.relation.index(), resid, w);
      } else {
        if (cfg.subject_only_reconstruction) continue;
        grads->add_entity(f.subject.index(), resid, -w);
        grads->add_relation(f.relation.index(), resid, -w);
      }
    }
  });

  for_each_item(st.num_relations(), scope ? &scope->relations : nullptr,
                [&](std::size_t r) {
    const auto incident = nb.relation(r);
    std::fill(recon.begin(), recon.end(), 0.0);
    for (auto idx : incident) {
      const auto& f = facts[idx];
      const auto s = st.entities.row(f.subject.index());
      const auto o = st.entities.row(f.object.index());
      for (std::size_t k = 0; k < d; ++k) recon[k] += o[k] - s[k];
    }
    const auto prev = at_or_zero(ledger.relation_prev, r);
    const auto denom = prev + static_cast<std::int64_t>(incident.size());
    if (denom == 0) return;
    if (prev > 0) {
      if (r >= st.prev_relations.rows()) {
        throw ContractError(fmt::format(
            "relation {} has {} earlier facts but no frozen embedding", r, prev));
      }
      axpy(recon, st.prev_relations.row(r), static_cast<double>(prev));
    }
    const double inv = 1.0 / static_cast<double>(denom);
    const auto x = st.relations.row(r);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      resid[k] = x[k] - recon[k] * inv;
      sq += resid[k] * resid[k];
    }
    loss += sq;
    if (!grads) return;
    grads->add_relation(r, resid, 2.0 * scale);
    if (!push_through) return;
    const double w = 2.0 * scale * inv;
    for (auto idx : incident) {
      const auto& f = facts[idx];
      grads->add_entity(f.object.index(), resid, -w);
      grads->add_entity(f.subject.index(), resid, w);
    }
  });
  return loss;
}

std::optional<Vector> transfer_entity_init(EntityId e,
                                           std::span<const Fact> facts,
                                           const EmbeddingState& st) {
  const auto& pe = st.prev_entities;
  const auto& pr = st.prev_relations;
  Vector acc(st.dim, 0.0);
  std::size_t used = 0;
  for (const auto& f : facts) {
    if (f.relation.index() >= pr.rows()) continue;
    const auto r = pr.row(f.relation.index());
    if (f.subject == e) {
      if (f.object.index() >= pe.rows()) continue;
      const auto o = pe.row(f.object.index());
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += o[k] - r[k];
    } else if (f.object == e) {
      if (f.subject.index() >= pe.rows()) continue;
      const auto s = pe.row(f.subject.index());
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += s[k] + r[k];
    } else {
      continue;
    }
    ++used;
  }
  if (used == 0) return std::nullopt;
  for (auto& x : acc) x /= static_cast<double>(used);
  return acc;
}

std::optional<Vector> transfer_relation_init(RelationId r,
                                             std::span<const Fact> facts,
                                             const EmbeddingState& st) {
  const auto& pe = st.prev_entities;
  Vector acc(st.dim, 0.0);
  std::size_t used = 0;
  for (const auto& f : facts) {
    if (f.relation != r) continue;
    if (f.subject.index() >= pe.rows() || f.object.index() >= pe.rows()) {
      continue;
    }
    const auto s = pe.row(f.subject.index());
    const auto o = pe.row(f.object.index());
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += o[k] - s[k];
    ++used;
  }
  if (used == 0) return std::nullopt;
  for (auto& x : acc) x /= static_cast<double>(used);
  return acc;
}

double reg_weight(std::int64_t prev_count, std::int64_t curr_count) {
  if (prev_count < 0 || curr_count < 0) {
    throw ContractError("fact counts must be non-negative");
  }
  const auto total = prev_count + curr_count;
  if (total == 0) {
    throw UndefinedError("regularization weight of an item with no facts");
  }
  return 1.0 - static_cast<double>(curr_count) / static_cast<double>(total);
}

double reg_loss(const EmbeddingState& st, const FactLedger& ledger,
                GradientBuffer* grads, double scale, const ItemScope* scope) {
  const std::size_t d = st.dim;
  Vector diff(d);
  double loss = 0.0;

  auto term = [&](std::span<const double> cur, std::span<const double> old,
                  double w) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      diff[k] = cur[k] - old[k];
      sq += diff[k] * diff[k];
    }
    return w * sq;
  };

  for_each_item(st.prev_entities.rows(), scope ? &scope->entities : nullptr,
                [&](std::size_t e) {
    const auto prev = at_or_zero(ledger.entity_prev, e);
    const auto curr = at_or_zero(ledger.entity_curr, e);
    if (prev + curr == 0) return;
    const double w = reg_weight(prev, curr);
    if (w == 0.0) return;
    loss += term(st.entities.row(e), st.prev_entities.row(e), w);
    if (grads) grads->add_entity(e, diff, 2.0 * w * scale);
  });
  for_each_item(st.prev_relations.rows(), scope ? &scope->relations : nullptr,
                [&](std::size_t r) {
    const auto prev = at_or_zero(ledger.relation_prev, r);
    const auto curr = at_or_zero(ledger.relation_curr, r);
    if (prev + curr == 0) return;
    const double w = reg_weight(prev, curr);
    if (w == 0.0) return;
    loss += term(st.relations.row(r), st.prev_relations.row(r), w);
    if (grads) grads->add_relation(r, diff, 2.0 * w * scale);
  });
  return loss;
}

LossBreakdown total_loss(std::span<const std::pair<Fact, Fact>> batch,
                         const EmbeddingState& st, const FactLedger& ledger,
                         const Neighborhoods& nb, const LkgeConfig& cfg,
                         GradientBuffer* grads, Norm norm) {
  LossBreakdown out;
  for (const auto& [pos, neg] : batch) {
    out.new_facts += margin_loss(pos, neg, cfg.margin, st, grads, norm);
  }

  std::optional<ItemScope> scope;
  if (cfg.loss_scope == LossScope::batch) {
    std::vector<Fact> touched;
    touched.reserve(batch.size() * 2);
    for (const auto& [pos, neg] : batch) {
      touched.push_back(pos);
      touched.push_back(neg);
    }
    scope = ItemScope::of_batch(touched);
  }
  const ItemScope* sp = scope ? &*scope : nullptr;

  if (cfg.use_regularization && cfg.alpha > 0.0) {
    out.old = reg_loss(st, ledger, grads, cfg.alpha, sp);
  }
  if (cfg.use_autoencoder && cfg.beta > 0.0) {
    out.mae = mae_loss(nb, st, ledger, cfg, grads, cfg.beta, sp);
  }
  out.total = out.new_facts + cfg.alpha * out.old + cfg.beta * out.mae;
  return out;
}

ExtensionStats extend_tables(EmbeddingState& st, std::size_t num_entities,
                             std::size_t num_relations,
                             const Neighborhoods* nb, bool use_transfer,
                             Rng& rng) {
  ExtensionStats stats;
  const std::size_t old_e = st.entities.rows();
  const std::size_t old_r = st.relations.rows();
  st.entities.grow(std::max(old_e, num_entities));
  st.relations.grow(std::max(old_r, num_relations));
  const bool transfer = use_transfer && nb != nullptr;

  for (std::size_t e = old_e; e < st.entities.rows(); ++e) {
    std::optional<Vector> init;
    if (transfer) {
      init = transfer_entity_init(EntityId(static_cast<std::uint32_t>(e)),
                                  nb->entity_facts(e), st);
    }
    if (init) {
      std::copy(init->begin(), init->end(), st.entities.row(e).begin());
      ++stats.transferred_entities;
    } else {
      init_vector(st.entities.row(e), rng);
      ++stats.random_entities;
    }
  }
  for (std::size_t r = old_r; r < st.relations.rows(); ++r) {
    std::optional<Vector> init;
    if (transfer) {
      init = transfer_relation_init(RelationId(static_cast<std::uint32_t>(r)),
                                    nb->relation_facts(r), st);
    }
    if (init) {
      std::copy(init->begin(), init->end(), st.relations.row(r).begin());
      ++stats.transferred_relations;
    } else {
      init_vector(st.relations.row(r), rng);
      ++stats.random_relations;
    }
  }
  return stats;
}

}  // namespace lkge
