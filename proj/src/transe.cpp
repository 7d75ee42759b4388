#include "lkge/transe.hpp"

#include <fmt/format.h>

#include <cmath>

#include "lkge/error.hpp"

namespace lkge {

void EmbeddingTable::grow(std::size_t rows) {
  if (rows < rows_) {
    throw ContractError(
        fmt::format("embedding table cannot shrink from {} to {} rows", rows_,
                    rows));
  }
  rows_ = rows;
  data_.resize(rows * dim_, 0.0);
}

std::span<const double> EmbeddingState::entity(EntityId e) const {
  if (e.index() >= entities.rows()) {
    throw BoundsError(fmt::format("entity {} out of range ({} rows)", e.value,
                                  entities.rows()));
  }
  return entities.row(e.index());
}

std::span<const double> EmbeddingState::relation(RelationId r) const {
  if (r.index() >= relations.rows()) {
    throw BoundsError(fmt::format("relation {} out of range ({} rows)",
                                  r.value, relations.rows()));
  }
  return relations.row(r.index());
}

void EmbeddingState::freeze() {
  prev_entities = entities;
  prev_relations = relations;
}

double init_bound(std::size_t dim) {
  return 6.0 / std::sqrt(static_cast<double>(dim));
}

void init_vector(std::span<double> out, Rng& rng) {
  const double b = init_bound(out.size());
  for (auto& x : out) x = rng.uniform(-b, b);
}

void init_rows(EmbeddingTable& table, std::size_t first, Rng& rng) {
  for (std::size_t r = first; r < table.rows(); ++r) init_vector(table.row(r), rng);
}

double dissimilarity(std::span<const double> s, std::span<const double> r,
                     std::span<const double> o, Norm norm) {
  if (s.size() != r.size() || s.size() != o.size()) {
    throw ShapeError("dissimilarity: vectors differ in dimension");
  }
  double acc = 0.0;
  if (norm == Norm::l2) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double d = s[k] + r[k] - o[k];
      acc += d * d;
    }
    return std::sqrt(acc);
  }
  for (std::size_t k = 0; k < s.size(); ++k) acc += std::abs(s[k] + r[k] - o[k]);
  return acc;
}

double dissimilarity(const EmbeddingState& st, const Fact& f, Norm norm) {
  return dissimilarity(st.entity(f.subject), st.relation(f.relation),
                       st.entity(f.object), norm);
}

namespace {

Vector difference(std::span<const double> minuend,
                  std::span<const double> subtrahend, const char* what) {
  if (minuend.size() != subtrahend.size()) {
    throw ShapeError(fmt::format("{}: dimension mismatch ({} vs {})", what,
                                 subtrahend.size(), minuend.size()));
  }
  Vector out(minuend.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = minuend[k] - subtrahend[k];
  return out;
}

}  // namespace

Vector f_sub(std::span<const double> r, std::span<const double> o) {
  return difference(o, r, "f_sub");
}

Vector f_rel(std::span<const double> s, std::span<const double> o) {
  return difference(o, s, "f_rel");
}

Fact negative_sample(const Fact& fact, std::uint32_t num_entities, Rng& rng) {
  if (num_entities == 0) throw ContractError("negative_sample: no entities");
  Fact neg = fact;
  const bool replace_subject = rng.bernoulli(0.5);
  const EntityId e(static_cast<std::uint32_t>(rng.below(num_entities)));
  if (replace_subject) {
    neg.subject = e;
  } else {
    neg.object = e;
  }
  return neg;
}

GradientBuffer::GradientBuffer(std::size_t num_entities,
                               std::size_t num_relations, std::size_t dim) {
  resize(num_entities, num_relations, dim);
}

void GradientBuffer::resize(std::size_t num_entities,
                            std::size_t num_relations, std::size_t dim) {
  entity_grad_ = EmbeddingTable(num_entities, dim);
  relation_grad_ = EmbeddingTable(num_relations, dim);
  entity_mark_.assign(num_entities, 0);
  relation_mark_.assign(num_relations, 0);
  touched_entities_.clear();
  touched_relations_.clear();
}

void GradientBuffer::clear() {
  for (auto r : touched_entities_) {
    for (auto& x : entity_grad_.row(r)) x = 0.0;
    entity_mark_[r] = 0;
  }
  for (auto r : touched_relations_) {
    for (auto& x : relation_grad_.row(r)) x = 0.0;
    relation_mark_[r] = 0;
  }
  touched_entities_.clear();
  touched_relations_.clear();
}

std::span<double> GradientBuffer::entity(std::size_t row) {
  if (!entity_mark_[row]) {
    entity_mark_[row] = 1;
    touched_entities_.push_back(static_cast<std::uint32_t>(row));
  }
  return entity_grad_.row(row);
}

std::span<double> GradientBuffer::relation(std::size_t row) {
  if (!relation_mark_[row]) {
    relation_mark_[row] = 1;
    touched_relations_.push_back(static_cast<std::uint32_t>(row));
  }
  return relation_grad_.row(row);
}

void GradientBuffer::add_entity(std::size_t row, std::span<const double> v,
                                double scale) {
  auto g = entity(row);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] += scale * v[k];
}

void GradientBuffer::add_relation(std::size_t row, std::span<const double> v,
                                  double scale) {
  auto g = relation(row);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] += scale * v[k];
}

namespace {

// Residual s + r - o and the gradient of its norm with respect to it.
// The L2 gradient at the origin is defined as zero; L1 uses sign().
double residual_and_direction(const EmbeddingState& st, const Fact& f,
                              Norm norm, Vector& dir) {
  const auto s = st.entity(f.subject);
  const auto r = st.relation(f.relation);
  const auto o = st.entity(f.object);
  const std::size_t d = s.size();
  dir.resize(d);
  double value = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    dir[k] = s[k] + r[k] - o[k];
    value += norm == Norm::l2 ? dir[k] * dir[k] : std::abs(dir[k]);
  }
  if (norm == Norm::l2) {
    value = std::sqrt(value);
    const double inv = value > 0.0 ? 1.0 / value : 0.0;
    for (auto& x : dir) x *= inv;
  } else {
    for (auto& x : dir) x = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  }
  return value;
}

void accumulate_fact(GradientBuffer& g, const Fact& f,
                     std::span<const double> dir, double scale) {
  g.add_entity(f.subject.index(), dir, scale);
  g.add_relation(f.relation.index(), dir, scale);
  g.add_entity(f.object.index(), dir, -scale);
}

}  // namespace

double margin_loss(const Fact& pos, const Fact& neg, double margin,
                   const EmbeddingState& st, GradientBuffer* grads, Norm norm,
                   double scale) {
  thread_local Vector pos_dir, neg_dir;
  const double fp = residual_and_direction(st, pos, norm, pos_dir);
  const double fn = residual_and_direction(st, neg, norm, neg_dir);
  const double slack = margin + fp - fn;
  // The kink itself (slack == 0) takes the zero subgradient.
  if (slack <= 0.0) return 0.0;
  if (grads) {
    accumulate_fact(*grads, pos, pos_dir, scale);
    accumulate_fact(*grads, neg, neg_dir, -scale);
  }
  return slack;
}

SparseAdam::SparseAdam(AdamConfig cfg, std::size_t dim)
    : cfg_(cfg),
      dim_(dim),
      entity_m_(0, dim),
      entity_v_(0, dim),
      relation_m_(0, dim),
      relation_v_(0, dim) {}

void SparseAdam::ensure_rows(std::size_t num_entities,
                             std::size_t num_relations) {
  if (num_entities > entity_m_.rows()) {
    entity_m_.grow(num_entities);
    entity_v_.grow(num_entities);
    entity_t_.resize(num_entities, 0);
  }
  if (num_relations > relation_m_.rows()) {
    relation_m_.grow(num_relations);
    relation_v_.grow(num_relations);
    relation_t_.resize(num_relations, 0);
  }
}

void SparseAdam::update_row(std::span<double> param,
                            std::span<const double> grad, std::span<double> m,
                            std::span<double> v, std::uint64_t& t) const {
  ++t;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < param.size(); ++k) {
    m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * grad[k];
    v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * grad[k] * grad[k];
    const double m_hat = m[k] / c1;
    const double v_hat = v[k] / c2;
    param[k] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

void SparseAdam::step(const GradientBuffer& grads, EmbeddingState& st) {
  for (auto r : grads.touched_entities()) {
    for (double x : grads.entity_view(r)) {
      if (!std::isfinite(x)) {
        throw NumericError(fmt::format("non-finite gradient on entity row {}", r));
      }
    }
  }
  for (auto r : grads.touched_relations()) {
    for (double x : grads.relation_view(r)) {
      if (!std::isfinite(x)) {
        throw NumericError(
            fmt::format("non-finite gradient on relation row {}", r));
      }
    }
  }
  ensure_rows(st.entities.rows(), st.relations.rows());
  // A row whose gradient is exactly zero counts as absent from the update.
  auto all_zero = [](std::span<const double> g) {
    for (double x : g) {
      if (x != 0.0) return false;
    }
    return true;
  };
  for (auto r : grads.touched_entities()) {
    if (all_zero(grads.entity_view(r))) continue;
    update_row(st.entities.row(r), grads.entity_view(r), entity_m_.row(r),
               entity_v_.row(r), entity_t_[r]);
  }
  for (auto r : grads.touched_relations()) {
    if (all_zero(grads.relation_view(r))) continue;
    update_row(st.relations.row(r), grads.relation_view(r), relation_m_.row(r),
               relation_v_.row(r), relation_t_[r]);
  }
}

void normalize_entities(EmbeddingState& st) {
  for (std::size_t r = 0; r < st.entities.rows(); ++r) {
    auto row = st.entities.row(r);
    double n = 0.0;
    for (double x : row) n += x * x;
    n = std::sqrt(n);
    if (n > 1.0) {
      for (auto& x : row) x /= n;
    }
  }
}

}  // namespace lkge
