#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lkge/kg.hpp"
#include "lkge/rng.hpp"

namespace lkge {

using Vector = std::vector<double>;

// Row-major table of embedding vectors. Rows are only ever appended.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows, std::size_t dim)
      : rows_(rows), dim_(dim), data_(rows * dim, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * dim_, dim_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * dim_, dim_};
  }

  // Grows to `rows` rows; new rows are zero. Shrinking is not allowed.
  void grow(std::size_t rows);

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) =
      default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

enum class Norm { l1, l2 };

// Current tables plus the frozen tables from the end of the previous
// snapshot.
struct EmbeddingState {
  std::size_t dim = 0;
  EmbeddingTable entities;
  EmbeddingTable relations;
  EmbeddingTable prev_entities;
  EmbeddingTable prev_relations;

  EmbeddingState() = default;
  EmbeddingState(std::size_t num_entities, std::size_t num_relations,
                 std::size_t d)
      : dim(d), entities(num_entities, d), relations(num_relations, d),
        prev_entities(0, d), prev_relations(0, d) {}

  std::size_t num_entities() const { return entities.rows(); }
  std::size_t num_relations() const { return relations.rows(); }

  std::span<const double> entity(EntityId e) const;
  std::span<const double> relation(RelationId r) const;

  // Copies the current tables into the frozen ones.
  void freeze();
};

// Half-width of the uniform initialization range, 6/sqrt(d).
double init_bound(std::size_t dim);

// Uniform in [-6/sqrt(d), 6/sqrt(d)] for rows [first, rows()).
void init_rows(EmbeddingTable& table, std::size_t first, Rng& rng);
void init_vector(std::span<double> out, Rng& rng);

// ||e_s + e_r - e_o||, lower is better.
double dissimilarity(const EmbeddingState& st, const Fact& f,
                     Norm norm = Norm::l2);
double dissimilarity(std::span<const double> s, std::span<const double> r,
                     std::span<const double> o, Norm norm = Norm::l2);

// Subject estimate o - r.
Vector f_sub(std::span<const double> r, std::span<const double> o);
// Relation estimate o - s.
Vector f_rel(std::span<const double> s, std::span<const double> o);

// Replaces subject or object (probability 1/2 each) by a uniform entity.
Fact negative_sample(const Fact& fact, std::uint32_t num_entities, Rng& rng);

// Dense gradient storage for both tables with a record of touched rows, so
// optimizer steps only visit rows that received a contribution.
class GradientBuffer {
 public:
  GradientBuffer() = default;
  GradientBuffer(std::size_t num_entities, std::size_t num_relations,
                 std::size_t dim);

  void resize(std::size_t num_entities, std::size_t num_relations,
              std::size_t dim);
  void clear();

  std::span<double> entity(std::size_t row);
  std::span<double> relation(std::size_t row);
  std::span<const double> entity_view(std::size_t row) const {
    return entity_grad_.row(row);
  }
  std::span<const double> relation_view(std::size_t row) const {
    return relation_grad_.row(row);
  }

  // grad[row] += scale * v
  void add_entity(std::size_t row, std::span<const double> v, double scale);
  void add_relation(std::size_t row, std::span<const double> v, double scale);

  const std::vector<std::uint32_t>& touched_entities() const {
    return touched_entities_;
  }
  const std::vector<std::uint32_t>& touched_relations() const {
    return touched_relations_;
  }
  std::size_t dim() const { return entity_grad_.dim(); }

 private:
  EmbeddingTable entity_grad_;
  EmbeddingTable relation_grad_;
  std::vector<char> entity_mark_;
  std::vector<char> relation_mark_;
  std::vector<std::uint32_t> touched_entities_;
  std::vector<std::uint32_t> touched_relations_;
};

// max(0, margin + f(pos) - f(neg)). When the hinge is active and `grads` is
// non-null, `scale` times the gradient is accumulated into the five rows.
double margin_loss(const Fact& pos, const Fact& neg, double margin,
                   const EmbeddingState& st, GradientBuffer* grads,
                   Norm norm = Norm::l2, double scale = 1.0);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Lazy row-wise Adam: each row keeps its own moments and step counter and
// only rows present in the gradient buffer are updated.
class SparseAdam {
 public:
  explicit SparseAdam(AdamConfig cfg = {}, std::size_t dim = 0);

  // Adds moment rows for newly appended embedding rows.
  void ensure_rows(std::size_t num_entities, std::size_t num_relations);

  // Throws NumericError naming the row when a gradient is not finite; in
  // that case nothing is updated.
  void step(const GradientBuffer& grads, EmbeddingState& st);

  const AdamConfig& config() const { return cfg_; }
  std::size_t entity_rows() const { return entity_m_.rows(); }
  std::size_t relation_rows() const { return relation_m_.rows(); }
  std::uint64_t entity_steps(std::size_t row) const {
    return entity_t_[row];
  }

 private:
  void update_row(std::span<double> param, std::span<const double> grad,
                  std::span<double> m, std::span<double> v,
                  std::uint64_t& t) const;

  AdamConfig cfg_;
  std::size_t dim_;
  EmbeddingTable entity_m_, entity_v_;
  EmbeddingTable relation_m_, relation_v_;
  std::vector<std::uint64_t> entity_t_;
  std::vector<std::uint64_t> relation_t_;
};

// Projects every entity row onto the unit ball (optional, off by default).
void normalize_entities(EmbeddingState& st);

}  // namespace lkge
