#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "lkge/growth.hpp"
#include "lkge/kg.hpp"
#include "lkge/rng.hpp"
#include "lkge/synthetic.hpp"
#include "lkge/transe.hpp"

namespace lkge::test {

// Directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    Rng rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("lkge-test-" + std::to_string(rng.next() % 1000000007) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path,
                       const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Fact fact(std::uint32_t s, std::uint32_t r, std::uint32_t o) {
  return {EntityId(s), RelationId(r), EntityId(o)};
}

inline void fill_uniform(EmbeddingTable& t, Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
  for (auto& x : t.data()) x = rng.uniform(lo, hi);
}

inline void set_row(EmbeddingTable& t, std::size_t row,
                    std::initializer_list<double> v) {
  std::size_t k = 0;
  for (double x : v) t.row(row)[k++] = x;
}

// State with uniform random current tables and, when prev rows are given,
// random frozen tables of that many rows.
inline EmbeddingState random_state(Rng& rng, std::size_t ne, std::size_t nr,
                                   std::size_t d, std::size_t prev_ne = 0,
                                   std::size_t prev_nr = 0) {
  EmbeddingState st(ne, nr, d);
  fill_uniform(st.entities, rng);
  fill_uniform(st.relations, rng);
  st.prev_entities = EmbeddingTable(prev_ne, d);
  st.prev_relations = EmbeddingTable(prev_nr, d);
  fill_uniform(st.prev_entities, rng);
  fill_uniform(st.prev_relations, rng);
  return st;
}

inline std::vector<Fact> random_facts(Rng& rng, std::size_t n,
                                      std::uint32_t ne, std::uint32_t nr) {
  std::vector<Fact> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(fact(static_cast<std::uint32_t>(rng.below(ne)),
                       static_cast<std::uint32_t>(rng.below(nr)),
                       static_cast<std::uint32_t>(rng.below(ne))));
  }
  return out;
}

// Central finite-difference gradient of `loss` with respect to every entry
// of both current tables, entity entries first.
inline std::vector<double> numeric_gradient(
    EmbeddingState& st, const std::function<double(const EmbeddingState&)>& loss,
    double h = 1e-5) {
  std::vector<double> out;
  for (auto* table : {&st.entities, &st.relations}) {
    for (auto& x : table->data()) {
      const double saved = x;
      x = saved + h;
      const double up = loss(st);
      x = saved - h;
      const double down = loss(st);
      x = saved;
      out.push_back((up - down) / (2.0 * h));
    }
  }
  return out;
}

// Flattens a gradient buffer in the layout of numeric_gradient.
inline std::vector<double> flatten(const GradientBuffer& g, std::size_t ne,
                                   std::size_t nr) {
  std::vector<double> out;
  for (std::size_t e = 0; e < ne; ++e) {
    for (double x : g.entity_view(e)) out.push_back(x);
  }
  for (std::size_t r = 0; r < nr; ++r) {
    for (double x : g.relation_view(r)) out.push_back(x);
  }
  return out;
}

// ||a - b|| / max(||a||, ||b||), or the absolute error when both are tiny.
inline double relative_error(const std::vector<double>& a,
                             const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
  return std::sqrt(diff) / scale;
}

// A small synthetic KG, deterministic in `seed`.
inline SyntheticKg small_kg(std::uint64_t seed, std::uint32_t entities = 120,
                            std::uint32_t relations = 8,
                            std::size_t facts = 900) {
  SyntheticConfig cfg;
  cfg.num_entities = entities;
  cfg.num_relations = relations;
  cfg.num_types = 3;
  cfg.latent_dim = 4;
  cfg.num_facts = facts;
  cfg.attribute_fraction = 0.25;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

inline GrowthDataset small_dataset(std::uint64_t seed,
                                   GrowthVariant variant = GrowthVariant::fact) {
  const auto kg = small_kg(seed);
  BuilderConfig cfg;
  cfg.variant = variant;
  cfg.seed = seed;
  return build_dataset(kg.facts, kg.vocab, cfg);
}

}  // namespace lkge::test
