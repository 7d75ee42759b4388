#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lkge/kg.hpp"

namespace lkge {

// Generator for a typed KG with planted translational structure. Every
// entity has a latent vector; a relation links subjects of its domain type
// to the entities of its range type nearest to subject + translation.
struct SyntheticConfig {
  std::uint32_t num_entities = 6000;
  std::uint32_t num_relations = 60;
  std::uint32_t num_types = 6;
  std::size_t latent_dim = 16;
  std::size_t num_facts = 40000;
  std::uint32_t max_objects = 3;  // objects per (subject, relation), 1..max
  double noise = 0.03;            // fraction of facts with a random object
  double zipf_exponent = 0.8;     // subject popularity skew
  double relation_zipf_exponent = 1.2;  // relation frequency skew
  // Share of N-to-1 attribute relations: the object is one of a few value
  // entities picked by bucketing a projection of the subject's latent vector.
  double attribute_fraction = 0.0;
  std::uint32_t max_attribute_values = 8;  // values per attribute, 2..max
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticKg {
  std::vector<Fact> facts;
  KgVocabulary vocab;
};

// Deterministic in the config. Entity names are "e<k>", relations "r<k>".
SyntheticKg generate_synthetic(const SyntheticConfig& cfg);

}  // namespace lkge
