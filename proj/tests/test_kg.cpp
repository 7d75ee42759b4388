#include <doctest.h>

#include <set>

#include "lkge/error.hpp"
#include "lkge/kg.hpp"
#include "support.hpp"

using namespace lkge;
using lkge::test::fact;

TEST_SUITE("kg") {

TEST_CASE("load_triples interns handles in first-seen order") {
  test::TempDir dir;
  test::write_file(dir / "t.tsv", "a\tr\tb\nb\tr\tc\n");
  KgVocabulary vocab;
  const auto facts = load_triples(dir / "t.tsv", vocab);
  CHECK(facts == std::vector<Fact>{fact(0, 0, 1), fact(1, 0, 2)});
  CHECK(vocab.entities.size() == 3);
  CHECK(vocab.relations.size() == 1);
  CHECK(vocab.entities.name(2) == "c");
}

TEST_CASE("load_triples on an empty file leaves the vocabulary unchanged") {
  test::TempDir dir;
  test::write_file(dir / "t.tsv", "");
  KgVocabulary vocab;
  vocab.entities.intern("x");
  CHECK(load_triples(dir / "t.tsv", vocab).empty());
  CHECK(vocab.entities.size() == 1);
  CHECK(vocab.relations.size() == 0);
}

TEST_CASE("load_triples reports the line of a malformed row") {
  test::TempDir dir;
  test::write_file(dir / "t.tsv", "a\tr\n");
  KgVocabulary vocab;
  try {
    load_triples(dir / "t.tsv", vocab);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }

  test::write_file(dir / "u.tsv", "a\tr\tb\n\na\tr\tb\tc\n");
  try {
    load_triples(dir / "u.tsv", vocab);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  // Nothing was interned from the failed files.
  CHECK(vocab.entities.size() == 0);
}

TEST_CASE("load_triples raises an I/O error for a missing file") {
  KgVocabulary vocab;
  CHECK_THROWS_AS(load_triples("/nonexistent/triples.tsv", vocab), IoError);
}

TEST_CASE("duplicates are dropped and counted; self-loops are kept") {
  test::TempDir dir;
  test::write_file(dir / "t.tsv", "a\tr\tb\r\na\tr\tb\na\tr\ta\n");
  KgVocabulary vocab;
  LoadStats stats;
  const auto facts = load_triples(dir / "t.tsv", vocab, &stats);
  CHECK(facts == std::vector<Fact>{fact(0, 0, 1), fact(0, 0, 0)});
  CHECK(stats.duplicates == 1);
  CHECK(stats.lines == 3);
}

namespace {

GrowthDataset hand_built() {
  GrowthDataset ds;
  for (auto n : {"a", "b", "c", "d"}) ds.entity_names.intern(n);
  for (auto n : {"p", "q"}) ds.relation_names.intern(n);
  Snapshot s1;
  s1.index = 1;
  s1.num_entities = 3;
  s1.num_relations = 1;
  s1.train = {fact(0, 0, 1), fact(1, 0, 2), fact(2, 0, 0), fact(1, 0, 0),
              fact(2, 0, 2)};
  s1.valid = {fact(0, 0, 0), fact(0, 0, 2)};
  s1.test = {fact(1, 0, 1), fact(2, 0, 1)};
  Snapshot s2;
  s2.index = 2;
  s2.num_entities = 4;
  s2.num_relations = 2;
  s2.train = {fact(3, 1, 0), fact(3, 1, 1), fact(0, 1, 3)};
  s2.valid = {fact(1, 1, 3)};
  s2.test = {fact(2, 1, 3)};
  ds.snapshots = {s1, s2};
  ds.build.variant = "fact";
  ds.build.num_snapshots = 2;
  return ds;
}

}  // namespace

TEST_CASE("delta_stats reports the delta size and cumulative vocabularies") {
  const auto ds = hand_built();
  ds.validate();
  CHECK(delta_stats(ds, 1) == DeltaStats{9, 3, 1});
  CHECK(delta_stats(ds, 2) == DeltaStats{5, 4, 2});
  CHECK_THROWS_AS(delta_stats(ds, 0), BoundsError);
  CHECK_THROWS_AS(delta_stats(ds, 3), BoundsError);

  auto grown = ds;
  Snapshot empty;
  empty.index = 3;
  empty.num_entities = 4;
  empty.num_relations = 2;
  grown.snapshots.push_back(empty);
  grown.validate();
  CHECK(delta_stats(grown, 3) == DeltaStats{0, 4, 2});
}

TEST_CASE("validate rejects broken invariants") {
  SUBCASE("duplicate fact across snapshots") {
    auto ds = hand_built();
    ds.snapshots[1].train.push_back(fact(0, 0, 1));
    CHECK_THROWS_AS(ds.validate(), ContractError);
  }
  SUBCASE("overlapping splits") {
    auto ds = hand_built();
    ds.snapshots[0].test.push_back(ds.snapshots[0].valid[0]);
    CHECK_THROWS_AS(ds.validate(), ContractError);
  }
  SUBCASE("handle beyond the snapshot vocabulary") {
    auto ds = hand_built();
    ds.snapshots[0].train.push_back(fact(3, 0, 0));
    CHECK_THROWS_AS(ds.validate(), ContractError);
  }
  SUBCASE("shrinking vocabulary") {
    auto ds = hand_built();
    ds.snapshots[1].num_relations = 0;
    ds.snapshots[1].train.clear();
    ds.snapshots[1].valid.clear();
    ds.snapshots[1].test.clear();
    CHECK_THROWS_AS(ds.validate(), ContractError);
  }
  SUBCASE("non-contiguous indices") {
    auto ds = hand_built();
    ds.snapshots[1].index = 3;
    CHECK_THROWS_AS(ds.validate(), ContractError);
  }
}

TEST_CASE("accumulated train and valid sets concatenate in snapshot order") {
  const auto ds = hand_built();
  const auto train = ds.accumulated_train(2);
  CHECK(train.size() == 8);
  CHECK(train.back() == fact(0, 1, 3));
  CHECK(ds.accumulated_valid(1) == ds.snapshots[0].valid);
}

TEST_CASE("dataset directory round-trips exactly") {
  test::TempDir dir;
  for (auto variant : {GrowthVariant::entity, GrowthVariant::relation,
                       GrowthVariant::fact, GrowthVariant::hybrid}) {
    CAPTURE(to_string(variant));
    const auto ds = test::small_dataset(3, variant);
    const auto path = dir / std::string(to_string(variant));
    save_dataset(ds, path);
    const auto back = load_dataset(path);
    REQUIRE(back.size() == ds.size());
    CHECK(back.entity_names.names() == ds.entity_names.names());
    CHECK(back.relation_names.names() == ds.relation_names.names());
    CHECK(back.build.variant == ds.build.variant);
    CHECK(back.build.seed == ds.build.seed);
    CHECK(back.build.rng == "mt19937_64");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(back.snapshots[i].train == ds.snapshots[i].train);
      CHECK(back.snapshots[i].valid == ds.snapshots[i].valid);
      CHECK(back.snapshots[i].test == ds.snapshots[i].test);
      CHECK(back.snapshots[i].num_entities == ds.snapshots[i].num_entities);
      CHECK(back.snapshots[i].num_relations == ds.snapshots[i].num_relations);
    }
    // Saving the reloaded dataset reproduces the files byte for byte.
    save_dataset(back, dir / "again");
    for (const auto& entry : std::filesystem::recursive_directory_iterator(path)) {
      if (!entry.is_regular_file()) continue;
      const auto rel = std::filesystem::relative(entry.path(), path);
      CHECK(test::read_file(entry.path()) == test::read_file(dir / "again" / rel.string()));
    }
  }
}

TEST_CASE("load_dataset names the missing directory") {
  try {
    load_dataset("/nonexistent/dataset");
    FAIL("expected an I/O error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dataset") != std::string::npos);
  }
}

TEST_CASE("snapshot sums equal the distinct facts of the source file") {
  test::TempDir dir;
  const auto kg = test::small_kg(11);
  // Write every fact twice; the duplicates must not reach the dataset.
  auto doubled = kg.facts;
  doubled.insert(doubled.end(), kg.facts.begin(), kg.facts.end());
  write_triples(dir / "kg.tsv", doubled, kg.vocab);
  KgVocabulary vocab;
  const auto facts = load_triples(dir / "kg.tsv", vocab);
  CHECK(facts.size() == kg.facts.size());
  BuilderConfig cfg;
  const auto ds = build_dataset(facts, vocab, cfg);
  std::size_t total = 0;
  for (int i = 1; i <= static_cast<int>(ds.size()); ++i) {
    total += delta_stats(ds, i).facts;
  }
  CHECK(total == kg.facts.size());
}

}  // TEST_SUITE
