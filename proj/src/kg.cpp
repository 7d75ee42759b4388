#include "lkge/kg.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "lkge/error.hpp"

namespace lkge {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::uint32_t Vocabulary::intern(std::string_view name) {
  if (auto it = index_.find(name); it != index_.end()) return it->second;
  const auto handle = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), handle);
  return handle;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  if (auto it = index_.find(name); it != index_.end()) return it->second;
  return std::nullopt;
}

const std::string& Vocabulary::name(std::uint32_t handle) const {
  if (handle >= names_.size()) {
    throw BoundsError(fmt::format("handle {} out of range (vocabulary size {})",
                                  handle, names_.size()));
  }
  return names_[handle];
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read {}", path.string()));
  return in;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  return out;
}

std::uint32_t parse_handle(std::string_view field, const fs::path& path,
                           std::size_t line_no) {
  std::uint32_t value = 0;
  if (field.empty()) {
    throw ParseError(fmt::format("{}:{}: empty handle", path.string(), line_no),
                     line_no);
  }
  for (char c : field) {
    if (c < '0' || c > '9') {
      throw ParseError(fmt::format("{}:{}: invalid handle '{}'", path.string(),
                                   line_no, field),
                       line_no);
    }
    value = value * 10 + static_cast<std::uint32_t>(c - '0');
  }
  return value;
}

}  // namespace

std::vector<Fact> load_triples(const fs::path& path, KgVocabulary& vocab,
                               LoadStats* stats) {
  auto in = open_input(path);

  struct Row {
    std::string s, r, o;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = strip_cr(line);
    if (view.empty()) continue;
    const auto fields = split_tabs(view);
    if (fields.size() != 3) {
      throw ParseError(
          fmt::format("{}:{}: expected 3 tab-separated fields, found {}",
                      path.string(), line_no, fields.size()),
          line_no);
    }
    rows.push_back({std::string(fields[0]), std::string(fields[1]),
                    std::string(fields[2])});
  }
  if (in.bad()) throw IoError(fmt::format("error reading {}", path.string()));

  std::vector<Fact> facts;
  facts.reserve(rows.size());
  std::unordered_set<Fact, FactHash> seen;
  std::size_t duplicates = 0;
  for (const auto& row : rows) {
    const Fact f{EntityId(vocab.entities.intern(row.s)),
                 RelationId(vocab.relations.intern(row.r)),
                 EntityId(vocab.entities.intern(row.o))};
    if (!seen.insert(f).second) {
      ++duplicates;
      continue;
    }
    facts.push_back(f);
  }
  if (duplicates > 0) {
    spdlog::warn("{}: dropped {} duplicate triples", path.string(), duplicates);
  }
  if (stats) *stats = {line_no, duplicates};
  return facts;
}

void write_triples(const fs::path& path, const std::vector<Fact>& facts,
                   const KgVocabulary& vocab) {
  auto out = open_output(path);
  for (const auto& f : facts) {
    out << vocab.entities.name(f.subject.value) << '\t'
        << vocab.relations.name(f.relation.value) << '\t'
        << vocab.entities.name(f.object.value) << '\n';
  }
  if (!out) throw IoError(fmt::format("error writing {}", path.string()));
}

const Snapshot& GrowthDataset::snapshot(int i) const {
  if (i < 1 || static_cast<std::size_t>(i) > snapshots.size()) {
    throw BoundsError(fmt::format("snapshot index {} outside 1..{}", i,
                                  snapshots.size()));
  }
  return snapshots[static_cast<std::size_t>(i - 1)];
}

std::vector<Fact> GrowthDataset::accumulated_train(int i) const {
  std::vector<Fact> out;
  for (int j = 1; j <= i; ++j) {
    const auto& t = snapshot(j).train;
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

std::vector<Fact> GrowthDataset::accumulated_valid(int i) const {
  std::vector<Fact> out;
  for (int j = 1; j <= i; ++j) {
    const auto& v = snapshot(j).valid;
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

void GrowthDataset::validate() const {
  std::unordered_set<Fact, FactHash> all;
  std::uint32_t prev_entities = 0;
  std::uint32_t prev_relations = 0;
  for (std::size_t k = 0; k < snapshots.size(); ++k) {
    const auto& snap = snapshots[k];
    if (snap.index != static_cast<int>(k) + 1) {
      throw ContractError(fmt::format(
          "snapshot at position {} has index {}", k + 1, snap.index));
    }
    if (snap.num_entities < prev_entities ||
        snap.num_relations < prev_relations) {
      throw ContractError(
          fmt::format("snapshot {} shrinks the vocabulary", snap.index));
    }
    if (snap.num_entities > entity_names.size() ||
        snap.num_relations > relation_names.size()) {
      throw ContractError(fmt::format(
          "snapshot {} vocabulary exceeds the name tables", snap.index));
    }
    for (const auto* split : {&snap.train, &snap.valid, &snap.test}) {
      for (const auto& f : *split) {
        if (f.subject.value >= snap.num_entities ||
            f.object.value >= snap.num_entities ||
            f.relation.value >= snap.num_relations) {
          throw ContractError(fmt::format(
              "snapshot {} holds a fact with an unregistered handle",
              snap.index));
        }
        if (!all.insert(f).second) {
          throw ContractError(fmt::format(
              "fact ({}, {}, {}) appears twice (snapshot {})", f.subject.value,
              f.relation.value, f.object.value, snap.index));
        }
      }
    }
    prev_entities = snap.num_entities;
    prev_relations = snap.num_relations;
  }
}

DeltaStats delta_stats(const GrowthDataset& ds, int i) {
  const auto& snap = ds.snapshot(i);
  return {snap.delta_size(), snap.num_entities, snap.num_relations};
}

namespace {

void write_names(const fs::path& path, const Vocabulary& vocab) {
  auto out = open_output(path);
  for (std::size_t h = 0; h < vocab.size(); ++h) {
    out << h << '\t' << vocab.names()[h] << '\n';
  }
  if (!out) throw IoError(fmt::format("error writing {}", path.string()));
}

Vocabulary read_names(const fs::path& path) {
  auto in = open_input(path);
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = strip_cr(line);
    if (view.empty()) continue;
    const auto tab = view.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(
          fmt::format("{}:{}: expected handle<TAB>name", path.string(), line_no),
          line_no);
    }
    const auto handle = parse_handle(view.substr(0, tab), path, line_no);
    if (handle != vocab.size()) {
      throw ParseError(fmt::format("{}:{}: handles must be dense and ordered",
                                   path.string(), line_no),
                       line_no);
    }
    vocab.intern(view.substr(tab + 1));
    if (vocab.size() != handle + 1) {
      throw ParseError(fmt::format("{}:{}: duplicate name", path.string(),
                                   line_no),
                       line_no);
    }
  }
  return vocab;
}

void write_split(const fs::path& path, const std::vector<Fact>& facts) {
  auto out = open_output(path);
  for (const auto& f : facts) {
    out << f.subject.value << '\t' << f.relation.value << '\t'
        << f.object.value << '\n';
  }
  if (!out) throw IoError(fmt::format("error writing {}", path.string()));
}

std::vector<Fact> read_split(const fs::path& path) {
  auto in = open_input(path);
  std::vector<Fact> facts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = strip_cr(line);
    if (view.empty()) continue;
    const auto fields = split_tabs(view);
    if (fields.size() != 3) {
      throw ParseError(
          fmt::format("{}:{}: expected 3 handle columns", path.string(), line_no),
          line_no);
    }
    facts.push_back({EntityId(parse_handle(fields[0], path, line_no)),
                     RelationId(parse_handle(fields[1], path, line_no)),
                     EntityId(parse_handle(fields[2], path, line_no))});
  }
  return facts;
}

}  // namespace

void save_dataset(const GrowthDataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  write_names(dir / "entities.tsv", ds.entity_names);
  write_names(dir / "relations.tsv", ds.relation_names);

  json snaps = json::array();
  for (const auto& snap : ds.snapshots) {
    const auto sub = dir / fmt::format("snapshot{}", snap.index);
    fs::create_directories(sub);
    write_split(sub / "train.tsv", snap.train);
    write_split(sub / "valid.tsv", snap.valid);
    write_split(sub / "test.tsv", snap.test);
    snaps.push_back({{"index", snap.index},
                     {"num_entities", snap.num_entities},
                     {"num_relations", snap.num_relations},
                     {"train", snap.train.size()},
                     {"valid", snap.valid.size()},
                     {"test", snap.test.size()}});
  }
  const json meta = {
      {"format_version", kFormatVersion},
      {"num_snapshots", ds.snapshots.size()},
      {"num_entities", ds.entity_names.size()},
      {"num_relations", ds.relation_names.size()},
      {"snapshots", snaps},
      {"builder",
       {{"variant", ds.build.variant},
        {"seed", ds.build.seed},
        {"rng", ds.build.rng},
        {"num_snapshots", ds.build.num_snapshots},
        {"split_ratio", ds.build.split_ratio},
        {"seed_facts", ds.build.seed_facts},
        {"hybrid_stop_numerator", ds.build.hybrid_stop_numerator},
        {"closure_on_quota", ds.build.closure_on_quota},
        {"relation_closure", ds.build.relation_closure}}}};
  auto out = open_output(dir / "meta.json");
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("error writing meta.json");
}

GrowthDataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw IoError(fmt::format("dataset directory {} does not exist",
                              dir.string()));
  }
  json meta;
  {
    auto in = open_input(dir / "meta.json");
    try {
      in >> meta;
    } catch (const json::exception& e) {
      throw ParseError(fmt::format("{}: {}", (dir / "meta.json").string(),
                                   e.what()),
                       0);
    }
  }
  GrowthDataset ds;
  try {
    if (meta.at("format_version").get<int>() != kFormatVersion) {
      throw ParseError(fmt::format("{}: unsupported format_version {}",
                                   (dir / "meta.json").string(),
                                   meta.at("format_version").dump()),
                       0);
    }
    ds.entity_names = read_names(dir / "entities.tsv");
    ds.relation_names = read_names(dir / "relations.tsv");
    for (const auto& s : meta.at("snapshots")) {
      Snapshot snap;
      snap.index = s.at("index").get<int>();
      snap.num_entities = s.at("num_entities").get<std::uint32_t>();
      snap.num_relations = s.at("num_relations").get<std::uint32_t>();
      const auto sub = dir / fmt::format("snapshot{}", snap.index);
      snap.train = read_split(sub / "train.tsv");
      snap.valid = read_split(sub / "valid.tsv");
      snap.test = read_split(sub / "test.tsv");
      ds.snapshots.push_back(std::move(snap));
    }
    if (meta.contains("builder")) {
      const auto& b = meta.at("builder");
      ds.build.variant = b.value("variant", "");
      ds.build.seed = b.value("seed", std::uint64_t{0});
      ds.build.rng = b.value("rng", std::string(Rng::kName));
      ds.build.num_snapshots = b.value("num_snapshots", 0);
      ds.build.split_ratio = b.value("split_ratio", std::vector<int>{});
      ds.build.seed_facts = b.value("seed_facts", 0);
      ds.build.hybrid_stop_numerator = b.value("hybrid_stop_numerator", 0);
      ds.build.relation_closure = b.value("relation_closure", false);
      ds.build.closure_on_quota = b.value("closure_on_quota", false);
    }
  } catch (const json::exception& e) {
    throw ParseError(
        fmt::format("{}: {}", (dir / "meta.json").string(), e.what()), 0);
  }
  ds.validate();
  return ds;
}

}  // namespace lkge
