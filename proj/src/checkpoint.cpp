#include "lkge/checkpoint.hpp"

#include <fmt/format.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "lkge/error.hpp"

namespace lkge {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'L', 'K', 'G', 'E', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError(fmt::format("cannot write {}", path.string()));
  }

  template <typename T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  template <typename T>
  void put_array(std::span<const T> values) {
    put<std::uint64_t>(values.size());
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes()));
  }

  void put_table(const EmbeddingTable& t) {
    put<std::uint64_t>(t.rows());
    put<std::uint64_t>(t.dim());
    out_.write(reinterpret_cast<const char*>(t.data().data()),
               static_cast<std::streamsize>(t.data().size_bytes()));
  }

  void finish() {
    out_.flush();
    if (!out_) throw IoError(fmt::format("error writing {}", path_.string()));
  }

  std::ofstream& stream() { return out_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError(fmt::format("cannot read {}", path.string()));
  }

  template <typename T>
  T get() {
    T value{};
    read(&value, sizeof(T));
    return value;
  }

  template <typename T>
  std::vector<T> get_array() {
    const auto n = get<std::uint64_t>();
    check_size(n, sizeof(T));
    std::vector<T> v(n);
    read(v.data(), n * sizeof(T));
    return v;
  }

  EmbeddingTable get_table(std::size_t expected_dim) {
    const auto rows = get<std::uint64_t>();
    const auto dim = get<std::uint64_t>();
    if (dim != expected_dim) {
      throw ParseError(fmt::format("{}: table dimension {} != {}",
                                   path_.string(), dim, expected_dim),
                       0);
    }
    check_size(rows * dim, sizeof(double));
    EmbeddingTable t(rows, dim);
    read(t.data().data(), t.data().size_bytes());
    return t;
  }

  void read(void* dst, std::size_t bytes) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in_.gcount()) != bytes) {
      throw ParseError(fmt::format("{}: truncated checkpoint", path_.string()),
                       0);
    }
  }

 private:
  void check_size(std::uint64_t count, std::size_t width) {
    // Guards allocation against corrupt length fields.
    if (count > (std::uint64_t{1} << 36) / width) {
      throw ParseError(
          fmt::format("{}: implausible array length {}", path_.string(), count),
          0);
    }
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

EmbeddingState Checkpoint::to_state() const {
  EmbeddingState st;
  st.dim = dim;
  st.entities = entities;
  st.relations = relations;
  st.prev_entities = EmbeddingTable(0, dim);
  st.prev_relations = EmbeddingTable(0, dim);
  return st;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w(path);
  w.stream().write(kMagic.data(), kMagic.size());
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::int32_t>(ckpt.snapshot);
  w.put<std::uint64_t>(ckpt.dim);
  w.put_table(ckpt.entities);
  w.put_table(ckpt.relations);
  w.put_array<std::int64_t>(ckpt.ledger.entity_prev);
  w.put_array<std::int64_t>(ckpt.ledger.entity_curr);
  w.put_array<std::int64_t>(ckpt.ledger.relation_prev);
  w.put_array<std::int64_t>(ckpt.ledger.relation_curr);
  w.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  std::array<char, 8> magic{};
  r.read(magic.data(), magic.size());
  if (magic != kMagic) {
    throw ParseError(fmt::format("{}: not a checkpoint file", path.string()), 0);
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError(fmt::format("{}: unsupported checkpoint version {}",
                                 path.string(), version),
                     0);
  }
  Checkpoint c;
  c.snapshot = r.get<std::int32_t>();
  c.dim = r.get<std::uint64_t>();
  c.entities = r.get_table(c.dim);
  c.relations = r.get_table(c.dim);
  c.ledger.entity_prev = r.get_array<std::int64_t>();
  c.ledger.entity_curr = r.get_array<std::int64_t>();
  c.ledger.relation_prev = r.get_array<std::int64_t>();
  c.ledger.relation_curr = r.get_array<std::int64_t>();
  return c;
}

}  // namespace lkge
