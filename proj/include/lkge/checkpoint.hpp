#pragma once

#include <cstdint>
#include <filesystem>

#include "lkge/lkge.hpp"
#include "lkge/transe.hpp"

namespace lkge {

// Model after training one snapshot: current tables and fact ledger.
struct Checkpoint {
  int snapshot = 0;
  std::size_t dim = 0;
  EmbeddingTable entities;
  EmbeddingTable relations;
  FactLedger ledger;

  // State with these tables as current (frozen tables empty).
  EmbeddingState to_state() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Little-endian binary container: magic "LKGECKPT", version, snapshot, dim,
// table shapes and rows, then the ledger vectors.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lkge
