#pragma once

#include <fmt/format.h>

#include <initializer_list>
#include <nlohmann/json.hpp>
#include <string_view>

#include "lkge/error.hpp"

namespace lkge::detail {

template <typename T>
void read_key(const nlohmann::json& j, std::string_view key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
    }
  }
}

inline void reject_unknown(const nlohmann::json& j,
                           std::initializer_list<std::string_view> keys,
                           std::string_view where) {
  if (!j.is_object()) {
    throw ConfigError(fmt::format("'{}' must be a JSON object",
                                  where.empty() ? "config" : where));
  }
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (auto key : keys) known = known || k == key;
    if (!known) {
      throw ConfigError(fmt::format("unknown config key '{}{}'", where, k));
    }
  }
}

}  // namespace lkge::detail
