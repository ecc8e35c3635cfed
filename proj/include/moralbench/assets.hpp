#pragma once

#include <optional>
#include <string_view>

#include "moralbench/embedded_assets.hpp"

namespace moralbench::assets {

// Built-in prompt templates and framework descriptions, compiled in from assets/.
inline std::optional<std::string_view> find(std::string_view key) {
  for (const auto& [k, v] : detail::kEmbedded) {
    if (k == key) return v;
  }
  return std::nullopt;
}

inline constexpr auto& all() { return detail::kEmbedded; }

}  // namespace moralbench::assets
