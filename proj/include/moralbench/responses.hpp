#pragma once

#include <string>
#include <string_view>

#include "moralbench/parser.hpp"
#include "moralbench/taxonomy.hpp"

namespace moralbench {

/// A response that follows the strategy's output format exactly: every required tag
/// filled with `filler`, then the final label line. Used by the mock endpoints.
inline std::string compliant_response(const PromptStrategy& strategy, std::string_view label,
                                      std::string_view filler = "The analysis weighs the value against the scenario.") {
  std::string out;
  for (const auto& tag : required_tags(strategy)) {
    out += "<" + tag + ">\n";
    out += filler;
    out += " (" + tag + ")\n</" + tag + ">\n";
  }
  out += "The Selected Label is ";
  out += label;
  return out;
}

}  // namespace moralbench
