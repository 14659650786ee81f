// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "televit/errors.hpp"

namespace televit::detail {

/// Throws ConfigError when `j` is not an object or has a key absent from `ref`.
inline void require_known_keys(const nlohmann::json& j, const nlohmann::json& ref, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!ref.contains(key)) throw ConfigError("unknown " + what + " key '" + key + "'");
}

}  // namespace televit::detail
