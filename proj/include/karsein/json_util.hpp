#pragma once

#include "karsein/core.hpp"

#include <nlohmann/json.hpp>

#include <initializer_list>
#include <string>

namespace karsein {

/// Rejects keys outside `allowed`; `where` prefixes the error message.
inline void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

/// Reads j[key] into `out` when present; type errors become ConfigError.
template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

}  // namespace karsein
