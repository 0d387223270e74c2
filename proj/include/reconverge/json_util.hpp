#pragma once

// Small helpers over nlohmann::json that turn type and key errors into
// ParseError with a field path.

#include <istream>
#include <string>

#include "json.hpp"
#include "reconverge/types.hpp"

namespace reconverge {

template <typename T, typename Json>
T json_get(const Json& j, const std::string& where) {
  try {
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (j.is_number_integer() && !j.is_number_unsigned() && j.template get<long long>() < 0) throw ParseError(where, "expected a non-negative integer");
      if (!j.is_number_integer()) throw ParseError(where, "expected an integer");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!j.is_number_integer()) throw ParseError(where, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) throw ParseError(where, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) throw ParseError(where, "expected a string");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) throw ParseError(where, "expected a boolean");
    }
    return j.template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where, e.what());
  }
}

template <typename Json>
const Json& json_at(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object()) throw ParseError(where, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(where.empty() ? std::string(key) : where + "." + key, "missing field");
  return *it;
}

template <typename Json>
RegSet parse_regs(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where, "expected an array of register ids");
  RegSet r;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto id = json_get<unsigned>(j[i], where + "[" + std::to_string(i) + "]");
    if (id >= kMaxArchRegs) throw ParseError(where, "register id " + std::to_string(id) + " out of range");
    r.insert(id);
  }
  return r;
}

/// Re-raises a parse error with the file path prepended to its location.
[[noreturn]] inline void rethrow_in_file(const std::string& path, const ParseError& e) {
  const std::string msg = std::string(e.what()).substr(e.where().empty() ? 0 : e.where().size() + 2);
  throw ParseError(e.where().empty() ? path : path + ": " + e.where(), msg);
}

inline nlohmann::ordered_json parse_json_stream(std::istream& in) {
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), e.what());
  }
}

} // namespace reconverge
