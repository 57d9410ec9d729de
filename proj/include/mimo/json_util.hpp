#pragma once

#include <cstdint>
#include <set>
#include <string>

#include "json.hpp"
#include "mimo/error.hpp"

namespace mimo {

using Json = nlohmann::ordered_json;

// Reads optional fields from a JSON object and rejects keys nobody asked for.
class JsonReader {
 public:
  JsonReader(const Json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw UsageError(context_ + ": expected a JSON object");
  }

  template <class T>
  JsonReader& get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(context_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw UsageError(context_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const Json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

}  // namespace mimo
