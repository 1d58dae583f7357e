#pragma once

// `key = value` text with `#` comments, as used by the run configuration and
// by the model configuration embedded in checkpoints.

#include <cstdint>
#include <map>
#include <string>

namespace icaunet {

struct KeyValueEntry {
  std::string value;
  int line = 0;
};

using KeyValueMap = std::map<std::string, KeyValueEntry>;

// Throws ConfigError on a line without '=', an empty key or a duplicate key.
KeyValueMap parse_key_values(const std::string& text);

// Typed lookups; a malformed value is a ConfigError naming the key.
std::int64_t kv_int(const KeyValueMap& kv, const std::string& key);
double kv_real(const KeyValueMap& kv, const std::string& key);
std::string kv_string(const KeyValueMap& kv, const std::string& key);
bool kv_has(const KeyValueMap& kv, const std::string& key);

}  // namespace icaunet
