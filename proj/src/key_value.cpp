#include "icaunet/key_value.hpp"

#include <charconv>
#include <sstream>

#include "icaunet/errors.hpp"

namespace icaunet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const KeyValueEntry& lookup(const KeyValueMap& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("missing required key '" + key + "'");
  return it->second;
}

}  // namespace

KeyValueMap parse_key_values(const std::string& text) {
  KeyValueMap out;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string body = trim(raw);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line) + ": empty key");
    if (out.count(key)) throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
    out[key] = {trim(body.substr(eq + 1)), line};
  }
  return out;
}

std::int64_t kv_int(const KeyValueMap& kv, const std::string& key) {
  const auto& e = lookup(kv, key);
  std::int64_t v = 0;
  const auto* end = e.value.data() + e.value.size();
  const auto res = std::from_chars(e.value.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ConfigError("key '" + key + "' (line " + std::to_string(e.line) + "): expected an integer, got '" +
                      e.value + "'");
  return v;
}

double kv_real(const KeyValueMap& kv, const std::string& key) {
  const auto& e = lookup(kv, key);
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(e.value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != e.value.size())
    throw ConfigError("key '" + key + "' (line " + std::to_string(e.line) + "): expected a number, got '" +
                      e.value + "'");
  return v;
}

std::string kv_string(const KeyValueMap& kv, const std::string& key) { return lookup(kv, key).value; }

bool kv_has(const KeyValueMap& kv, const std::string& key) { return kv.count(key) != 0; }

}  // namespace icaunet
