#include "rapi/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "text.hpp"

namespace rapi {

Config Config::parse(const std::string& text, std::vector<std::string> known_keys,
                     const std::string& origin) {
  Config cfg(std::move(known_keys));
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view body = line;
    if (auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = detail::trim(body);
    if (body.empty()) continue;
    auto eq = body.find('=');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw Error(where + ": expected key = value");
    std::string key(detail::trim(body.substr(0, eq)));
    std::string value(detail::trim(body.substr(eq + 1)));
    if (key.empty()) throw Error(where + ": empty key");
    try {
      cfg.set(key, value);
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
  }
  return cfg;
}

Config Config::load(const std::string& path, std::vector<std::string> known_keys) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), std::move(known_keys), path);
}

void Config::set(const std::string& key, const std::string& value) {
  if (!known_.empty() && std::find(known_.begin(), known_.end(), key) == known_.end()) {
    throw Error("unknown config key '" + key + "'");
  }
  values_[key] = value;
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) set(k, v);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

namespace {

template <typename T>
T parse_or_throw(const std::string& key, const std::string& value, const char* what) {
  auto v = detail::parse_number<T>(value);
  if (!v) throw Error("config key '" + key + "': expected " + what + ", got '" + value + "'");
  return *v;
}

}  // namespace

long long Config::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_or_throw<long long>(key, it->second, "an integer");
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback
                             : parse_or_throw<std::uint64_t>(key, it->second, "an unsigned integer");
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_or_throw<double>(key, it->second, "a number");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw Error("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key,
                                          const std::vector<std::string>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> out;
  for (auto part : detail::split_on(it->second, ",")) {
    auto t = detail::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<double> out;
  for (const auto& s : get_list(key, {})) out.push_back(parse_or_throw<double>(key, s, "a number"));
  return out;
}

}  // namespace rapi
