#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rapi/common.hpp"

namespace rapi {

// Flat string-to-string settings read from `key = value` lines. '#' starts a
// comment. Later assignments override earlier ones, so layering a file and then
// command-line overrides gives flag > file > default.
class Config {
 public:
  Config() = default;
  explicit Config(std::vector<std::string> known_keys) : known_(std::move(known_keys)) {}

  static Config parse(const std::string& text, std::vector<std::string> known_keys,
                      const std::string& origin = "config");
  static Config load(const std::string& path, std::vector<std::string> known_keys);

  // Throws for a key outside the known set (when one was given).
  void set(const std::string& key, const std::string& value);
  void merge(const Config& other);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

 private:
  std::vector<std::string> known_;
  std::map<std::string, std::string> values_;
};

}  // namespace rapi
