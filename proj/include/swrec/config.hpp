#pragma once

// Run configuration: a flat `key = value` file with dotted keys and `#`
// comments. Every known key has a default, so a resolved configuration is a
// complete snapshot.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swrec/core.hpp"
#include "swrec/ingest.hpp"

namespace swrec {

class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& origin = "<config>") {
    KeyValues kv;
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto t = detail::trim(line);
      if (t.empty()) continue;
      const auto eq = t.find('=');
      require(eq != std::string_view::npos, ErrorKind::config,
              origin + ":" + std::to_string(no) + ": expected 'key = value'");
      const std::string key(detail::trim(t.substr(0, eq)));
      require(!key.empty(), ErrorKind::config, origin + ":" + std::to_string(no) + ": empty key");
      kv.values_[key] = std::string(detail::trim(t.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& p) {
    std::ifstream in(p);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open config " + p.string());
    return parse(in, p.string());
  }

  /// `key=value` override (command-line form).
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos, ErrorKind::config, "override '" + assignment + "' is not key=value");
    values_[std::string(detail::trim(std::string_view(assignment).substr(0, eq)))] =
        std::string(detail::trim(std::string_view(assignment).substr(eq + 1)));
  }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string str(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  template <class T>
  T num(const std::string& key, T def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    T v{};
    const auto& s = it->second;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && p == s.data() + s.size(), ErrorKind::config,
            "key '" + key + "': cannot parse '" + s + "' as a number");
    return v;
  }

  bool flag(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    const auto& s = it->second;
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw Error(ErrorKind::config, "key '" + key + "': expected a boolean, got '" + s + "'");
  }

  template <class T>
  std::vector<T> list(const std::string& key, std::vector<T> def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<T> out;
    for (auto f : detail::split_fields(it->second, ',')) {
      const auto t = detail::trim(f);
      if (t.empty()) continue;
      T v{};
      auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      require(ec == std::errc() && p == t.data() + t.size(), ErrorKind::config,
              "key '" + key + "': cannot parse list element '" + std::string(t) + "'");
      out.push_back(v);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace swrec
