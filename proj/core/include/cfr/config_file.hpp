#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cfr {

/// Flat `key = value` text configuration with optional `[section]` headers.
/// `#` starts a comment; blank lines are ignored. Keys outside any section
/// live in section "". Duplicate keys within a section are a parse error.
class ConfigFile {
 public:
  ConfigFile() = default;

  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key,
                    double fallback) const;
  long get_int(const std::string& section, const std::string& key,
               long fallback) const;
  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const;
  std::vector<double> get_doubles(const std::string& section,
                                  const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<long> get_ints(const std::string& section, const std::string& key,
                             const std::vector<long>& fallback) const;

  void set(const std::string& section, const std::string& key,
           const std::string& value);

  std::vector<std::string> keys(const std::string& section) const;
  bool has_section(const std::string& section) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> sections_;
};

double parse_double(const std::string& text, const std::string& context);
long parse_int(const std::string& text, const std::string& context);

}  // namespace cfr
