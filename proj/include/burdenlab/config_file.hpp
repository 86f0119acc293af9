#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "burdenlab/common.hpp"

namespace burdenlab {

// Flat key/value configuration with [section] headers, '#' or ';' comments
// and comma-separated lists. Unknown keys are rejected by callers via
// consumed-key tracking so typos never silently fall back to defaults.
class ConfigFile {
  public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;

    std::string get_string(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    int get_int(const std::string& section, const std::string& key) const;
    int get_int(const std::string& section, const std::string& key, int fallback) const;
    std::vector<std::string> get_list(const std::string& section, const std::string& key) const;
    std::vector<int> get_int_list(const std::string& section, const std::string& key) const;
    std::vector<std::uint64_t> get_u64_list(const std::string& section,
                                            const std::string& key) const;

    // Keys present in the file but never read by any getter.
    std::vector<std::string> unconsumed_keys() const;

  private:
    std::map<std::string, std::string> values_;  // "section.key" -> raw value
    mutable std::map<std::string, bool> consumed_;

    const std::string* find(const std::string& section, const std::string& key) const;
};

}  // namespace burdenlab
