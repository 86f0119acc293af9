#include "burdenlab/config_file.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace burdenlab {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_string(buffer.str());
}

ConfigFile ConfigFile::parse_string(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) {
            line = line.substr(0, comment);
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw ConfigError("config line " + std::to_string(lineno) + ": empty section");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        }
        const std::string full = section.empty() ? key : section + "." + key;
        if (cfg.values_.count(full) != 0) {
            throw ConfigError("config: duplicate key " + full);
        }
        cfg.values_[full] = value;
        cfg.consumed_[full] = false;
    }
    return cfg;
}

const std::string* ConfigFile::find(const std::string& section, const std::string& key) const {
    const std::string full = section.empty() ? key : section + "." + key;
    const auto it = values_.find(full);
    if (it == values_.end()) return nullptr;
    consumed_[full] = true;
    return &it->second;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    if (v == nullptr) {
        throw ConfigError("config: missing key " + section + "." + key);
    }
    return *v;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v == nullptr ? fallback : *v;
}

double ConfigFile::get_double(const std::string& section, const std::string& key) const {
    const std::string raw = get_string(section, key);
    try {
        size_t used = 0;
        const double value = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return value;
    } catch (const std::exception&) {
        throw ConfigError("config: " + section + "." + key + " is not a number: " + raw);
    }
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

int ConfigFile::get_int(const std::string& section, const std::string& key) const {
    const std::string raw = get_string(section, key);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
    if (ec != std::errc() || ptr != raw.data() + raw.size()) {
        throw ConfigError("config: " + section + "." + key + " is not an integer: " + raw);
    }
    return value;
}

int ConfigFile::get_int(const std::string& section, const std::string& key, int fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

std::vector<std::string> ConfigFile::get_list(const std::string& section,
                                              const std::string& key) const {
    const std::string raw = get_string(section, key);
    std::vector<std::string> out;
    std::istringstream in(raw);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) {
        throw ConfigError("config: " + section + "." + key + " is an empty list");
    }
    return out;
}

std::vector<int> ConfigFile::get_int_list(const std::string& section,
                                          const std::string& key) const {
    std::vector<int> out;
    for (const std::string& item : get_list(section, key)) {
        int value = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw ConfigError("config: " + section + "." + key + " has non-integer item: " + item);
        }
        out.push_back(value);
    }
    return out;
}

std::vector<std::uint64_t> ConfigFile::get_u64_list(const std::string& section,
                                                    const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (const std::string& item : get_list(section, key)) {
        std::uint64_t value = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw ConfigError("config: " + section + "." + key + " has invalid item: " + item);
        }
        out.push_back(value);
    }
    return out;
}

std::vector<std::string> ConfigFile::unconsumed_keys() const {
    std::vector<std::string> out;
    for (const auto& [key, used] : consumed_) {
        if (!used) out.push_back(key);
    }
    return out;
}

}  // namespace burdenlab
