#include "otrecon/cli/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace otrecon::cli {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

Config Config::from_string(const std::string& text) {
    Config cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (cfg.values.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        cfg.values[key] = value;
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return from_string(buf.str());
}

Schema& Schema::add(const std::string& key, const std::string& default_value) {
    if (index_.count(key)) throw ContractError("Schema: duplicate key " + key);
    index_[key] = entries_.size();
    entries_.emplace_back(key, default_value);
    return *this;
}

Resolved Schema::resolve(const Config& cfg) const {
    for (const auto& [key, value] : cfg.values)
        if (!index_.count(key))
            throw ConfigError("config: unknown key '" + key + "'");
    std::vector<std::pair<std::string, std::string>> kv = entries_;
    for (auto& [key, value] : kv) {
        auto it = cfg.values.find(key);
        if (it != cfg.values.end()) value = it->second;
    }
    return Resolved(std::move(kv));
}

Resolved::Resolved(std::vector<std::pair<std::string, std::string>> kv) : kv_(std::move(kv)) {
    for (std::size_t i = 0; i < kv_.size(); ++i) index_[kv_[i].first] = i;
}

const std::string& Resolved::str(const std::string& key) const {
    auto it = index_.find(key);
    if (it == index_.end()) throw ContractError("config: key not in schema: " + key);
    return kv_[it->second].second;
}

double Resolved::real(const std::string& key) const {
    const std::string& s = str(key);
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(s.c_str(), &end);
    if (errno != 0 || end == s.c_str() || *end != '\0')
        throw ConfigError("config: key '" + key + "' is not a real number: '" + s + "'");
    return v;
}

long Resolved::integer(const std::string& key) const {
    const std::string& s = str(key);
    char* end = nullptr;
    errno = 0;
    long v = std::strtol(s.c_str(), &end, 10);
    if (errno != 0 || end == s.c_str() || *end != '\0')
        throw ConfigError("config: key '" + key + "' is not an integer: '" + s + "'");
    return v;
}

std::uint64_t Resolved::u64(const std::string& key) const {
    const std::string& s = str(key);
    char* end = nullptr;
    errno = 0;
    unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (errno != 0 || end == s.c_str() || *end != '\0')
        throw ConfigError("config: key '" + key + "' is not an unsigned integer: '" + s + "'");
    return static_cast<std::uint64_t>(v);
}

bool Resolved::boolean(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<double> Resolved::real_list(const std::string& key) const {
    const std::string& s = str(key);
    std::vector<double> out;
    std::istringstream is(s);
    std::string item;
    while (std::getline(is, item, ',')) {
        char* end = nullptr;
        errno = 0;
        double v = std::strtod(item.c_str(), &end);
        if (errno != 0 || end == item.c_str() || *end != '\0')
            throw ConfigError("config: key '" + key + "' has a bad list entry: '" + item + "'");
        out.push_back(v);
    }
    if (out.empty())
        throw ConfigError("config: key '" + key + "' is an empty list");
    return out;
}

std::string Resolved::echo() const {
    std::string out;
    for (const auto& [key, value] : kv_) {
        out += key;
        out += " = ";
        out += value;
        out += "\n";
    }
    return out;
}

} // namespace otrecon::cli
