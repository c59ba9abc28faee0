#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "otrecon/errors.hpp"

namespace otrecon::cli {

// Flat key = value text, '#' comments, blank lines ignored. Keys a command
// does not declare are hard errors -- a typoed key must never silently fall
// back to a default.
struct Config {
    std::map<std::string, std::string> values;

    static Config load(const std::string& path);
    static Config from_string(const std::string& text);

    void set(const std::string& key, const std::string& value) { values[key] = value; }
};

class Schema {
public:
    Schema& add(const std::string& key, const std::string& default_value);

    // Applies defaults and rejects unknown keys.
    class Resolved resolve(const Config& cfg) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_; // declaration order
    std::map<std::string, std::size_t> index_;
};

class Resolved {
public:
    Resolved(std::vector<std::pair<std::string, std::string>> kv);

    const std::string& str(const std::string& key) const;
    double real(const std::string& key) const;
    long integer(const std::string& key) const;
    std::uint64_t u64(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<double> real_list(const std::string& key) const; // comma separated

    // full key = value echo in schema order, for manifests and replay
    std::string echo() const;

private:
    std::vector<std::pair<std::string, std::string>> kv_;
    std::map<std::string, std::size_t> index_;
};

} // namespace otrecon::cli
