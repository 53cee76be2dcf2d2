#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace snn {

/// Flat key = value experiment config. Lines starting with '#' and blank
/// lines are ignored; later keys override earlier ones.
class KeyValues {
public:
    KeyValues() = default;

    static KeyValues parse(std::istream& is, const std::string& origin = "<stream>") {
        KeyValues kv;
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos || line[first] == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config: missing '=' at " + origin + ":" + std::to_string(lineno));
            kv.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
        }
        return kv;
    }

    static KeyValues from_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("config: cannot open " + path);
        return parse(is, path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("config: missing required key '" + key + "'");
        return it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : parse_double(key, it->second);
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoll(it->second);
        } catch (const std::exception&) {
            throw std::runtime_error("config: key '" + key + "' is not an integer: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw std::runtime_error("config: key '" + key + "' is not a boolean: " + it->second);
    }

    std::vector<double> get_doubles(const std::string& key) const {
        std::vector<double> out;
        auto it = values_.find(key);
        if (it == values_.end()) return out;
        std::string item;
        std::istringstream is(it->second);
        while (std::getline(is, item, ',')) out.push_back(parse_double(key, item));
        return out;
    }

    const std::map<std::string, std::string>& all() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }

    static double parse_double(const std::string& key, const std::string& value) {
        try {
            return std::stod(value);
        } catch (const std::exception&) {
            throw std::runtime_error("config: key '" + key + "' is not a number: " + value);
        }
    }

    std::map<std::string, std::string> values_;
};

} // namespace snn
