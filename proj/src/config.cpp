#include "mcfd/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mcfd {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool valid_key(const std::string& key) {
    if (key.empty() || key.front() == '.' || key.back() == '.') return false;
    for (char c : key)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
    return key.find("..") == std::string::npos;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_real(const std::string& key, const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw ConfigError("config: '" + key + "' expects a finite number, got '" + s + "'");
    return v;
}

}  // namespace

Config Config::parse(std::istream& is, const std::string& origin) {
    Config cfg;
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!section.empty() && !valid_key(section))
                throw ConfigError(where() + "invalid section name '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!section.empty()) key = section + "." + key;
        if (!valid_key(key)) throw ConfigError(where() + "invalid key '" + key + "'");
        if (value.empty()) throw ConfigError(where() + "empty value for '" + key + "'");
        if (cfg.has(key)) throw ConfigError(where() + "duplicate key '" + key + "'");
        cfg.entries_[key] = value;
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    return parse(in, path);
}

void Config::set(const std::string& key, const std::string& value) {
    if (!valid_key(key)) throw ConfigError("config: invalid key '" + key + "'");
    const std::string v = trim(value);
    if (v.empty()) throw ConfigError("config: empty value for '" + key + "'");
    entries_[key] = v;
}

const std::string& Config::raw(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
}

double Config::real(const std::string& key) const { return parse_real(key, raw(key)); }

std::int64_t Config::integer(const std::string& key) const {
    const std::string& s = raw(key);
    std::int64_t v = 0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("config: '" + key + "' expects an integer, got '" + s + "'");
    return v;
}

std::uint64_t Config::unsigned_integer(const std::string& key) const {
    const std::string& s = raw(key);
    std::uint64_t v = 0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end)
        throw ConfigError("config: '" + key + "' expects a nonnegative integer, got '" + s + "'");
    return v;
}

bool Config::flag(const std::string& key) const {
    const std::string& s = raw(key);
    if (s == "true" || s == "on" || s == "1") return true;
    if (s == "false" || s == "off" || s == "0") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + s + "'");
}

std::vector<double> Config::reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : split_list(raw(key))) out.push_back(parse_real(key, item));
    if (out.empty()) throw ConfigError("config: '" + key + "' expects a comma-separated list");
    return out;
}

std::vector<std::size_t> Config::counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(raw(key))) {
        std::size_t v = 0;
        const char* end = item.data() + item.size();
        auto [ptr, ec] = std::from_chars(item.data(), end, v);
        if (ec != std::errc() || ptr != end)
            throw ConfigError("config: '" + key + "' expects nonnegative integers, got '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("config: '" + key + "' expects a comma-separated list");
    return out;
}

void Config::write(std::ostream& os) const {
    for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + text + "'");
    return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("format_real: conversion failed");
    return std::string(buf, ptr);
}

}  // namespace mcfd
