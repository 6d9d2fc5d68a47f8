#pragma once

#include "mcfd/types.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mcfd {

/// Schema violations: unknown keys, malformed values, missing mandatory
/// entries. Raised before any computation starts.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Flat "key = value" store. Keys are dotted ("solver.h"); a line
/// "[solver]" prefixes the following keys with "solver.". '#' starts a
/// comment. Values are kept as the literal strings read so that writing a
/// config back reproduces every number exactly.
class Config {
public:
    static Config parse(std::istream& is, const std::string& origin = "<input>");
    static Config load(const std::string& path);

    bool has(const std::string& key) const { return entries_.count(key) > 0; }
    void set(const std::string& key, const std::string& value);
    void erase(const std::string& key) { entries_.erase(key); }
    /// Throws ConfigError when the key is absent.
    const std::string& raw(const std::string& key) const;

    std::string text(const std::string& key) const { return raw(key); }
    double real(const std::string& key) const;
    std::int64_t integer(const std::string& key) const;
    std::uint64_t unsigned_integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> reals(const std::string& key) const;
    std::vector<std::size_t> counts(const std::string& key) const;

    const std::map<std::string, std::string>& entries() const { return entries_; }

    /// One "key = value" line per entry in key order.
    void write(std::ostream& os) const;

private:
    std::map<std::string, std::string> entries_;
};

/// "key=value" as given on a command line.
std::pair<std::string, std::string> split_assignment(const std::string& text);

/// Shortest decimal form that parses back to the same double.
std::string format_real(double v);

}  // namespace mcfd
