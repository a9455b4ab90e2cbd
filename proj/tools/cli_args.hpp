#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "blocksparse/errors.hpp"
#include "blocksparse/model.hpp"

namespace blocksparse::cli {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(std::string_view text, std::string_view what)
{
    const std::string s = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw DomainError("invalid number '" + s + "' for " + std::string(what));
    }
    return v;
}

// Grid points print as their shortest decimal form (0.7, not 0.7000000000000001).
inline double tidy(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 12);
    double out = v;
    std::from_chars(buf, res.ptr, out);
    return out;
}

/// "lo:hi:step" -> lo, lo + step, ..., up to hi inclusive.
inline std::vector<double> parse_range(std::string_view spec, std::string_view what)
{
    std::vector<std::string> parts;
    std::stringstream ss{std::string(spec)};
    for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
    if (parts.size() != 3) throw DomainError(std::string(what) + ": expected lo:hi:step, got '" + std::string(spec) + "'");
    const double lo = parse_double(parts[0], what);
    const double hi = parse_double(parts[1], what);
    const double step = parse_double(parts[2], what);
    if (!(step > 0.0) || !(hi >= lo)) {
        throw DomainError(std::string(what) + ": empty grid '" + std::string(spec) + "' (need hi >= lo and step > 0)");
    }
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(tidy(lo + static_cast<double>(i) * step));
    return out;
}

/// "v1,v2,..." -> values; empty entries are rejected.
inline std::vector<double> parse_list(std::string_view spec, std::string_view what)
{
    std::vector<double> out;
    std::stringstream ss{std::string(spec)};
    for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_double(item, what));
    if (out.empty()) throw DomainError(std::string(what) + ": empty list");
    return out;
}

/// "sphere:MU" or "gauss:SIGMA".
inline model::Slab parse_slab(std::string_view spec)
{
    const auto colon = spec.find(':');
    if (colon == std::string_view::npos) throw DomainError("slab: expected sphere:MU or gauss:SIGMA");
    const auto kind = spec.substr(0, colon);
    const double v = parse_double(spec.substr(colon + 1), "slab");
    if (!(v > 0.0)) throw DomainError("slab: scale must be positive");
    if (kind == "sphere") return model::SphereUniform{v};
    if (kind == "gauss") return model::GaussianIso{v};
    throw DomainError("slab: unknown kind '" + std::string(kind) + "' (expected sphere or gauss)");
}

struct ConfigEntry {
    std::string key; // long flag name, dashes
    std::string value;
};

/// Reads `key = value` lines; `#` starts a comment. Keys use underscores in
/// place of the flag's dashes.
inline std::vector<ConfigEntry> read_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open config file '" + path + "'");
    std::vector<ConfigEntry> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw DomainError("config file '" + path + "' line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(std::string_view(t).substr(0, eq));
        std::replace(key.begin(), key.end(), '_', '-');
        entries.push_back({key, trim(std::string_view(t).substr(eq + 1))});
    }
    return entries;
}

/// Removes --config from args and appends the file's settings for every flag
/// not already given on the command line.
inline std::vector<std::string> merge_config(std::vector<std::string> args, const std::set<std::string>& switches)
{
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw DomainError("--config requires a path");
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (path.empty()) return args;

    auto given = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };
    std::vector<std::string> extra;
    for (const auto& e : read_config(path)) {
        const std::string flag = "--" + e.key;
        if (given(flag)) continue;
        if (switches.count(e.key) != 0) {
            if (e.value == "true" || e.value == "1" || e.value == "yes") extra.push_back(flag);
            else if (!(e.value == "false" || e.value == "0" || e.value == "no")) {
                throw DomainError("config key " + e.key + ": expected true or false");
            }
            continue;
        }
        extra.push_back(flag);
        extra.push_back(e.value);
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

} // namespace blocksparse::cli
