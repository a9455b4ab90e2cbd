#pragma once

#include <charconv>
#include <cmath>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>

namespace blocksparse::csv {

/// Shortest decimal form that parses back to the same double; NaN becomes an
/// empty field.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return {};
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, res.ptr};
}

class Field {
public:
    Field(double v) : text_(format_double(v)) {}
    Field(int v) : text_(std::to_string(v)) {}
    Field(long v) : text_(std::to_string(v)) {}
    Field(long long v) : text_(std::to_string(v)) {}
    Field(unsigned long v) : text_(std::to_string(v)) {}
    Field(unsigned long long v) : text_(std::to_string(v)) {}
    Field(std::string_view s) : text_(s) {}
    Field(const char* s) : text_(s) {}
    Field(const std::string& s) : text_(s) {}

    const std::string& text() const noexcept { return text_; }

private:
    std::string text_;
};

inline void write_row(std::ostream& os, std::initializer_list<Field> fields)
{
    bool first = true;
    for (const auto& f : fields) {
        if (!first) os << ',';
        os << f.text();
        first = false;
    }
    os << '\n';
}

} // namespace blocksparse::csv
