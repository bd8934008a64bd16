#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <utility>
#include <vector>

#include "skewscope/telemetry.hpp"

// Line-delimited `key=value` records separated by single spaces. Values never
// contain whitespace. This is the on-disk idiom for traces, fault sidecars and
// findings.

namespace skewscope::records {

struct Field {
    std::string_view key;
    std::string_view value;
};

/// Splits one line into fields. Throws FormatError on a token without '='.
inline std::vector<Field> split(std::string_view line) {
    std::vector<Field> out;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
        if (pos >= line.size()) break;
        std::size_t end = pos;
        while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r') ++end;
        auto token = line.substr(pos, end - pos);
        auto eq = token.find('=');
        if (eq == std::string_view::npos || eq == 0)
            throw FormatError("malformed token '" + std::string(token) + "' (expected key=value)");
        out.push_back({token.substr(0, eq), token.substr(eq + 1)});
        pos = end;
    }
    return out;
}

template <class T>
T parse_value(std::string_view key, std::string_view text) {
    T value{};
    if constexpr (std::is_same_v<T, bool>) {
        if (text == "1" || text == "true") return true;
        if (text == "0" || text == "false") return false;
        throw FormatError("field '" + std::string(key) + "': expected 0/1, got '" + std::string(text) + "'");
    } else if constexpr (std::is_same_v<T, std::string>) {
        return std::string(text);
    } else {
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (ec != std::errc{} || ptr != text.data() + text.size())
            throw FormatError("field '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
        return value;
    }
}

template <class T>
void append_value(std::string& out, const T& v) {
    if constexpr (std::is_same_v<T, bool>) {
        out.push_back(v ? '1' : '0');
    } else if constexpr (std::is_convertible_v<T, std::string_view>) {
        out.append(std::string_view(v));
    } else {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
        out.append(buf, ptr);
    }
}

/// Accumulates `key=value` tokens for one line.
class Writer {
public:
    template <class T>
    Writer& add(std::string_view key, const T& value) {
        if (!line_.empty()) line_.push_back(' ');
        line_.append(key);
        line_.push_back('=');
        append_value(line_, value);
        return *this;
    }

    [[nodiscard]] const std::string& str() const { return line_; }

private:
    std::string line_;
};

/// Looks up fields by key and tracks which ones were consumed.
class Reader {
public:
    explicit Reader(std::vector<Field> fields) : fields_(std::move(fields)), used_(fields_.size(), false) {}

    [[nodiscard]] const Field* find(std::string_view key) {
        for (std::size_t i = 0; i < fields_.size(); ++i) {
            if (fields_[i].key == key) {
                used_[i] = true;
                return &fields_[i];
            }
        }
        return nullptr;
    }

    template <class T>
    T get(std::string_view key) {
        const auto* f = find(key);
        if (!f) throw FormatError("missing field '" + std::string(key) + "'");
        return parse_value<T>(key, f->value);
    }

    template <class T>
    std::optional<T> get_optional(std::string_view key) {
        const auto* f = find(key);
        if (!f) return std::nullopt;
        return parse_value<T>(key, f->value);
    }

    /// Keys present in the line but never read.
    [[nodiscard]] std::vector<std::string> unused() const {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < fields_.size(); ++i) {
            if (!used_[i]) out.emplace_back(fields_[i].key);
        }
        return out;
    }

private:
    std::vector<Field> fields_;
    std::vector<bool> used_;
};

/// Percent-encodes bytes that would break a token: whitespace, '%', '|' and
/// control characters. Used for free-text values such as labels.
inline std::string escape(std::string_view text) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c <= 0x20 || c == '%' || c == '|' || c == 0x7F) {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xF]);
        } else {
            out.push_back(ch);
        }
    }
    return out;
}

/// Inverse of escape(). Throws FormatError on a malformed escape.
inline std::string unescape(std::string_view text) {
    auto hex = [&](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        throw FormatError("malformed escape in '" + std::string(text) + "'");
    };
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '%') {
            out.push_back(text[i]);
            continue;
        }
        if (i + 2 >= text.size()) throw FormatError("truncated escape in '" + std::string(text) + "'");
        out.push_back(static_cast<char>(hex(text[i + 1]) * 16 + hex(text[i + 2])));
        i += 2;
    }
    return out;
}

/// Joins escaped items with '|'; splits the same back. An empty list is "".
inline std::string join_escaped(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out.push_back('|');
        out += escape(items[i]);
    }
    return out;
}

inline std::vector<std::string> split_escaped(std::string_view text) {
    std::vector<std::string> out;
    if (text.empty()) return out;
    std::size_t pos = 0;
    while (true) {
        const auto bar = text.find('|', pos);
        out.push_back(unescape(text.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos)));
        if (bar == std::string_view::npos) break;
        pos = bar + 1;
    }
    return out;
}

}  // namespace skewscope::records
