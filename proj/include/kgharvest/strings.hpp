// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kgharvest {

inline char ascii_lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline std::string case_fold(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), ascii_lower);
    return out;
}

inline bool is_space_char(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && is_space_char(s[b])) ++b;
    while (e > b && is_space_char(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

// Collapses any whitespace run to a single space and trims the ends,
// so every query/label string is single-line.
inline std::string normalize_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = false;
    for (char c : s) {
        if (is_space_char(c)) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(c);
    }
    return out;
}

inline std::string fold_key(std::string_view s) {
    return case_fold(normalize_whitespace(s));
}

inline std::vector<std::string> split(std::string_view s, std::string_view sep) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (true) {
        size_t next = s.find(sep, pos);
        if (next == std::string_view::npos) {
            out.emplace_back(s.substr(pos));
            break;
        }
        out.emplace_back(s.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Word tokens: maximal runs of alphanumeric characters. Apostrophes and
// hyphens split, so "rock'n'roll" yields three tokens.
inline std::vector<std::string> word_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (is_word_char(c)) {
            cur.push_back(ascii_lower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Case-insensitive search for `needle` in `haystack` with non-word
// characters (or string ends) on both sides. Returns npos when absent.
inline size_t find_whole_word(std::string_view haystack, std::string_view needle, size_t from = 0) {
    if (needle.empty() || haystack.size() < needle.size()) return std::string_view::npos;
    const std::string h = case_fold(haystack);
    const std::string n = case_fold(needle);
    size_t pos = from;
    while ((pos = h.find(n, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || !is_word_char(h[pos - 1]);
        const size_t end = pos + n.size();
        const bool right_ok = end == h.size() || !is_word_char(h[end]);
        if (left_ok && right_ok) return pos;
        ++pos;
    }
    return std::string_view::npos;
}

inline bool contains_whole_word(std::string_view haystack, std::string_view needle) {
    return find_whole_word(haystack, needle) != std::string_view::npos;
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    return case_fold(haystack).find(case_fold(needle)) != std::string::npos;
}

// Number of Unicode scalar values in a UTF-8 string. Counts every byte
// that is not a continuation byte, so malformed bytes count as one each.
inline size_t utf8_length(std::string_view s) {
    size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace kgharvest
