// SPDX-License-Identifier: Apache-2.0
//
// Lenient img-tag scanner. Real pages are malformed; this never fails, it
// just extracts what it can recognize.
#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "kgharvest/http.hpp"
#include "kgharvest/strings.hpp"

namespace kgharvest {

struct ImgTag {
    std::string src;
    std::string alt;
};

namespace detail {

inline std::string decode_html_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (size_t i = 0; i < s.size();) {
        if (s[i] != '&') {
            out += s[i++];
            continue;
        }
        size_t semi = s.find(';', i + 1);
        if (semi == std::string_view::npos || semi - i > 10) {
            out += s[i++];
            continue;
        }
        std::string_view name = s.substr(i + 1, semi - i - 1);
        if (name == "amp") out += '&';
        else if (name == "lt") out += '<';
        else if (name == "gt") out += '>';
        else if (name == "quot") out += '"';
        else if (name == "apos") out += '\'';
        else if (name == "nbsp") out += ' ';
        else if (!name.empty() && name[0] == '#') {
            long code = 0;
            bool ok = true;
            if (name.size() > 1 && (name[1] == 'x' || name[1] == 'X')) {
                for (size_t k = 2; k < name.size() && ok; ++k) {
                    char c = ascii_lower(name[k]);
                    if (c >= '0' && c <= '9') code = code * 16 + (c - '0');
                    else if (c >= 'a' && c <= 'f') code = code * 16 + (c - 'a' + 10);
                    else ok = false;
                }
                ok = ok && name.size() > 2;
            } else {
                for (size_t k = 1; k < name.size() && ok; ++k) {
                    if (name[k] >= '0' && name[k] <= '9') code = code * 10 + (name[k] - '0');
                    else ok = false;
                }
                ok = ok && name.size() > 1;
            }
            if (!ok || code <= 0 || code > 126) {
                out += s[i++];
                continue;
            }
            out += static_cast<char>(code);
        } else {
            out += s[i++];
            continue;
        }
        i = semi + 1;
    }
    return out;
}

// Attribute parse inside one tag body: name[=value], value quoted or bare.
inline void parse_tag_attrs(std::string_view body, std::string& src, std::string& alt) {
    size_t i = 0;
    auto skip_ws = [&] { while (i < body.size() && is_space_char(body[i])) ++i; };
    while (i < body.size()) {
        skip_ws();
        size_t name_start = i;
        while (i < body.size() && !is_space_char(body[i]) && body[i] != '=' && body[i] != '/') ++i;
        if (i == name_start) {
            ++i;
            continue;
        }
        std::string name = case_fold(body.substr(name_start, i - name_start));
        skip_ws();
        std::string value;
        if (i < body.size() && body[i] == '=') {
            ++i;
            skip_ws();
            if (i < body.size() && (body[i] == '"' || body[i] == '\'')) {
                char quote = body[i++];
                size_t end = body.find(quote, i);
                if (end == std::string_view::npos) end = body.size();
                value = std::string(body.substr(i, end - i));
                i = end < body.size() ? end + 1 : end;
            } else {
                size_t end = i;
                while (end < body.size() && !is_space_char(body[end])) ++end;
                value = std::string(body.substr(i, end - i));
                i = end;
            }
        }
        if (name == "src") src = decode_html_entities(value);
        else if (name == "alt") alt = decode_html_entities(value);
    }
}

}  // namespace detail

inline std::vector<ImgTag> scan_img_tags(std::string_view html) {
    std::vector<ImgTag> out;
    std::string lowered = case_fold(html);
    size_t pos = 0;
    while ((pos = lowered.find("<img", pos)) != std::string::npos) {
        size_t after = pos + 4;
        if (after < html.size() && !is_space_char(html[after]) && html[after] != '>' &&
            html[after] != '/') {
            pos = after;  // e.g. "<imgx": not an img tag
            continue;
        }
        size_t close = html.find('>', after);
        if (close == std::string_view::npos) break;
        std::string_view body = html.substr(after, close - after);
        ImgTag tag;
        detail::parse_tag_attrs(body, tag.src, tag.alt);
        if (!tag.src.empty()) out.push_back(std::move(tag));
        pos = close + 1;
    }
    return out;
}

// Alt texts of img tags whose src resolves (against the page URL) to the
// target image URL, order-preserving, exact duplicates removed.
inline std::vector<std::string> extract_alt_texts(std::string_view html,
                                                  const std::string& page_url,
                                                  const std::string& image_url) {
    std::string target = normalize_url(image_url);
    std::vector<std::string> out;
    for (const auto& tag : scan_img_tags(html)) {
        if (normalize_url(resolve_url(page_url, tag.src)) != target) continue;
        if (tag.alt.empty()) continue;
        if (std::find(out.begin(), out.end(), tag.alt) == out.end()) out.push_back(tag.alt);
    }
    return out;
}

}  // namespace kgharvest
