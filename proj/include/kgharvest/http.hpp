// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <httplib.h>

#include "kgharvest/strings.hpp"

namespace kgharvest {

struct UrlParts {
    std::string scheme;
    std::string host;
    std::string port;   // empty when unspecified
    std::string path;   // always begins with '/' when authority present
    std::string query;  // without '?'
};

inline std::optional<UrlParts> parse_url(std::string_view url) {
    UrlParts p;
    size_t scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) return std::nullopt;
    p.scheme = case_fold(url.substr(0, scheme_end));
    size_t auth_begin = scheme_end + 3;
    size_t auth_end = url.find_first_of("/?#", auth_begin);
    std::string_view authority = url.substr(auth_begin, auth_end == std::string_view::npos
                                                            ? std::string_view::npos
                                                            : auth_end - auth_begin);
    size_t colon = authority.rfind(':');
    if (colon != std::string_view::npos && authority.find(']', colon) == std::string_view::npos) {
        p.host = case_fold(authority.substr(0, colon));
        p.port = std::string(authority.substr(colon + 1));
    } else {
        p.host = case_fold(authority);
    }
    if (auth_end == std::string_view::npos) {
        p.path = "/";
        return p;
    }
    std::string_view rest = url.substr(auth_end);
    size_t frag = rest.find('#');
    if (frag != std::string_view::npos) rest = rest.substr(0, frag);
    size_t q = rest.find('?');
    if (q != std::string_view::npos) {
        p.query = std::string(rest.substr(q + 1));
        rest = rest.substr(0, q);
    }
    p.path = rest.empty() ? std::string("/") : std::string(rest);
    if (p.path[0] == '?') p.path = "/";
    return p;
}

inline std::string remove_dot_segments(std::string_view path) {
    std::vector<std::string> out;
    bool trailing_slash = ends_with(path, "/") || ends_with(path, "/.") || ends_with(path, "/..");
    for (const auto& seg : split(path, "/")) {
        if (seg.empty() || seg == ".") continue;
        if (seg == "..") {
            if (!out.empty()) out.pop_back();
            continue;
        }
        out.push_back(seg);
    }
    std::string joined = "/" + join(out, "/");
    if (trailing_slash && joined.back() != '/') joined += "/";
    return joined;
}

inline std::string default_port(std::string_view scheme) {
    if (scheme == "http") return "80";
    if (scheme == "https") return "443";
    return "";
}

// Canonical form used to match img/@src against the searched image URL:
// lowercase scheme and host, default port stripped, dot segments removed,
// fragment dropped, query kept (CDNs encode size variants there).
inline std::string normalize_url(std::string_view url) {
    auto p = parse_url(url);
    if (!p) return std::string(url);
    std::string out = p->scheme + "://" + p->host;
    if (!p->port.empty() && p->port != default_port(p->scheme)) out += ":" + p->port;
    out += remove_dot_segments(p->path);
    if (!p->query.empty()) out += "?" + p->query;
    return out;
}

// RFC 3986 relative reference resolution, minus userinfo handling.
inline std::string resolve_url(std::string_view base, std::string_view ref) {
    if (ref.empty()) return std::string(base);
    if (ref.find("://") != std::string_view::npos) return std::string(ref);
    auto b = parse_url(base);
    if (!b) return std::string(ref);
    std::string authority = b->host + (b->port.empty() ? "" : ":" + b->port);
    if (starts_with(ref, "//")) return b->scheme + ":" + std::string(ref);
    size_t frag = ref.find('#');
    if (frag != std::string_view::npos) ref = ref.substr(0, frag);
    if (ref.empty()) return std::string(base);
    std::string prefix = b->scheme + "://" + authority;
    if (ref[0] == '/') return prefix + remove_dot_segments(ref);
    if (ref[0] == '?') return prefix + b->path + std::string(ref);
    std::string dir = b->path.substr(0, b->path.rfind('/') + 1);
    return prefix + remove_dot_segments(dir + std::string(ref));
}

inline std::string percent_encode(std::string_view s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        bool unreserved = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                          (c >= '0' && c <= '9') || c == '-' || c == '.' || c == '_' || c == '~';
        if (unreserved) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

using ParamList = std::vector<std::pair<std::string, std::string>>;

inline std::string encode_query_string(const ParamList& params) {
    std::string out;
    for (const auto& [k, v] : params) {
        if (!out.empty()) out += "&";
        out += percent_encode(k) + "=" + percent_encode(v);
    }
    return out;
}

using HeaderList = std::vector<std::pair<std::string, std::string>>;

struct HttpResponse {
    int status = 0;
    std::string body;
};

// transport_error covers everything below HTTP: refused connections,
// timeouts, DNS failures. Any actual HTTP status is a response.
struct HttpResult {
    std::optional<HttpResponse> response;
    std::string transport_error;

    bool ok() const { return response && response->status >= 200 && response->status < 300; }
    bool is_transport_error() const { return !response.has_value(); }
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResult get(const std::string& url, const HeaderList& headers = {}) = 0;
    virtual HttpResult post(const std::string& url, const std::string& body,
                            const std::string& content_type, const HeaderList& headers = {}) = 0;
};

class HttplibTransport : public HttpTransport {
public:
    explicit HttplibTransport(int timeout_sec = 30, size_t max_body_bytes = 0)
        : timeout_sec_(timeout_sec), max_body_bytes_(max_body_bytes) {}

    HttpResult get(const std::string& url, const HeaderList& headers = {}) override {
        return run(url, headers, {}, {});
    }

    HttpResult post(const std::string& url, const std::string& body, const std::string& content_type,
                    const HeaderList& headers = {}) override {
        return run(url, headers, body, content_type);
    }

private:
    HttpResult run(const std::string& url, const HeaderList& headers,
                   const std::optional<std::string>& body, const std::string& content_type) {
        auto parts = parse_url(url);
        if (!parts) return {.response = std::nullopt, .transport_error = "unparseable url: " + url};
        std::string origin = parts->scheme + "://" + parts->host +
                             (parts->port.empty() ? "" : ":" + parts->port);
        httplib::Client client(origin);
        client.set_connection_timeout(timeout_sec_, 0);
        client.set_read_timeout(timeout_sec_, 0);
        client.set_follow_location(true);
        httplib::Headers hs;
        for (const auto& [k, v] : headers) hs.emplace(k, v);
        std::string target = parts->path + (parts->query.empty() ? "" : "?" + parts->query);

        httplib::Result res = body
            ? client.Post(target, hs, *body, content_type)
            : client.Get(target, hs);
        if (!res) {
            return {.response = std::nullopt, .transport_error = httplib::to_string(res.error())};
        }
        if (max_body_bytes_ && res->body.size() > max_body_bytes_) {
            return {.response = std::nullopt, .transport_error = "response body exceeds size cap"};
        }
        return {.response = HttpResponse{res->status, res->body}, .transport_error = ""};
    }

    int timeout_sec_;
    size_t max_body_bytes_;
};

}  // namespace kgharvest
