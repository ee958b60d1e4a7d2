// SPDX-License-Identifier: Apache-2.0
//
// Image-search engine adapters. Request encodings are deterministic and
// covered by golden tests; costs are tracked in integer micro-dollars so
// ledger totals are exact under any concurrent interleaving.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "kgharvest/checkpoint.hpp"
#include "kgharvest/concurrency.hpp"
#include "kgharvest/entity.hpp"
#include "kgharvest/errors.hpp"
#include "kgharvest/hash.hpp"
#include "kgharvest/http.hpp"
#include "kgharvest/query_build.hpp"
#include "kgharvest/rate_limit.hpp"

namespace kgharvest {

// Unit costs in micro-dollars per call: $5 / 1000 calls and $18 / 1000 calls.
constexpr long long kGoogleCallMicro = 5000;
constexpr long long kBingCallMicro = 18000;

class CostLedger {
public:
    void bill(const std::string& engine) {
        if (engine == "google")
            ++google_calls_;
        else if (engine == "bing")
            ++bing_calls_;
        else
            throw ContractError("unknown engine billed: " + engine);
    }

    long long google_calls() const { return google_calls_.load(); }
    long long bing_calls() const { return bing_calls_.load(); }

    long long total_micro() const {
        return google_calls_.load() * kGoogleCallMicro + bing_calls_.load() * kBingCallMicro;
    }

    // "$18.00" style; a third decimal appears only when the tenth-cent digit
    // is non-zero (single calls bill fractions of a cent).
    static std::string format_micro(long long micro) {
        double dollars = static_cast<double>(micro) / 1e6;
        char buf[32];
        std::snprintf(buf, sizeof buf, micro % 10000 == 0 ? "$%.2f" : "$%.3f", dollars);
        return buf;
    }

    std::string total_formatted() const { return format_micro(total_micro()); }

private:
    std::atomic<long long> google_calls_{0};
    std::atomic<long long> bing_calls_{0};
};

struct SearchCredentials {
    std::string bing_key;
    std::string google_key;
    std::string google_cse_id;

    static SearchCredentials from_env() {
        auto read = [](const char* name) {
            const char* v = std::getenv(name);
            return v ? std::string(v) : std::string();
        };
        return {read("BING_API_KEY"), read("GOOGLE_API_KEY"), read("GOOGLE_CSE_ID")};
    }
};

struct SearchRequest {
    std::string query_id;
    std::string engine;  // "bing" | "google"
    int page = 1;
    std::string url;     // full encoded URL
    HeaderList headers;  // auth material travels in headers for bing
};

struct SearchResult {
    std::string id;
    std::string image_url;
    std::string page_url;
    std::string engine;
    int raw_rank = 0;
    std::string query_id;
    std::string snippet;  // engine-provided text, used only behind a flag

    static SearchResult from_json(const json& j) {
        SearchResult r;
        r.id = j.at("id").get<std::string>();
        r.image_url = j.at("image_url").get<std::string>();
        r.page_url = j.at("page_url").get<std::string>();
        r.engine = j.value("engine", "");
        r.raw_rank = j.value("raw_rank", 0);
        r.query_id = j.at("query_id").get<std::string>();
        r.snippet = j.value("snippet", "");
        return r;
    }

    json to_json() const {
        return json{{"id", id},           {"image_url", image_url}, {"page_url", page_url},
                    {"engine", engine},   {"raw_rank", raw_rank},   {"query_id", query_id},
                    {"snippet", snippet}};
    }
};

inline std::string result_id(const std::string& image_url, const std::string& page_url,
                             const std::string& query_id) {
    return fnv1a64_hex(image_url + "|" + page_url + "|" + query_id);
}

constexpr int kGoogleResultsPerPage = 10;
constexpr int kGoogleMaxPages = 10;
constexpr int kBingResultsPerCall = 150;
inline const char* kGoogleExcludeTerms = "drawing clipart illustration cartoon vector painting";

// Pages requested per query: 2 for plain entity queries, 4 for
// entity-attribute, 10 for type-attribute; the 150-result engine takes one.
inline int pages_for(QueryKind kind, const std::string& engine) {
    if (engine == "bing") return 1;
    if (engine == "google") {
        switch (kind) {
            case QueryKind::entity: return 2;
            case QueryKind::entity_attribute: return 4;
            case QueryKind::natural_type_attribute: return kGoogleMaxPages;
        }
    }
    throw ConfigError("unknown engine: " + engine);
}

// orTerms carries every alias plus the natural type, space-joined.
inline std::string google_or_terms(const Entity& entity,
                                   const std::optional<std::string>& natural_type) {
    std::vector<std::string> terms = entity.aliases;
    if (natural_type && !natural_type->empty()) terms.push_back(*natural_type);
    return join(terms, " ");
}

inline SearchRequest build_google_request(const SearchQuery& query, int page,
                                          const Entity* entity,
                                          const std::optional<std::string>& natural_type,
                                          const SearchCredentials& creds,
                                          const std::string& endpoint) {
    if (page < 1 || page > kGoogleMaxPages)
        throw ConfigError("google page out of range: " + std::to_string(page));
    ParamList params;
    params.emplace_back("q", query.text);
    params.emplace_back("searchType", "image");
    params.emplace_back("num", std::to_string(kGoogleResultsPerPage));
    params.emplace_back("start", std::to_string(1 + kGoogleResultsPerPage * (page - 1)));
    params.emplace_back("lr", "lang-en");
    params.emplace_back("imgColorType", "color");
    params.emplace_back("imgType", "photo");
    params.emplace_back("excludeTerms", kGoogleExcludeTerms);
    if (query.kind != QueryKind::natural_type_attribute && entity) {
        std::string or_terms = google_or_terms(*entity, natural_type);
        if (!or_terms.empty()) params.emplace_back("orTerms", or_terms);
    }
    params.emplace_back("key", creds.google_key);
    params.emplace_back("cx", creds.google_cse_id);
    SearchRequest req;
    req.query_id = query.id;
    req.engine = "google";
    req.page = page;
    req.url = endpoint + "?" + encode_query_string(params);
    return req;
}

// The 150-result engine has no orTerms equivalent: the natural type is
// appended to the query text itself ("jaguar" -> "jaguar animal"), skipped
// when the type already appears as a word.
inline std::string bing_query_text(const SearchQuery& query,
                                   const std::optional<std::string>& natural_type) {
    std::string text = query.text;
    if (query.kind != QueryKind::natural_type_attribute && natural_type &&
        !natural_type->empty() && !contains_whole_word(text, *natural_type))
        text += " " + *natural_type;
    return text;
}

inline SearchRequest build_bing_request(const SearchQuery& query,
                                        const std::optional<std::string>& natural_type,
                                        const SearchCredentials& creds,
                                        const std::string& endpoint) {
    ParamList params;
    params.emplace_back("q", bing_query_text(query, natural_type));
    params.emplace_back("count", std::to_string(kBingResultsPerCall));
    params.emplace_back("offset", "0");
    params.emplace_back("imageType", "Photo");
    params.emplace_back("color", "ColorOnly");
    SearchRequest req;
    req.query_id = query.id;
    req.engine = "bing";
    req.page = 1;
    req.url = endpoint + "?" + encode_query_string(params);
    req.headers.emplace_back("Ocp-Apim-Subscription-Key", creds.bing_key);
    return req;
}

// Thrown when an engine reports an auth/quota condition: no further calls
// to that engine can succeed, so dispatch must stop rather than burn money.
struct EngineFatalError : std::runtime_error {
    explicit EngineFatalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::vector<SearchResult> parse_google_results(const json& body, const SearchRequest& req) {
    std::vector<SearchResult> out;
    if (!body.contains("items") || !body["items"].is_array()) return out;
    int start = 1 + kGoogleResultsPerPage * (req.page - 1);
    int i = 0;
    for (const json& item : body["items"]) {
        if (!item.contains("link") || !item["link"].is_string()) continue;
        SearchResult r;
        r.image_url = item["link"].get<std::string>();
        if (item.contains("image") && item["image"].is_object())
            r.page_url = item["image"].value("contextLink", "");
        if (item.contains("title") && item["title"].is_string())
            r.snippet = item["title"].get<std::string>();
        r.engine = "google";
        r.raw_rank = start + i++;
        r.query_id = req.query_id;
        r.id = result_id(r.image_url, r.page_url, r.query_id);
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<SearchResult> parse_bing_results(const json& body, const SearchRequest& req) {
    std::vector<SearchResult> out;
    if (!body.contains("value") || !body["value"].is_array()) return out;
    int i = 0;
    for (const json& item : body["value"]) {
        if (!item.contains("contentUrl") || !item["contentUrl"].is_string()) continue;
        SearchResult r;
        r.image_url = item["contentUrl"].get<std::string>();
        r.page_url = item.value("hostPageUrl", "");
        if (item.contains("name") && item["name"].is_string())
            r.snippet = item["name"].get<std::string>();
        r.engine = "bing";
        r.raw_rank = ++i;
        r.query_id = req.query_id;
        r.id = result_id(r.image_url, r.page_url, r.query_id);
        out.push_back(std::move(r));
    }
    return out;
}

// One API call with retries. Every response that reaches us was billed by
// the provider, so the ledger increments once per received response,
// retries included; transport-level failures cost nothing.
inline std::vector<SearchResult> execute(const SearchRequest& request, HttpTransport& transport,
                                         CostLedger& ledger, TokenBucket& limiter,
                                         RetryPolicy retry = {}) {
    std::string last_error;
    for (int attempt = 0;; ++attempt) {
        limiter.acquire();
        auto res = transport.get(request.url, request.headers);
        if (!res.is_transport_error()) {
            ledger.bill(request.engine);
            int status = res.response->status;
            if (status == 401 || status == 403 || status == 429)
                throw EngineFatalError(request.engine + ": auth/quota failure HTTP " +
                                       std::to_string(status));
            if (status >= 200 && status < 300) {
                json body = json::parse(res.response->body, nullptr, false);
                if (body.is_discarded()) throw FatalError(request.engine + ": unparseable response");
                return request.engine == "google" ? parse_google_results(body, request)
                                                  : parse_bing_results(body, request);
            }
            last_error = "HTTP " + std::to_string(status);
            if (status < 500) throw FatalError(request.engine + ": " + last_error);
        } else {
            last_error = res.transport_error;
        }
        if (attempt + 1 >= retry.max_attempts)
            throw FatalError(request.engine + ": " + last_error);
        std::this_thread::sleep_for(retry.backoff_for(attempt));
    }
}

struct DispatchConfig {
    std::string engine_default = "bing";
    bool use_google_for_living = false;
    std::string google_endpoint = "https://www.googleapis.com/customsearch/v1";
    std::string bing_endpoint = "https://api.bing.microsoft.com/v7.0/images/search";
    double qps = 3.0;
    RetryPolicy retry;
    std::optional<long long> budget_cap_micro;  // nullopt = unlimited
    size_t workers = 8;
};

inline std::string engine_for(const SearchQuery& q, const DispatchConfig& cfg) {
    if (!q.engine_hint.empty()) return q.engine_hint;
    if (cfg.use_google_for_living && q.domain_tag == "living") return "google";
    return cfg.engine_default;
}

struct DispatchOutcome {
    std::vector<SearchResult> results;  // sorted (query_id, raw_rank, image_url)
    size_t queries_done = 0;
    size_t queries_skipped = 0;   // already complete in the checkpoint
    size_t queries_failed = 0;
    bool budget_exhausted = false;
    bool engine_disabled = false;
};

// Engine-aware natural-type lookup used when building requests.
struct QueryContext {
    const Entity* entity = nullptr;  // resolved from query.entity_id; may be null
    std::optional<std::string> natural_type;
};

// Dispatch all queries, respecting per-engine rate limits, the dollar
// budget, and the resume checkpoint. A budget stop is clean: in-flight
// queries finish being recorded and nothing is marked done spuriously.
inline DispatchOutcome dispatch_search(
    const std::vector<SearchQuery>& queries,
    const std::function<QueryContext(const SearchQuery&)>& context_for, HttpTransport& transport,
    const DispatchConfig& cfg, CostLedger& ledger, CheckpointStore& checkpoint,
    const SearchCredentials& creds) {
    DispatchOutcome outcome;
    std::mutex mu;
    TokenBucket google_limiter(cfg.qps, std::max(1.0, cfg.qps));
    TokenBucket bing_limiter(cfg.qps, std::max(1.0, cfg.qps));
    std::atomic<bool> stop_budget{false};
    std::atomic<bool> stop_engine{false};

    auto over_budget = [&](const std::string& engine) {
        if (!cfg.budget_cap_micro) return false;
        long long next = engine == "google" ? kGoogleCallMicro : kBingCallMicro;
        return ledger.total_micro() + next > *cfg.budget_cap_micro;
    };

    parallel_for(queries.size(), cfg.workers, [&](size_t i) {
        const SearchQuery& q = queries[i];
        if (stop_budget.load() || stop_engine.load()) return;
        if (checkpoint.is_done(q.id)) {
            std::lock_guard<std::mutex> lock(mu);
            ++outcome.queries_skipped;
            return;
        }
        std::string engine = engine_for(q, cfg);
        QueryContext ctx = context_for(q);
        std::vector<SearchResult> collected;
        int pages = pages_for(q.kind, engine);
        bool failed = false;
        for (int page = 1; page <= pages; ++page) {
            if (over_budget(engine)) {
                stop_budget = true;
                return;  // not marked done; a later run with budget resumes it
            }
            SearchRequest req =
                engine == "google"
                    ? build_google_request(q, page, ctx.entity, ctx.natural_type, creds,
                                           cfg.google_endpoint)
                    : build_bing_request(q, ctx.natural_type, creds, cfg.bing_endpoint);
            try {
                auto page_results =
                    execute(req, transport, ledger,
                            engine == "google" ? google_limiter : bing_limiter, cfg.retry);
                size_t expected = engine == "google" ? kGoogleResultsPerPage : kBingResultsPerCall;
                bool short_page = page_results.size() < expected;
                collected.insert(collected.end(), page_results.begin(), page_results.end());
                if (short_page) break;
            } catch (const EngineFatalError&) {
                stop_engine = true;
                failed = true;
                break;
            } catch (const FatalError& e) {
                checkpoint.record(q.id, "failed", json{{"reason", e.what()}});
                failed = true;
                break;
            }
        }
        std::lock_guard<std::mutex> lock(mu);
        if (failed) {
            ++outcome.queries_failed;
            return;
        }
        outcome.results.insert(outcome.results.end(), collected.begin(), collected.end());
        checkpoint.record(q.id, "done", json{{"result_count", collected.size()}});
        ++outcome.queries_done;
    });

    outcome.budget_exhausted = stop_budget.load();
    outcome.engine_disabled = stop_engine.load();
    std::sort(outcome.results.begin(), outcome.results.end(),
              [](const SearchResult& a, const SearchResult& b) {
                  if (a.query_id != b.query_id) return a.query_id < b.query_id;
                  if (a.raw_rank != b.raw_rank) return a.raw_rank < b.raw_rank;
                  return a.image_url < b.image_url;
              });
    return outcome;
}

}  // namespace kgharvest
