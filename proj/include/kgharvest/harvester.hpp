// SPDX-License-Identifier: Apache-2.0
//
// Concurrent image downloader. Every input result lands in exactly one of
// three buckets: linked into a record, failed, or quarantined; the manifest
// is rebuildable from checkpoint + store with zero network calls.
#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kgharvest/checkpoint.hpp"
#include "kgharvest/concurrency.hpp"
#include "kgharvest/errors.hpp"
#include "kgharvest/hash.hpp"
#include "kgharvest/html_scan.hpp"
#include "kgharvest/http.hpp"
#include "kgharvest/image_io.hpp"
#include "kgharvest/jsonl.hpp"
#include "kgharvest/rate_limit.hpp"
#include "kgharvest/search_client.hpp"

namespace kgharvest {

struct ImageRecord {
    std::string id;  // = content hash
    std::string image_url;
    std::string page_url;
    uint32_t width = 0;
    uint32_t height = 0;
    uint64_t byte_size = 0;
    std::string content_hash;
    std::string ext;
    std::string path;  // store-relative: images/<hh>/<hash>.<ext>
    std::vector<std::string> alt_texts;
    std::vector<std::string> query_refs;
    std::vector<std::string> result_ids;  // provenance links (conservation)
    std::string fetched_at;
    bool excluded = false;
    std::string excluded_reason;

    static ImageRecord from_json(const json& j) {
        ImageRecord r;
        r.id = j.at("id").get<std::string>();
        r.image_url = j.value("image_url", "");
        r.page_url = j.value("page_url", "");
        r.width = j.value("width", 0u);
        r.height = j.value("height", 0u);
        r.byte_size = j.value("byte_size", 0ull);
        r.content_hash = j.value("content_hash", "");
        r.ext = j.value("ext", "");
        r.path = j.value("path", "");
        if (j.contains("alt_texts")) r.alt_texts = j.at("alt_texts").get<std::vector<std::string>>();
        if (j.contains("query_refs")) r.query_refs = j.at("query_refs").get<std::vector<std::string>>();
        if (j.contains("result_ids")) r.result_ids = j.at("result_ids").get<std::vector<std::string>>();
        r.fetched_at = j.value("fetched_at", "");
        r.excluded = j.value("excluded", false);
        r.excluded_reason = j.value("excluded_reason", "");
        return r;
    }

    json to_json() const {
        return json{{"id", id},
                    {"image_url", image_url},
                    {"page_url", page_url},
                    {"width", width},
                    {"height", height},
                    {"byte_size", byte_size},
                    {"content_hash", content_hash},
                    {"ext", ext},
                    {"path", path},
                    {"alt_texts", alt_texts},
                    {"query_refs", query_refs},
                    {"result_ids", result_ids},
                    {"fetched_at", fetched_at},
                    {"excluded", excluded},
                    {"excluded_reason", excluded_reason}};
    }
};

struct HarvestConfig {
    std::filesystem::path store_root;  // images live under store_root/images/
    size_t workers = 64;
    std::chrono::milliseconds host_delay{200};
    bool fixed_timestamps = false;
    bool use_engine_snippets = false;  // treat result snippets as alt candidates
};

struct HarvestOutcome {
    std::vector<ImageRecord> records;  // sorted by id
    std::vector<json> failures;        // download failures: {result_id, stage, reason}
    std::vector<json> alt_failures;    // page fetch problems; image kept
    std::vector<json> quarantined;     // {result_id, image_url, reason}
    size_t network_calls = 0;
    size_t inputs = 0;
};

namespace detail {

inline std::string store_relative_path(const std::string& hash, const std::string& ext) {
    return "images/" + hash.substr(0, 2) + "/" + hash + "." + ext;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FatalError("cannot write " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string url_host_key(const std::string& url) {
    auto parts = parse_url(url);
    if (!parts) return url;
    return parts->host + (parts->port.empty() ? "" : ":" + parts->port);
}

// Per-result fetch outcome, independent of scheduling order so the merge
// phase can run deterministically afterwards.
struct FetchOutcome {
    std::string status;  // "done" | "failed" | "quarantined"
    std::string reason;
    std::string hash;
    std::string ext;
    uint32_t width = 0, height = 0;
    uint64_t byte_size = 0;
    std::vector<std::string> alts;
    bool alt_fetch_failed = false;
    std::string alt_fail_reason;

    json to_checkpoint_extra() const {
        json j{{"reason", reason}};
        if (status == "done") {
            j = json{{"hash", hash},     {"ext", ext},           {"width", width},
                     {"height", height}, {"bytes", byte_size},   {"alts", alts},
                     {"alt_fetch_failed", alt_fetch_failed},     {"alt_fail_reason", alt_fail_reason}};
        } else if (status == "quarantined") {
            j["hash"] = hash;
        }
        return j;
    }

    static FetchOutcome from_checkpoint_row(const json& row) {
        FetchOutcome f;
        f.status = row.at("status").get<std::string>();
        f.reason = row.value("reason", "");
        f.hash = row.value("hash", "");
        f.ext = row.value("ext", "");
        f.width = row.value("width", 0u);
        f.height = row.value("height", 0u);
        f.byte_size = row.value("bytes", 0ull);
        if (row.contains("alts")) f.alts = row.at("alts").get<std::vector<std::string>>();
        f.alt_fetch_failed = row.value("alt_fetch_failed", false);
        f.alt_fail_reason = row.value("alt_fail_reason", "");
        return f;
    }
};

}  // namespace detail

// Replayable checkpoint store that keeps the full outcome row per result id.
class HarvestCheckpoint {
public:
    HarvestCheckpoint(const std::filesystem::path& path, bool fixed_timestamps)
        : store_(path, fixed_timestamps) {
        if (std::filesystem::exists(path)) {
            for_each_jsonl(path, [&](const json& row) {
                rows_[row.at("id").get<std::string>()] = row;
            });
        }
    }

    std::optional<detail::FetchOutcome> lookup(const std::string& result_id) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = rows_.find(result_id);
        if (it == rows_.end()) return std::nullopt;
        return detail::FetchOutcome::from_checkpoint_row(it->second);
    }

    void record(const std::string& result_id, const detail::FetchOutcome& outcome) {
        json extra = outcome.to_checkpoint_extra();
        store_.record(result_id, outcome.status, extra);
        extra["id"] = result_id;
        extra["status"] = outcome.status;
        std::lock_guard<std::mutex> lock(mu_);
        rows_[result_id] = std::move(extra);
    }

private:
    CheckpointStore store_;
    std::map<std::string, json> rows_;
    mutable std::mutex mu_;
};

// Download + scrape each result, then fold outcomes into content-addressed
// records in input order (first occurrence of a hash names the record).
inline HarvestOutcome harvest(const std::vector<SearchResult>& raw_results,
                              const HarvestConfig& config, HttpTransport& transport,
                              HarvestCheckpoint& checkpoint) {
    // Duplicate result ids would double-count conservation; keep first.
    std::vector<const SearchResult*> results;
    {
        std::set<std::string> seen;
        for (const auto& r : raw_results)
            if (seen.insert(r.id).second) results.push_back(&r);
    }

    HarvestOutcome outcome;
    outcome.inputs = results.size();
    std::vector<detail::FetchOutcome> fetched(results.size());
    std::atomic<size_t> network_calls{0};
    HostThrottle throttle(config.host_delay);

    parallel_for(results.size(), config.workers, [&](size_t i) {
        const SearchResult& r = *results[i];
        if (auto cached = checkpoint.lookup(r.id)) {
            // Completed on a previous run. Reuse unless the stored image
            // vanished, in which case the work is redone.
            if (cached->status != "done" ||
                std::filesystem::exists(config.store_root /
                                        detail::store_relative_path(cached->hash, cached->ext))) {
                fetched[i] = *cached;
                return;
            }
        }
        detail::FetchOutcome f;
        auto image_result = throttle.with_host(detail::url_host_key(r.image_url), [&] {
            ++network_calls;
            return transport.get(r.image_url);
        });
        if (!image_result.ok()) {
            f.status = "failed";
            f.reason = image_result.is_transport_error()
                           ? image_result.transport_error
                           : "HTTP " + std::to_string(image_result.response->status);
            checkpoint.record(r.id, f);
            fetched[i] = std::move(f);
            return;
        }
        const std::string& bytes = image_result.response->body;
        f.hash = sha256_hex(bytes);
        f.byte_size = bytes.size();
        ImageFormat format = sniff_image_format(bytes);
        auto dims = image_dimensions(bytes);
        if (format == ImageFormat::unknown || !dims || dims->width == 0 || dims->height == 0) {
            f.status = "quarantined";
            f.reason = format == ImageFormat::unknown ? "unrecognized_format" : "decode_failed";
            checkpoint.record(r.id, f);
            fetched[i] = std::move(f);
            return;
        }
        f.ext = image_extension(format);
        f.width = dims->width;
        f.height = dims->height;
        auto path = config.store_root / detail::store_relative_path(f.hash, f.ext);
        if (!std::filesystem::exists(path)) detail::write_file_atomic(path, bytes);

        if (!r.page_url.empty()) {
            auto page_result = throttle.with_host(detail::url_host_key(r.page_url), [&] {
                ++network_calls;
                return transport.get(r.page_url);
            });
            if (page_result.ok()) {
                f.alts = extract_alt_texts(page_result.response->body, r.page_url, r.image_url);
            } else {
                f.alt_fetch_failed = true;
                f.alt_fail_reason = page_result.is_transport_error()
                                        ? page_result.transport_error
                                        : "HTTP " + std::to_string(page_result.response->status);
            }
        }
        if (config.use_engine_snippets && !r.snippet.empty()) f.alts.push_back(r.snippet);
        f.status = "done";
        checkpoint.record(r.id, f);
        fetched[i] = std::move(f);
    });

    outcome.network_calls = network_calls.load();

    // Deterministic merge in input order.
    std::map<std::string, size_t> by_hash;
    std::vector<ImageRecord> records;
    for (size_t i = 0; i < results.size(); ++i) {
        const SearchResult& r = *results[i];
        const detail::FetchOutcome& f = fetched[i];
        if (f.status == "failed") {
            outcome.failures.push_back(
                json{{"result_id", r.id}, {"stage", "download"}, {"reason", f.reason}});
            continue;
        }
        if (f.status == "quarantined") {
            outcome.quarantined.push_back(
                json{{"result_id", r.id}, {"image_url", r.image_url}, {"reason", f.reason}});
            continue;
        }
        if (f.alt_fetch_failed)
            outcome.alt_failures.push_back(json{
                {"result_id", r.id}, {"stage", "alt_text"}, {"reason", f.alt_fail_reason}});
        auto it = by_hash.find(f.hash);
        if (it == by_hash.end()) {
            ImageRecord rec;
            rec.id = f.hash;
            rec.content_hash = f.hash;
            rec.image_url = r.image_url;
            rec.page_url = r.page_url;
            rec.width = f.width;
            rec.height = f.height;
            rec.byte_size = f.byte_size;
            rec.ext = f.ext;
            rec.path = detail::store_relative_path(f.hash, f.ext);
            rec.fetched_at = config.fixed_timestamps ? iso8601_utc(0) : now_iso8601();
            by_hash.emplace(f.hash, records.size());
            records.push_back(std::move(rec));
            it = by_hash.find(f.hash);
        }
        ImageRecord& rec = records[it->second];
        for (const auto& alt : f.alts)
            if (std::find(rec.alt_texts.begin(), rec.alt_texts.end(), alt) == rec.alt_texts.end())
                rec.alt_texts.push_back(alt);
        if (std::find(rec.query_refs.begin(), rec.query_refs.end(), r.query_id) ==
            rec.query_refs.end())
            rec.query_refs.push_back(r.query_id);
        rec.result_ids.push_back(r.id);
    }
    std::sort(records.begin(), records.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });
    outcome.records = std::move(records);
    return outcome;
}

}  // namespace kgharvest
