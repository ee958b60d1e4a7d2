// SPDX-License-Identifier: Apache-2.0
//
// Pluggable text-generation backends. Requests and responses are JSON:
//
//   classify_visual: {"task":"classify_visual","name":...,"description":...}
//                 -> {"visual": true|false}
//   attributes:     {"task":"attributes","name","description","aliases":[...],
//                    "category":"Color"}
//                 -> {"attributes":[{"value":...,"search_query":...}, ...]}  (1..10 items)
//   natural_type:   {"task":"natural_type","name","description","ancestors":[...]}
//                 -> {"type_name":...,"reason":...}
//
// A repeated request may carry an "error" field describing why the prior
// response was rejected (corrective retry). Responses are validated against
// these shapes strictly by the callers; malformed output is rejected whole.
#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>

#include "kgharvest/hash.hpp"
#include "kgharvest/http.hpp"
#include "kgharvest/jsonl.hpp"
#include "kgharvest/rate_limit.hpp"
#include "kgharvest/strings.hpp"

namespace kgharvest {

struct LlmError : std::runtime_error {
    explicit LlmError(const std::string& msg) : std::runtime_error(msg) {}
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string id() const = 0;
    // Returns the structured response; throws LlmError on failure.
    virtual json generate(const json& request) = 0;
};

// Deterministic scripted backend. The table maps a request key to the
// response; key = task|fold(name)[|category], with "|retry" appended when
// the request carries an "error" field and such an entry exists.
class LookupLlmBackend : public LlmBackend {
public:
    LookupLlmBackend(std::string id, json table) : id_(std::move(id)), table_(std::move(table)) {}

    static LookupLlmBackend from_file(const std::string& id, const std::filesystem::path& path) {
        return LookupLlmBackend(id, read_json_file(path));
    }

    static std::string key_for(const json& request) {
        std::string key = request.value("task", "");
        key += "|" + fold_key(request.value("name", ""));
        std::string category = request.value("category", "");
        if (!category.empty()) key += "|" + category;
        return key;
    }

    std::string id() const override { return id_; }

    json generate(const json& request) override {
        ++calls_;
        std::string key = key_for(request);
        if (request.contains("error") && table_.contains(key + "|retry"))
            return table_.at(key + "|retry");
        if (!table_.contains(key)) throw LlmError(id_ + ": no scripted response for " + key);
        return table_.at(key);
    }

    int calls() const { return calls_.load(); }

private:
    std::string id_;
    json table_;
    std::atomic<int> calls_{0};
};

// HTTP adapter: POST {endpoint}/generate with {"backend":id,"request":...};
// expects {"response": <object>}.
class HttpLlmBackend : public LlmBackend {
public:
    HttpLlmBackend(std::string id, std::string endpoint, HttpTransport& transport)
        : id_(std::move(id)), endpoint_(std::move(endpoint)), transport_(transport) {}

    std::string id() const override { return id_; }

    json generate(const json& request) override {
        json body{{"backend", id_}, {"request", request}};
        auto res = transport_.post(endpoint_ + "/generate", body.dump(), "application/json", {});
        if (res.is_transport_error()) throw LlmError(id_ + ": " + res.transport_error);
        if (!res.ok()) throw LlmError(id_ + ": HTTP " + std::to_string(res.response->status));
        json parsed = json::parse(res.response->body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("response") || !parsed["response"].is_object())
            throw LlmError(id_ + ": malformed response envelope");
        return parsed["response"];
    }

private:
    std::string id_;
    std::string endpoint_;
    HttpTransport& transport_;
};

// Disk cache keyed by (backend id, request hash); reruns replay for free.
class CachedLlmBackend : public LlmBackend {
public:
    CachedLlmBackend(std::shared_ptr<LlmBackend> inner, std::filesystem::path cache_dir)
        : inner_(std::move(inner)), path_(cache_dir / (inner_->id() + ".cache.jsonl")) {
        std::filesystem::create_directories(cache_dir);
        if (std::filesystem::exists(path_)) {
            for_each_jsonl(path_, [&](const json& row) {
                cache_[row.at("key").get<std::string>()] = row.at("response");
            });
        }
        out_.open(path_, std::ios::app);
        if (!out_) throw std::runtime_error("cannot open llm cache " + path_.string());
    }

    std::string id() const override { return inner_->id(); }

    json generate(const json& request) override {
        std::string key = fnv1a64_hex(request.dump());
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        json response = inner_->generate(request);
        std::lock_guard<std::mutex> lock(mu_);
        auto [it, inserted] = cache_.emplace(key, response);
        if (inserted) {
            out_ << json{{"key", key}, {"response", response}}.dump() << '\n';
            out_.flush();
        }
        return it->second;
    }

private:
    std::shared_ptr<LlmBackend> inner_;
    std::filesystem::path path_;
    std::unordered_map<std::string, json> cache_;
    std::ofstream out_;
    std::mutex mu_;
};

// Retry wrapper shared by all LLM call sites.
inline json llm_generate_with_retries(LlmBackend& backend, const json& request,
                                      const RetryPolicy& policy) {
    for (int attempt = 0;; ++attempt) {
        try {
            return backend.generate(request);
        } catch (const LlmError&) {
            if (attempt + 1 >= policy.max_attempts) throw;
            std::this_thread::sleep_for(policy.backoff_for(attempt));
        }
    }
}

}  // namespace kgharvest
