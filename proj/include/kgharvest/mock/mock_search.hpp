// SPDX-License-Identifier: Apache-2.0
//
// Localhost image-search API stub speaking both providers' wire shapes.
// Results come from a query-text lookup table; failures can be scripted.
#pragma once

#include <algorithm>
#include <deque>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgharvest/jsonl.hpp"
#include "kgharvest/mock/mock_server.hpp"
#include "kgharvest/strings.hpp"

namespace kgharvest {

struct MockSearchHit {
    std::string image_url;
    std::string page_url;
    std::string snippet;
};

class MockSearchServer : public MockHttpServer {
public:
    MockSearchServer() {
        server_.Get("/customsearch/v1", [this](const httplib::Request& req, httplib::Response& res) {
            count_request();
            ++google_requests_;
            if (serve_scripted(res)) return;
            int start = 1, num = 10;
            if (req.has_param("start")) start = std::max(1, std::stoi(req.get_param_value("start")));
            if (req.has_param("num")) num = std::stoi(req.get_param_value("num"));
            auto hits = slice(req.get_param_value("q"), start - 1, num);
            json items = json::array();
            for (const auto& h : hits)
                items.push_back(json{{"link", h.image_url},
                                     {"title", h.snippet},
                                     {"image", {{"contextLink", h.page_url}}}});
            res.set_content(json{{"items", items}}.dump(), "application/json");
        });
        server_.Get("/v7.0/images/search", [this](const httplib::Request& req, httplib::Response& res) {
            count_request();
            ++bing_requests_;
            if (serve_scripted(res)) return;
            if (require_key_ && !req.has_header("Ocp-Apim-Subscription-Key")) {
                res.status = 401;
                res.set_content("missing subscription key", "text/plain");
                return;
            }
            int count = 150;
            if (req.has_param("count")) count = std::stoi(req.get_param_value("count"));
            auto hits = slice(req.get_param_value("q"), 0, count);
            json value = json::array();
            for (const auto& h : hits)
                value.push_back(json{{"contentUrl", h.image_url},
                                     {"hostPageUrl", h.page_url},
                                     {"name", h.snippet}});
            res.set_content(json{{"value", value}}.dump(), "application/json");
        });
    }

    std::string google_endpoint() const { return base_url() + "/customsearch/v1"; }
    std::string bing_endpoint() const { return base_url() + "/v7.0/images/search"; }

    void set_results(const std::string& query_text, std::vector<MockSearchHit> hits) {
        std::lock_guard<std::mutex> lock(mu_);
        db_[fold_key(query_text)] = std::move(hits);
    }

    // {"<query>": [{"image_url","page_url","snippet"?}, ...], ...}
    void load_db(const json& db) {
        std::lock_guard<std::mutex> lock(mu_);
        for (auto it = db.begin(); it != db.end(); ++it) {
            std::vector<MockSearchHit> hits;
            for (const auto& h : it.value())
                hits.push_back({h.at("image_url").get<std::string>(),
                                h.value("page_url", ""), h.value("snippet", "")});
            db_[fold_key(it.key())] = std::move(hits);
        }
    }

    void script_status(int status, int times) {
        std::lock_guard<std::mutex> lock(mu_);
        for (int i = 0; i < times; ++i) scripted_.push_back(status);
    }

    void set_require_key(bool on) { require_key_ = on; }
    int google_requests() const { return google_requests_.load(); }
    int bing_requests() const { return bing_requests_.load(); }

private:
    bool serve_scripted(httplib::Response& res) {
        std::lock_guard<std::mutex> lock(mu_);
        if (scripted_.empty()) return false;
        res.status = scripted_.front();
        scripted_.pop_front();
        res.set_content("scripted failure", "text/plain");
        return true;
    }

    std::vector<MockSearchHit> slice(const std::string& q, size_t offset, int count) {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = db_.find(fold_key(q));
        if (it == db_.end() || offset >= it->second.size() || count <= 0) return {};
        size_t end = std::min(it->second.size(), offset + static_cast<size_t>(count));
        return {it->second.begin() + offset, it->second.begin() + end};
    }

    std::mutex mu_;
    std::unordered_map<std::string, std::vector<MockSearchHit>> db_;
    std::deque<int> scripted_;
    bool require_key_ = false;
    std::atomic<int> google_requests_{0};
    std::atomic<int> bing_requests_{0};
};

}  // namespace kgharvest
