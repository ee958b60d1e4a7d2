// SPDX-License-Identifier: Apache-2.0
//
// Localhost SPARQL endpoint stub. It parses the query family emitted by
// build_sparql (VALUES roots, relation path, sitelink threshold, optional
// LIMIT/OFFSET) and evaluates reachability over an in-memory graph, so
// extraction tests compare the real client against an independent oracle.
#pragma once

#include <algorithm>
#include <deque>
#include <mutex>
#include <regex>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgharvest/jsonl.hpp"
#include "kgharvest/mock/mock_server.hpp"
#include "kgharvest/strings.hpp"

namespace kgharvest {

struct MockKgNode {
    std::string id;
    std::string label;  // empty = no English label; excluded from results
    std::string desc;
    long long sitelinks = 0;
    std::vector<std::string> aliases;
};

struct MockKgEdge {
    std::string from;
    std::string pred;  // "P279", "P171", "P31"
    std::string to;
};

struct MockKgGraph {
    std::vector<MockKgNode> nodes;
    std::vector<MockKgEdge> edges;

    static MockKgGraph from_json(const json& j) {
        MockKgGraph g;
        for (const auto& n : j.at("nodes")) {
            MockKgNode node;
            node.id = n.at("id").get<std::string>();
            node.label = n.value("label", "");
            node.desc = n.value("desc", "");
            node.sitelinks = n.value("sitelinks", 0LL);
            if (n.contains("aliases"))
                node.aliases = n.at("aliases").get<std::vector<std::string>>();
            g.nodes.push_back(std::move(node));
        }
        for (const auto& e : j.at("edges"))
            g.edges.push_back({e.at("from").get<std::string>(), e.at("pred").get<std::string>(),
                               e.at("to").get<std::string>()});
        return g;
    }

    // Nodes n with n (pred∈preds)* root for some root; includes the roots.
    std::set<std::string> reachable(const std::vector<std::string>& roots,
                                    const std::unordered_set<std::string>& preds) const {
        std::unordered_map<std::string, std::vector<std::string>> incoming;
        for (const auto& e : edges)
            if (preds.count(e.pred)) incoming[e.to].push_back(e.from);
        std::set<std::string> seen;
        std::vector<std::string> stack;
        for (const auto& r : roots)
            if (seen.insert(r).second) stack.push_back(r);
        while (!stack.empty()) {
            std::string cur = stack.back();
            stack.pop_back();
            auto it = incoming.find(cur);
            if (it == incoming.end()) continue;
            for (const auto& up : it->second)
                if (seen.insert(up).second) stack.push_back(up);
        }
        return seen;
    }
};

class MockKgServer : public MockHttpServer {
public:
    MockKgServer() {
        server_.Post("/sparql", [this](const httplib::Request& req, httplib::Response& res) {
            count_request();
            {
                std::lock_guard<std::mutex> lock(mu_);
                if (!scripted_statuses_.empty()) {
                    res.status = scripted_statuses_.front();
                    scripted_statuses_.pop_front();
                    res.set_content("scripted failure", "text/plain");
                    return;
                }
            }
            handle(req.get_param_value("query"), res);
        });
    }

    std::string endpoint_url() const { return base_url() + "/sparql"; }

    void set_graph(MockKgGraph graph) {
        std::lock_guard<std::mutex> lock(mu_);
        graph_ = std::move(graph);
    }

    // The next `times` requests answer with `status` instead of results.
    void script_status(int status, int times) {
        std::lock_guard<std::mutex> lock(mu_);
        for (int i = 0; i < times; ++i) scripted_statuses_.push_back(status);
    }

private:
    void handle(const std::string& query, httplib::Response& res) {
        std::smatch m;
        std::regex values_re(R"re(VALUES \?typ \{([^}]*)\})re");
        if (!std::regex_search(query, m, values_re)) {
            res.status = 400;
            res.set_content("missing VALUES clause", "text/plain");
            return;
        }
        std::vector<std::string> roots;
        {
            std::regex id_re(R"(wd:(\S+))");
            std::string values = m[1];
            for (auto it = std::sregex_iterator(values.begin(), values.end(), id_re);
                 it != std::sregex_iterator(); ++it)
                roots.push_back((*it)[1]);
        }
        std::unordered_set<std::string> preds;
        {
            std::regex path_re(R"re(\?ent ([^\n]*?) \?typ \.)re");
            if (!std::regex_search(query, m, path_re)) {
                res.status = 400;
                res.set_content("missing property path", "text/plain");
                return;
            }
            std::string path = m[1];
            std::regex prop_re(R"(wdt:(P\d+))");
            for (auto it = std::sregex_iterator(path.begin(), path.end(), prop_re);
                 it != std::sregex_iterator(); ++it)
                preds.insert((*it)[1]);
        }
        long long threshold = 0;
        {
            std::regex filter_re(R"re(FILTER\(\?links >= (\d+)\))re");
            if (std::regex_search(query, m, filter_re)) threshold = std::stoll(m[1]);
        }
        long long limit = -1, offset = 0;
        {
            std::regex limit_re(R"(LIMIT (\d+))"), offset_re(R"(OFFSET (\d+))");
            if (std::regex_search(query, m, limit_re)) limit = std::stoll(m[1]);
            if (std::regex_search(query, m, offset_re)) offset = std::stoll(m[1]);
        }

        std::vector<const MockKgNode*> rows;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto ids = graph_.reachable(roots, preds);
            for (const auto& node : graph_.nodes)
                if (ids.count(node.id) && !node.label.empty() && node.sitelinks >= threshold)
                    rows.push_back(&node);
        }
        std::sort(rows.begin(), rows.end(), [](const MockKgNode* a, const MockKgNode* b) {
            if (a->sitelinks != b->sitelinks) return a->sitelinks > b->sitelinks;
            return a->id < b->id;
        });
        if (offset > 0) rows.erase(rows.begin(), rows.begin() + std::min<size_t>(offset, rows.size()));
        if (limit >= 0 && rows.size() > static_cast<size_t>(limit)) rows.resize(limit);

        json bindings = json::array();
        for (const MockKgNode* n : rows) {
            json row{
                {"ent", {{"type", "uri"}, {"value", "http://www.wikidata.org/entity/" + n->id}}},
                {"label", {{"xml:lang", "en"}, {"type", "literal"}, {"value", n->label}}},
                {"links",
                 {{"datatype", "http://www.w3.org/2001/XMLSchema#integer"},
                  {"type", "literal"},
                  {"value", std::to_string(n->sitelinks)}}},
                {"aliases", {{"type", "literal"}, {"value", join(n->aliases, ";;")}}}};
            if (!n->desc.empty())
                row["desc"] = {{"xml:lang", "en"}, {"type", "literal"}, {"value", n->desc}};
            bindings.push_back(std::move(row));
        }
        json body{{"head", {{"vars", {"ent", "label", "desc", "links", "aliases"}}}},
                  {"results", {{"bindings", bindings}}}};
        res.set_content(body.dump(), "application/sparql-results+json");
    }

    std::mutex mu_;
    MockKgGraph graph_;
    std::deque<int> scripted_statuses_;
};

}  // namespace kgharvest
