// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures and reference oracles for the test suites. The oracles are
// deliberately naive: breadth-first closure, pairwise O(n^2) clustering,
// series/continued-fraction gamma. They answer the same questions as the
// library through entirely different code paths.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kgharvest/http.hpp"
#include "kgharvest/jsonl.hpp"

namespace kgtest {

class TempDir {
public:
    explicit TempDir(const std::string& tag = "kgh") {
        auto base = std::filesystem::temp_directory_path();
        std::mt19937_64 rng(std::random_device{}());
        for (int i = 0; i < 64; ++i) {
            auto p = base / (tag + "-" + std::to_string(rng()));
            std::error_code ec;
            if (std::filesystem::create_directory(p, ec)) {
                path_ = p;
                return;
            }
        }
        throw std::runtime_error("TempDir: cannot create a unique directory");
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    operator const std::filesystem::path&() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& content) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// Random graph model for extraction tests.

struct OracleNode {
    std::string id;
    std::string label;  // empty means unlabeled
    int sitelinks = 0;
};

struct OracleEdge {
    std::string from;  // child
    std::string pred;  // "P279" | "P171" | "P31"
    std::string to;    // parent
};

struct OracleGraph {
    std::vector<OracleNode> nodes;
    std::vector<OracleEdge> edges;
    std::vector<std::string> roots;

    kgharvest::json to_mock_json() const {
        kgharvest::json jn = kgharvest::json::array();
        for (const auto& n : nodes) {
            kgharvest::json row{{"id", n.id}, {"sitelinks", n.sitelinks}};
            if (!n.label.empty()) row["label"] = n.label;
            jn.push_back(row);
        }
        kgharvest::json je = kgharvest::json::array();
        for (const auto& e : edges)
            je.push_back({{"from", e.from}, {"pred", e.pred}, {"to", e.to}});
        return kgharvest::json{{"nodes", jn}, {"edges", je}};
    }
};

// Random DAG-ish graph: edges point from higher index to lower (child->parent
// among earlier nodes), which guarantees termination without special-casing.
inline OracleGraph random_graph(std::mt19937_64& rng, size_t n_nodes) {
    OracleGraph g;
    std::uniform_int_distribution<int> links(0, 400);
    std::uniform_int_distribution<int> pred_pick(0, 9);
    for (size_t i = 0; i < n_nodes; ++i) {
        OracleNode node;
        node.id = "N" + std::to_string(i);
        // ~10% unlabeled to exercise the label filter.
        node.label = (rng() % 10 == 0) ? "" : "node " + std::to_string(i);
        node.sitelinks = links(rng);
        g.nodes.push_back(node);
    }
    for (size_t i = 1; i < n_nodes; ++i) {
        size_t fanout = 1 + rng() % 3;
        for (size_t k = 0; k < fanout; ++k) {
            OracleEdge e;
            e.from = "N" + std::to_string(i);
            e.to = "N" + std::to_string(rng() % i);
            int p = pred_pick(rng);
            e.pred = p < 6 ? "P279" : (p < 8 ? "P171" : "P31");
            g.edges.push_back(e);
        }
    }
    size_t n_roots = 1 + rng() % 3;
    std::set<std::string> chosen;
    while (chosen.size() < n_roots) chosen.insert("N" + std::to_string(rng() % std::max<size_t>(1, n_nodes / 4)));
    g.roots.assign(chosen.begin(), chosen.end());
    return g;
}

// Reference closure: everything reaching a root through zero or more
// subclass/taxon edges. Instance-of never participates. Traversal passes
// through filtered nodes; the label and sitelink filters act on output only.
inline std::set<std::string> bfs_expected_ids(const OracleGraph& g,
                                              const std::vector<std::string>& relations,
                                              int min_sitelinks) {
    std::set<std::string> preds(relations.begin(), relations.end());
    std::map<std::string, std::vector<std::string>> children;
    for (const auto& e : g.edges)
        if (preds.count(e.pred)) children[e.to].push_back(e.from);

    std::set<std::string> reached;
    std::queue<std::string> frontier;
    for (const auto& r : g.roots)
        if (reached.insert(r).second) frontier.push(r);
    while (!frontier.empty()) {
        std::string cur = frontier.front();
        frontier.pop();
        for (const auto& c : children[cur])
            if (reached.insert(c).second) frontier.push(c);
    }

    std::set<std::string> out;
    for (const auto& n : g.nodes)
        if (reached.count(n.id) && !n.label.empty() && n.sitelinks >= min_sitelinks)
            out.insert(n.id);
    return out;
}

// ---------------------------------------------------------------------------
// Pairwise clustering oracle for dedup tests.

inline double oracle_cosine(const std::vector<float>& a, const std::vector<float>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += double(a[i]) * b[i];
        na += double(a[i]) * a[i];
        nb += double(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) return 0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Naive label propagation to a fixed point over the full pair matrix.
inline std::vector<int> oracle_components(const std::vector<std::vector<float>>& descriptors,
                                          double threshold) {
    size_t n = descriptors.size();
    std::vector<int> comp(n);
    for (size_t i = 0; i < n; ++i) comp[i] = int(i);
    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j)
                if (oracle_cosine(descriptors[i], descriptors[j]) >= threshold) {
                    int m = std::min(comp[i], comp[j]);
                    if (comp[i] != m || comp[j] != m) {
                        comp[i] = comp[j] = m;
                        changed = true;
                    }
                }
    }
    return comp;
}

inline size_t count_components(const std::vector<int>& comp) {
    std::set<int> ids(comp.begin(), comp.end());
    return ids.size();
}

// ---------------------------------------------------------------------------
// Chi-square upper tail, for goodness-of-fit checks on sampler frequencies.
// Regularized upper incomplete gamma Q(a, x): series for x < a+1, Lentz
// continued fraction otherwise.

inline double gamma_q(double a, double x) {
    if (x < 0 || a <= 0) return 1.0;
    if (x == 0) return 1.0;
    double gln = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-14) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
    }
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-14) break;
    }
    return std::exp(-x + a * std::log(x) - gln) * h;
}

inline double chi_square_p(const std::vector<uint64_t>& observed,
                           const std::vector<double>& expected_prob, uint64_t total) {
    double stat = 0;
    for (size_t i = 0; i < observed.size(); ++i) {
        double e = expected_prob[i] * double(total);
        double diff = double(observed[i]) - e;
        stat += diff * diff / e;
    }
    return gamma_q(0.5 * double(observed.size() - 1), 0.5 * stat);
}

// ---------------------------------------------------------------------------
// Transport decorator that counts round trips, for zero-network assertions.

class CountingTransport : public kgharvest::HttpTransport {
public:
    explicit CountingTransport(kgharvest::HttpTransport& inner) : inner_(inner) {}

    kgharvest::HttpResult get(const std::string& url,
                              const kgharvest::HeaderList& headers = {}) override {
        ++gets_;
        return inner_.get(url, headers);
    }
    kgharvest::HttpResult post(const std::string& url, const std::string& body,
                               const std::string& content_type,
                               const kgharvest::HeaderList& headers = {}) override {
        ++posts_;
        return inner_.post(url, body, content_type, headers);
    }

    int gets() const { return gets_.load(); }
    int posts() const { return posts_.load(); }
    int total() const { return gets_.load() + posts_.load(); }

private:
    kgharvest::HttpTransport& inner_;
    std::atomic<int> gets_{0};
    std::atomic<int> posts_{0};
};

// Scripted transport: routes are tried in registration order and matched by
// URL substring. A route with a finite budget is skipped once spent, so a
// failure route stacked before a success route models "fails N times, then
// recovers". status 0 means a transport-level error (no HTTP response).
class ScriptedTransport : public kgharvest::HttpTransport {
public:
    void serve(const std::string& url_part, int status, std::string body, int budget = -1) {
        routes_.push_back({url_part, status, std::move(body), budget});
    }
    void fail_first(const std::string& url_part, int times, int status) {
        serve(url_part, status, "", times);
    }

    kgharvest::HttpResult get(const std::string& url,
                              const kgharvest::HeaderList& = {}) override {
        std::lock_guard<std::mutex> lock(mu_);
        ++gets_;
        urls_.push_back(url);
        for (auto& r : routes_) {
            if (r.budget == 0) continue;
            if (url.find(r.url_part) == std::string::npos) continue;
            if (r.budget > 0) --r.budget;
            if (r.status == 0)
                return {.response = std::nullopt, .transport_error = "scripted outage"};
            return {.response = kgharvest::HttpResponse{r.status, r.body}, .transport_error = ""};
        }
        return {.response = kgharvest::HttpResponse{404, "not scripted"}, .transport_error = ""};
    }

    kgharvest::HttpResult post(const std::string& url, const std::string&, const std::string&,
                               const kgharvest::HeaderList& = {}) override {
        return get(url);
    }

    int gets() const { return gets_; }
    const std::vector<std::string>& urls() const { return urls_; }

private:
    struct Route {
        std::string url_part;
        int status;
        std::string body;
        int budget;  // -1 unlimited
    };

    std::vector<Route> routes_;
    int gets_ = 0;
    std::vector<std::string> urls_;
    std::mutex mu_;
};

}  // namespace kgtest
