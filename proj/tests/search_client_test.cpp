// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "kgharvest/checkpoint.hpp"
#include "kgharvest/http.hpp"
#include "kgharvest/mock/mock_search.hpp"
#include "kgharvest/search_client.hpp"

using namespace kgharvest;

namespace {

SearchQuery make_query(const std::string& text, QueryKind kind,
                       const std::string& entity_id = "",
                       const std::string& hint = "") {
    SearchQuery q;
    q.text = text;
    q.kind = kind;
    q.id = SearchQuery::make_id(kind, text);
    q.entity_id = entity_id;
    q.domain_tag = "world";
    q.engine_hint = hint;
    return q;
}

SearchCredentials test_creds() { return {"BK", "GK", "CX"}; }

RetryPolicy fast_retry() {
    RetryPolicy p;
    p.initial_backoff = std::chrono::milliseconds(1);
    return p;
}

DispatchConfig mock_config(const MockSearchServer& server) {
    DispatchConfig cfg;
    cfg.google_endpoint = server.google_endpoint();
    cfg.bing_endpoint = server.bing_endpoint();
    cfg.qps = 10000.0;
    cfg.retry = fast_retry();
    cfg.workers = 1;
    return cfg;
}

// Serves every query from the db without natural-type context.
QueryContext no_context(const SearchQuery&) { return {}; }

std::vector<MockSearchHit> make_hits(const std::string& stem, int n) {
    std::vector<MockSearchHit> hits;
    for (int i = 0; i < n; ++i) {
        std::string tag = stem + std::to_string(i);
        hits.push_back({"http://img.test/" + tag + ".jpg", "http://page.test/" + tag, tag});
    }
    return hits;
}

}  // namespace

TEST_CASE("cost ledger bills the published per-call rates") {
    CostLedger bing_only;
    for (int i = 0; i < 1000; ++i) bing_only.bill("bing");
    CHECK(bing_only.total_micro() == 18'000'000);
    CHECK(CostLedger::format_micro(bing_only.total_micro()) == "$18.00");

    CostLedger google_only;
    for (int i = 0; i < 1000; ++i) google_only.bill("google");
    CHECK(google_only.total_micro() == 5'000'000);
    CHECK(CostLedger::format_micro(google_only.total_micro()) == "$5.00");

    CostLedger unknown;
    CHECK_THROWS_AS(unknown.bill("altavista"), ContractError);
}

TEST_CASE("format_micro keeps a third decimal only when cents truncate") {
    CHECK(CostLedger::format_micro(0) == "$0.00");
    CHECK(CostLedger::format_micro(10'000) == "$0.01");
    CHECK(CostLedger::format_micro(5'000) == "$0.005");
    CHECK(CostLedger::format_micro(18'000) == "$0.018");
    // 30 google calls + 18 bing calls: 150000 + 324000 micro.
    CostLedger mixed;
    for (int i = 0; i < 30; ++i) mixed.bill("google");
    for (int i = 0; i < 18; ++i) mixed.bill("bing");
    CHECK(mixed.total_micro() == 474'000);
    CHECK(CostLedger::format_micro(mixed.total_micro()) == "$0.474");
}

TEST_CASE("google request carries the full parameter block in order") {
    Entity e;
    e.id = "Q1";
    e.name = "red panda";
    e.aliases = {"firefox", "lesser panda"};
    SearchQuery q = make_query("red panda", QueryKind::entity, "Q1");
    auto req = build_google_request(q, 1, &e, std::string("mammal"), test_creds(),
                                    "http://s.test/customsearch/v1");
    CHECK(req.engine == "google");
    CHECK(req.page == 1);
    CHECK(req.headers.empty());
    CHECK(req.url ==
          "http://s.test/customsearch/v1?q=red%20panda&searchType=image&num=10&start=1"
          "&lr=lang-en&imgColorType=color&imgType=photo"
          "&excludeTerms=drawing%20clipart%20illustration%20cartoon%20vector%20painting"
          "&orTerms=firefox%20lesser%20panda%20mammal&key=GK&cx=CX");

    auto page3 = build_google_request(q, 3, &e, std::nullopt, test_creds(), "http://s.test/c");
    CHECK(page3.url.find("&start=21&") != std::string::npos);
    CHECK(page3.page == 3);

    CHECK_THROWS_AS(build_google_request(q, 0, &e, std::nullopt, test_creds(), "e"), ConfigError);
    CHECK_THROWS_AS(build_google_request(q, 11, &e, std::nullopt, test_creds(), "e"), ConfigError);
}

TEST_CASE("google orTerms is dropped without an entity or for type queries") {
    Entity e;
    e.id = "Q1";
    e.name = "red panda";
    e.aliases = {"firefox"};

    SECTION("no entity resolved") {
        SearchQuery q = make_query("red panda", QueryKind::entity);
        auto req = build_google_request(q, 1, nullptr, std::string("mammal"), test_creds(), "e");
        CHECK(req.url.find("orTerms") == std::string::npos);
    }
    SECTION("natural-type query never narrows to one entity") {
        SearchQuery q = make_query("striped mammal", QueryKind::natural_type_attribute);
        auto req = build_google_request(q, 1, &e, std::string("mammal"), test_creds(), "e");
        CHECK(req.url.find("orTerms") == std::string::npos);
    }
    SECTION("no aliases and no type leaves nothing to or") {
        Entity bare;
        bare.id = "Q2";
        bare.name = "obelisk";
        SearchQuery q = make_query("obelisk", QueryKind::entity, "Q2");
        auto req = build_google_request(q, 1, &bare, std::nullopt, test_creds(), "e");
        CHECK(req.url.find("orTerms") == std::string::npos);
    }
}

TEST_CASE("bing query text appends the natural type unless already present") {
    SearchQuery jaguar = make_query("jaguar", QueryKind::entity, "Q1");
    CHECK(bing_query_text(jaguar, std::string("animal")) == "jaguar animal");

    SearchQuery phrase = make_query("the animal jaguar", QueryKind::entity, "Q1");
    CHECK(bing_query_text(phrase, std::string("animal")) == "the animal jaguar");

    // Substring hits are not enough: "animals" must still gain the word.
    SearchQuery plural = make_query("jaguar among animals", QueryKind::entity, "Q1");
    CHECK(bing_query_text(plural, std::string("animal")) == "jaguar among animals animal");

    SearchQuery typed = make_query("spotted animal", QueryKind::natural_type_attribute);
    CHECK(bing_query_text(typed, std::string("animal")) == "spotted animal");
    SearchQuery typed2 = make_query("striped mammal", QueryKind::natural_type_attribute);
    CHECK(bing_query_text(typed2, std::string("cat")) == "striped mammal");

    CHECK(bing_query_text(jaguar, std::nullopt) == "jaguar");
    CHECK(bing_query_text(jaguar, std::string("")) == "jaguar");
}

TEST_CASE("bing request golden") {
    SearchQuery q = make_query("jaguar", QueryKind::entity, "Q1");
    auto req = build_bing_request(q, std::string("animal"), test_creds(),
                                  "http://s.test/v7.0/images/search");
    CHECK(req.engine == "bing");
    CHECK(req.page == 1);
    CHECK(req.url ==
          "http://s.test/v7.0/images/search?q=jaguar%20animal&count=150&offset=0"
          "&imageType=Photo&color=ColorOnly");
    REQUIRE(req.headers.size() == 1);
    CHECK(req.headers[0].first == "Ocp-Apim-Subscription-Key");
    CHECK(req.headers[0].second == "BK");
}

TEST_CASE("page counts per engine and kind") {
    CHECK(pages_for(QueryKind::entity, "bing") == 1);
    CHECK(pages_for(QueryKind::entity_attribute, "bing") == 1);
    CHECK(pages_for(QueryKind::natural_type_attribute, "bing") == 1);
    CHECK(pages_for(QueryKind::entity, "google") == 2);
    CHECK(pages_for(QueryKind::entity_attribute, "google") == 4);
    CHECK(pages_for(QueryKind::natural_type_attribute, "google") == 10);
    CHECK_THROWS_AS(pages_for(QueryKind::entity, "duckduckgo"), ConfigError);
}

TEST_CASE("engine choice: hint, living-domain routing, default") {
    DispatchConfig cfg;
    SearchQuery q = make_query("okapi", QueryKind::entity, "Q1");
    CHECK(engine_for(q, cfg) == "bing");

    q.engine_hint = "google";
    CHECK(engine_for(q, cfg) == "google");

    q.engine_hint.clear();
    q.domain_tag = "living";
    CHECK(engine_for(q, cfg) == "bing");
    cfg.use_google_for_living = true;
    CHECK(engine_for(q, cfg) == "google");
    q.domain_tag = "world";
    CHECK(engine_for(q, cfg) == "bing");
}

TEST_CASE("execute bills every received response, retries included") {
    MockSearchServer server;
    server.set_results("okapi", make_hits("ok", 3));
    server.start();
    HttplibTransport transport(5);
    TokenBucket limiter(10000.0, 10000.0);

    SECTION("5xx retry is a billed call") {
        server.script_status(503, 1);
        SearchQuery q = make_query("okapi", QueryKind::entity, "Q1");
        auto req = build_bing_request(q, std::nullopt, test_creds(), server.bing_endpoint());
        CostLedger ledger;
        auto results = execute(req, transport, ledger, limiter, fast_retry());
        CHECK(results.size() == 3);
        CHECK(server.bing_requests() == 2);
        CHECK(ledger.total_micro() == 2 * 18'000);
    }
    SECTION("persistent 5xx exhausts attempts, each one billed") {
        server.script_status(500, 3);
        SearchQuery q = make_query("okapi", QueryKind::entity, "Q1");
        auto req = build_bing_request(q, std::nullopt, test_creds(), server.bing_endpoint());
        CostLedger ledger;
        CHECK_THROWS_AS(execute(req, transport, ledger, limiter, fast_retry()), FatalError);
        CHECK(server.bing_requests() == 3);
        CHECK(ledger.total_micro() == 3 * 18'000);
    }
}

TEST_CASE("transport failures cost nothing") {
    kgtest::ScriptedTransport transport;
    transport.serve("/customsearch", 0, "", 1);  // connection drops once
    transport.serve("/customsearch", 200, json{{"items", json::array()}}.dump());
    TokenBucket limiter(10000.0, 10000.0);
    CostLedger ledger;
    SearchQuery q = make_query("okapi", QueryKind::entity, "Q1");
    auto req = build_google_request(q, 1, nullptr, std::nullopt, test_creds(),
                                    "http://fake.test/customsearch/v1");
    auto results = execute(req, transport, ledger, limiter, fast_retry());
    CHECK(results.empty());
    CHECK(transport.gets() == 2);
    CHECK(ledger.total_micro() == 5'000);  // only the response that arrived
}

TEST_CASE("execute error taxonomy") {
    TokenBucket limiter(10000.0, 10000.0);
    SearchQuery q = make_query("okapi", QueryKind::entity, "Q1");

    SECTION("auth and quota statuses kill the engine") {
        for (int status : {401, 403, 429}) {
            kgtest::ScriptedTransport transport;
            transport.serve("images/search", status, "denied");
            CostLedger ledger;
            auto req = build_bing_request(q, std::nullopt, test_creds(), "http://x.test/v7.0/images/search");
            CHECK_THROWS_AS(execute(req, transport, ledger, limiter, fast_retry()),
                            EngineFatalError);
            CHECK(transport.gets() == 1);          // no retry: the key will not heal
            CHECK(ledger.total_micro() == 18'000);  // the provider still charged us
        }
    }
    SECTION("other 4xx fails fast without retry") {
        kgtest::ScriptedTransport transport;
        transport.serve("images/search", 400, "bad request");
        CostLedger ledger;
        auto req = build_bing_request(q, std::nullopt, test_creds(), "http://x.test/v7.0/images/search");
        CHECK_THROWS_AS(execute(req, transport, ledger, limiter, fast_retry()), FatalError);
        CHECK(transport.gets() == 1);
    }
    SECTION("garbage body is fatal") {
        kgtest::ScriptedTransport transport;
        transport.serve("images/search", 200, "<html>not json</html>");
        CostLedger ledger;
        auto req = build_bing_request(q, std::nullopt, test_creds(), "http://x.test/v7.0/images/search");
        CHECK_THROWS_AS(execute(req, transport, ledger, limiter, fast_retry()), FatalError);
    }
}

TEST_CASE("google ranks continue across pages") {
    MockSearchServer server;
    server.set_results("red panda", make_hits("rp", 25));
    server.start();
    HttplibTransport transport(5);
    TokenBucket limiter(10000.0, 10000.0);
    CostLedger ledger;
    SearchQuery q = make_query("red panda", QueryKind::entity, "Q1");

    auto page2 = build_google_request(q, 2, nullptr, std::nullopt, test_creds(),
                                      server.google_endpoint());
    auto results = execute(page2, transport, ledger, limiter, fast_retry());
    REQUIRE(results.size() == 10);
    CHECK(results.front().raw_rank == 11);
    CHECK(results.back().raw_rank == 20);
    CHECK(results.front().image_url == "http://img.test/rp10.jpg");
    for (const auto& r : results) {
        CHECK(r.engine == "google");
        CHECK(r.query_id == q.id);
        CHECK(r.id == result_id(r.image_url, r.page_url, r.query_id));
    }
}

TEST_CASE("dispatch completes, paginates, and resumes without refetching") {
    MockSearchServer server;
    // 25 hits against 4 allowed pages: the third page comes back short and
    // pagination must stop there rather than burn the fourth call.
    server.set_results("amber lighthouse", make_hits("al", 25));
    server.set_results("granite bridge", make_hits("gb", 7));
    server.start();
    HttplibTransport transport(5);

    auto cfg = mock_config(server);
    std::vector<SearchQuery> queries = {
        make_query("amber lighthouse", QueryKind::entity_attribute, "Q1", "google"),
        make_query("missing thing", QueryKind::entity, "Q2", "google"),
        make_query("granite bridge", QueryKind::entity, "Q3"),
    };

    kgtest::TempDir tmp;
    CostLedger ledger;
    {
        CheckpointStore checkpoint(tmp / "search.ckpt.jsonl");
        auto outcome = dispatch_search(queries, no_context, transport, cfg, ledger, checkpoint,
                                       test_creds());
        CHECK(outcome.queries_done == 3);
        CHECK(outcome.queries_skipped == 0);
        CHECK(outcome.queries_failed == 0);
        CHECK_FALSE(outcome.budget_exhausted);
        CHECK_FALSE(outcome.engine_disabled);
        CHECK(outcome.results.size() == 25 + 0 + 7);
        CHECK(server.google_requests() == 3 + 1);  // short third page; empty first page
        CHECK(server.bing_requests() == 1);
        CHECK(ledger.total_micro() == 4 * 5'000 + 1 * 18'000);

        // Sorted by query, then rank; ranks within a query strictly rise.
        for (size_t i = 1; i < outcome.results.size(); ++i) {
            const auto& a = outcome.results[i - 1];
            const auto& b = outcome.results[i];
            CHECK(a.query_id <= b.query_id);
            if (a.query_id == b.query_id) CHECK(a.raw_rank < b.raw_rank);
        }
        // The empty query is done, not failed: rerunning must not retry it.
        CHECK(checkpoint.is_done(queries[1].id));
    }

    int google_before = server.google_requests();
    int bing_before = server.bing_requests();
    CostLedger rerun_ledger;
    CheckpointStore resumed(tmp / "search.ckpt.jsonl");
    auto rerun = dispatch_search(queries, no_context, transport, cfg, rerun_ledger, resumed,
                                 test_creds());
    CHECK(rerun.queries_skipped == 3);
    CHECK(rerun.queries_done == 0);
    CHECK(rerun.results.empty());
    CHECK(server.google_requests() == google_before);
    CHECK(server.bing_requests() == bing_before);
    CHECK(rerun_ledger.total_micro() == 0);
}

TEST_CASE("dispatch stops cleanly at the budget cap") {
    MockSearchServer server;
    server.set_results("q one", make_hits("a", 2));
    server.set_results("q two", make_hits("b", 2));
    server.set_results("q three", make_hits("c", 2));
    server.start();
    HttplibTransport transport(5);

    auto cfg = mock_config(server);
    cfg.budget_cap_micro = 30'000;  // one bing call fits, a second would not
    std::vector<SearchQuery> queries = {
        make_query("q one", QueryKind::entity, "Q1"),
        make_query("q two", QueryKind::entity, "Q2"),
        make_query("q three", QueryKind::entity, "Q3"),
    };

    kgtest::TempDir tmp;
    CostLedger ledger;
    CheckpointStore checkpoint(tmp / "ckpt.jsonl");
    auto outcome =
        dispatch_search(queries, no_context, transport, cfg, ledger, checkpoint, test_creds());
    CHECK(outcome.queries_done == 1);
    CHECK(outcome.budget_exhausted);
    CHECK(outcome.queries_failed == 0);
    CHECK(ledger.total_micro() == 18'000);
    CHECK(server.bing_requests() == 1);
    // Unfinished queries stay unmarked so a funded rerun picks them up.
    CHECK(checkpoint.is_done(queries[0].id));
    CHECK_FALSE(checkpoint.is_done(queries[1].id));
    CHECK_FALSE(checkpoint.is_done(queries[2].id));

    // Refunded rerun finishes the remainder and only the remainder.
    cfg.budget_cap_micro.reset();
    CostLedger topped_up;
    auto rerun = dispatch_search(queries, no_context, transport, cfg, topped_up, checkpoint,
                                 test_creds());
    CHECK(rerun.queries_skipped == 1);
    CHECK(rerun.queries_done == 2);
    CHECK(topped_up.total_micro() == 2 * 18'000);
}

TEST_CASE("dispatch disables an engine on auth failure") {
    MockSearchServer server;
    server.set_results("q one", make_hits("a", 2));
    server.set_results("q two", make_hits("b", 2));
    server.start();
    HttplibTransport transport(5);

    auto cfg = mock_config(server);
    server.script_status(401, 1);
    std::vector<SearchQuery> queries = {
        make_query("q one", QueryKind::entity, "Q1"),
        make_query("q two", QueryKind::entity, "Q2"),
    };
    kgtest::TempDir tmp;
    CostLedger ledger;
    CheckpointStore checkpoint(tmp / "ckpt.jsonl");
    auto outcome =
        dispatch_search(queries, no_context, transport, cfg, ledger, checkpoint, test_creds());
    CHECK(outcome.engine_disabled);
    CHECK(outcome.queries_failed == 1);
    CHECK(outcome.queries_done == 0);
    CHECK(server.bing_requests() == 1);  // nothing after the 401
    CHECK_FALSE(checkpoint.is_done(queries[0].id));
    CHECK_FALSE(checkpoint.is_done(queries[1].id));
}

TEST_CASE("dispatch records per-query failures and carries on") {
    MockSearchServer server;
    server.set_results("q one", make_hits("a", 2));
    server.set_results("q two", make_hits("b", 3));
    server.start();
    HttplibTransport transport(5);

    auto cfg = mock_config(server);
    server.script_status(400, 1);  // first request only
    std::vector<SearchQuery> queries = {
        make_query("q one", QueryKind::entity, "Q1"),
        make_query("q two", QueryKind::entity, "Q2"),
    };
    kgtest::TempDir tmp;
    CostLedger ledger;
    CheckpointStore checkpoint(tmp / "ckpt.jsonl");
    auto outcome =
        dispatch_search(queries, no_context, transport, cfg, ledger, checkpoint, test_creds());
    CHECK(outcome.queries_failed == 1);
    CHECK(outcome.queries_done == 1);
    CHECK(outcome.results.size() == 3);
    CHECK_FALSE(outcome.engine_disabled);
    CHECK(checkpoint.status(queries[0].id) == "failed");
    CHECK(checkpoint.is_done(queries[1].id));
}

TEST_CASE("search results round-trip through json") {
    SearchResult r;
    r.image_url = "http://img.test/a.jpg";
    r.page_url = "http://page.test/a";
    r.snippet = "a thing";
    r.engine = "google";
    r.raw_rank = 17;
    r.query_id = "deadbeef";
    r.id = result_id(r.image_url, r.page_url, r.query_id);
    auto back = SearchResult::from_json(r.to_json());
    CHECK(back.image_url == r.image_url);
    CHECK(back.page_url == r.page_url);
    CHECK(back.snippet == r.snippet);
    CHECK(back.engine == r.engine);
    CHECK(back.raw_rank == r.raw_rank);
    CHECK(back.query_id == r.query_id);
    CHECK(back.id == r.id);
}
