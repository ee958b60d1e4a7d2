// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "kgharvest/config.hpp"
#include "kgharvest/text_sampler.hpp"

using namespace kgharvest;

namespace {

// Two alts, one query, five aliases, two descriptions: every section of the
// default policy is populated and every analytic mass is distinct.
LabelPool reference_pool() {
    LabelPool pool;
    pool.alt_texts = {"alt one", "alt two"};
    pool.search_query = "the query";
    pool.aliases = {"alias a", "alias b", "alias c", "alias d", "alias e"};
    pool.descriptions = {"desc one", "desc two"};
    return pool;
}

std::map<std::string, double> as_map(const LabelDistribution& dist) {
    std::map<std::string, double> m;
    for (const auto& [text, p] : dist) m[text] += p;
    return m;
}

}  // namespace

TEST_CASE("label masses match the hand-computed split") {
    auto dist = label_distribution(reference_pool());
    auto m = as_map(dist);
    REQUIRE(m.size() == 10);
    CHECK(m.at("alt one") == Catch::Approx(0.25));
    CHECK(m.at("alt two") == Catch::Approx(0.25));
    CHECK(m.at("the query") == Catch::Approx(0.125));
    for (char c : {'a', 'b', 'c', 'd', 'e'})
        CHECK(m.at(std::string("alias ") + c) == Catch::Approx(0.065));
    CHECK(m.at("desc one") == Catch::Approx(0.025));
    CHECK(m.at("desc two") == Catch::Approx(0.025));
    double total = 0;
    for (const auto& [text, p] : dist) total += p;
    CHECK(total == Catch::Approx(1.0));
}

TEST_CASE("empty sections fold forward instead of losing mass") {
    SECTION("descriptions fold into aliases") {
        LabelPool pool = reference_pool();
        pool.descriptions.clear();
        pool.aliases = {"a1", "a2", "a3"};
        auto m = as_map(label_distribution(pool));
        CHECK(m.at("the query") == Catch::Approx(0.125));
        CHECK(m.at("a1") == Catch::Approx(0.75 * 0.5 / 3));  // == 0.125
    }
    SECTION("aliases fold into the query") {
        LabelPool pool = reference_pool();
        pool.aliases.clear();
        auto m = as_map(label_distribution(pool));
        CHECK(m.at("the query") == Catch::Approx((0.25 + 0.65) * 0.5));
        CHECK(m.at("desc one") == Catch::Approx(0.025));
    }
    SECTION("query takes the whole KG branch when alone") {
        LabelPool pool = reference_pool();
        pool.aliases.clear();
        pool.descriptions.clear();
        auto m = as_map(label_distribution(pool));
        CHECK(m.at("the query") == Catch::Approx(0.5));
    }
    SECTION("no alt texts hands everything to the KG branch") {
        LabelPool pool = reference_pool();
        pool.alt_texts.clear();
        auto m = as_map(label_distribution(pool));
        CHECK(m.at("the query") == Catch::Approx(0.25));
        CHECK(m.at("alias a") == Catch::Approx(0.13));
        CHECK(m.at("desc one") == Catch::Approx(0.05));
    }
    SECTION("query alone is the entire distribution") {
        LabelPool pool;
        pool.search_query = "only text";
        auto dist = label_distribution(pool);
        REQUIRE(dist.size() == 1);
        CHECK(dist[0].first == "only text");
        CHECK(dist[0].second == Catch::Approx(1.0));
    }
}

TEST_CASE("duplicate texts accumulate into one entry") {
    LabelPool pool;
    pool.alt_texts = {"okapi", "a forest photo"};
    pool.search_query = "okapi";
    pool.aliases = {"okapi", "forest giraffe"};
    auto dist = label_distribution(pool);
    auto m = as_map(dist);
    // alt 0.25 + query 0.125 + alias share (descriptions fold in) 0.1875.
    CHECK(m.at("okapi") == Catch::Approx(0.25 + 0.125 + 0.75 * 0.5 / 2));
    REQUIRE(dist.size() == 3);
    CHECK(dist[0].first == "okapi");  // merged into its first occurrence
    double total = 0;
    for (const auto& [text, p] : dist) total += p;
    CHECK(total == Catch::Approx(1.0));
}

TEST_CASE("policy and pool validation") {
    LabelPolicy bad;
    bad.alt_mass = 1.5;
    CHECK_THROWS_AS(label_distribution(reference_pool(), bad), ConfigError);
    bad = {};
    bad.query_mass = -0.1;
    CHECK_THROWS_AS(label_distribution(reference_pool(), bad), ConfigError);
    bad = {};
    bad.alias_mass = 0.5;  // 0.25 + 0.10 + 0.5 != 1
    CHECK_THROWS_AS(label_distribution(reference_pool(), bad), ConfigError);

    LabelPool no_query = reference_pool();
    no_query.search_query.clear();
    CHECK_THROWS_AS(label_distribution(no_query), ContractError);
}

TEST_CASE("the engine is the one the standard specifies") {
    // Everything downstream assumes mt19937_64 streams are identical on
    // every platform; [rand.predef] pins its 10000th default-seeded output.
    std::mt19937_64 engine;
    engine.discard(9999);
    CHECK(engine() == 9981545732273789042ull);
}

TEST_CASE("a million draws land on the analytic masses") {
    LabelPool pool = reference_pool();
    LabelPolicy policy;
    std::mt19937_64 rng(derive_seed(42, "sample"));

    auto dist = label_distribution(pool, policy);
    std::map<std::string, uint64_t> counts;
    const uint64_t kDraws = 1'000'000;
    for (uint64_t i = 0; i < kDraws; ++i) counts[sample_label(pool, policy, rng)]++;

    std::vector<uint64_t> observed;
    std::vector<double> expected;
    for (const auto& [text, p] : dist) {
        observed.push_back(counts[text]);
        expected.push_back(p);
        double freq = double(counts[text]) / double(kDraws);
        CHECK(std::abs(freq - p) <= 0.005);
    }
    double pval = kgtest::chi_square_p(observed, expected, kDraws);
    INFO("chi-square p = " << pval);
    CHECK(pval > 0.001);
}

TEST_CASE("equal seeds give equal streams, different seeds diverge") {
    LabelPool pool = reference_pool();
    LabelPolicy policy;
    std::vector<std::string> first, second, other;
    std::mt19937_64 a(derive_seed(7, "sample"));
    std::mt19937_64 b(derive_seed(7, "sample"));
    std::mt19937_64 c(derive_seed(8, "sample"));
    for (int i = 0; i < 1000; ++i) {
        first.push_back(sample_label(pool, policy, a));
        second.push_back(sample_label(pool, policy, b));
        other.push_back(sample_label(pool, policy, c));
    }
    CHECK(first == second);
    CHECK(first != other);
}

TEST_CASE("per-record seeds are independent of processing order") {
    // The sampling stage derives one rng per record id from the stage seed;
    // the stream for a record must not depend on which records came before.
    uint64_t stage_seed = derive_seed(42, "sample");
    CHECK(derive_seed(stage_seed, "rec_a") != derive_seed(stage_seed, "rec_b"));
    CHECK(derive_seed(stage_seed, "rec_a") == derive_seed(stage_seed, "rec_a"));
    // And the stage label itself matters.
    CHECK(derive_seed(derive_seed(42, "sample"), "rec_a") !=
          derive_seed(derive_seed(42, "shuffle"), "rec_a"));
}

TEST_CASE("record pools: one per entity, query matched by mention") {
    DatasetRecord rec;
    rec.id = "r1";
    rec.alt_texts = {"two animals drinking"};
    rec.search_queries = {{"black rhino at dusk", QueryKind::entity},
                          {"okapi portrait", QueryKind::entity}};
    KgText rhino{"Q1", "black rhino", {"hook-lipped rhinoceros", "Black Rhino"}, {"a browser"}};
    KgText okapi{"Q2", "okapi", {"forest giraffe"}, {}};
    rec.kg_texts = {rhino, okapi};

    auto pools = build_label_pools(rec);
    REQUIRE(pools.size() == 2);
    CHECK(pools[0].search_query == "black rhino at dusk");
    CHECK(pools[1].search_query == "okapi portrait");
    // The alias equal to the entity name (case-folded) is dropped.
    CHECK(pools[0].aliases == std::vector<std::string>{"hook-lipped rhinoceros"});
    CHECK(pools[1].aliases == std::vector<std::string>{"forest giraffe"});

    LabelPolicy keep_name;
    keep_name.include_name_in_aliases = true;
    auto kept = build_label_pools(rec, keep_name);
    CHECK(kept[0].aliases ==
          std::vector<std::string>{"hook-lipped rhinoceros", "Black Rhino"});

    SECTION("entity without a mentioning query falls back to the first") {
        rec.kg_texts = {KgText{"Q3", "aardvark", {}, {}}};
        auto fallback = build_label_pools(rec);
        REQUIRE(fallback.size() == 1);
        CHECK(fallback[0].search_query == "black rhino at dusk");
    }
    SECTION("no kg texts still yields an alt + query pool") {
        rec.kg_texts.clear();
        auto bare = build_label_pools(rec);
        REQUIRE(bare.size() == 1);
        CHECK(bare[0].search_query == "black rhino at dusk");
        CHECK(bare[0].aliases.empty());
        CHECK(bare[0].alt_texts == rec.alt_texts);
    }
    SECTION("no queries at all is a contract violation") {
        rec.search_queries.clear();
        CHECK_THROWS_AS(build_label_pools(rec), ContractError);
    }
}

TEST_CASE("record mixture keeps the alt mass whole across entities") {
    DatasetRecord rec;
    rec.id = "r2";
    rec.alt_texts = {"shared alt"};
    rec.search_queries = {{"lion pride", QueryKind::entity},
                          {"zebra crossing river", QueryKind::entity}};
    rec.kg_texts = {KgText{"Q1", "lion", {"panthera leo"}, {}},
                    KgText{"Q2", "zebra", {}, {"a striped equid"}}};

    auto mix = record_label_distribution(rec);
    auto m = as_map(mix);
    double total = 0;
    for (const auto& [text, p] : mix) total += p;
    CHECK(total == Catch::Approx(1.0));
    // Both pools carry the same alt list, so the halves recombine.
    CHECK(m.at("shared alt") == Catch::Approx(0.5));
    // Lion pool: query 0.125, alias residual (0.65 + 0.10 fold) ... weights
    // halve under the uniform entity choice.
    CHECK(m.at("lion pride") == Catch::Approx(0.5 * 0.125));
    CHECK(m.at("panthera leo") == Catch::Approx(0.5 * 0.75 * 0.5));
    // Zebra pool: no aliases, so alias mass folds into the query.
    CHECK(m.at("zebra crossing river") == Catch::Approx(0.5 * (0.25 + 0.65) * 0.5));
    CHECK(m.at("a striped equid") == Catch::Approx(0.5 * 0.10 * 0.5));

    // Sampling which entity first consumes one uniform, then one for the
    // label; single-pool records consume exactly one.
    std::mt19937_64 rng(99);
    auto label = sample_record_label(rec, {}, rng);
    CHECK(m.count(label) == 1);
}

TEST_CASE("record-level draws follow the mixture distribution") {
    DatasetRecord rec;
    rec.id = "r3";
    rec.alt_texts = {"alt"};
    rec.search_queries = {{"query a", QueryKind::entity}};
    rec.kg_texts = {KgText{"Q1", "thing", {"alias"}, {}},
                    KgText{"Q2", "other", {}, {}}};

    auto mix = record_label_distribution(rec);
    std::map<std::string, uint64_t> counts;
    std::mt19937_64 rng(derive_seed(derive_seed(42, "sample"), rec.id));
    const uint64_t kDraws = 200'000;
    for (uint64_t i = 0; i < kDraws; ++i) counts[sample_record_label(rec, {}, rng)]++;

    std::vector<uint64_t> observed;
    std::vector<double> expected;
    for (const auto& [text, p] : mix) {
        observed.push_back(counts[text]);
        expected.push_back(p);
        CHECK(std::abs(double(counts[text]) / double(kDraws) - p) <= 0.01);
    }
    CHECK(kgtest::chi_square_p(observed, expected, kDraws) > 0.001);
}
