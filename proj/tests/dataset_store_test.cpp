// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "kgharvest/dataset_store.hpp"
#include "kgharvest/image_io.hpp"
#include "kgharvest/tar.hpp"

using namespace kgharvest;

namespace {

SearchQuery make_query(const std::string& text, QueryKind kind, const std::string& entity_id,
                       const std::string& domain = "world") {
    SearchQuery q;
    q.text = text;
    q.kind = kind;
    q.id = SearchQuery::make_id(kind, text);
    q.entity_id = entity_id;
    q.domain_tag = domain;
    return q;
}

Entity make_entity(const std::string& id, const std::string& name,
                   std::vector<std::string> aliases = {}, const std::string& desc = "") {
    Entity e;
    e.id = id;
    e.name = name;
    e.aliases = std::move(aliases);
    e.description = desc;
    return e;
}

}  // namespace

TEST_CASE("tar archives round-trip arbitrary bytes") {
    std::string binary;
    for (int i = 0; i < 1000; ++i) binary.push_back(char(i % 256));
    std::vector<TarEntry> members = {
        {"empty.bin", ""},
        {"block.bin", std::string(512, 'x')},      // exact block, no padding
        {"spill.bin", std::string(513, 'y')},      // one byte into the next block
        {"photo.ppm", binary},
    };
    std::ostringstream out;
    TarWriter tar(out);
    for (const auto& m : members) tar.add_file(m.name, m.bytes);
    tar.finish();
    std::string archive = out.str();
    CHECK(archive.size() % 512 == 0);

    auto back = read_tar(archive);
    REQUIRE(back.size() == members.size());
    for (size_t i = 0; i < members.size(); ++i) {
        CHECK(back[i].name == members[i].name);
        CHECK(back[i].bytes == members[i].bytes);
    }

    // Reproducible: same members, same bytes.
    std::ostringstream again;
    TarWriter tar2(again);
    for (const auto& m : members) tar2.add_file(m.name, m.bytes);
    tar2.finish();
    CHECK(again.str() == archive);
}

TEST_CASE("tar archives open with the system tar") {
    kgtest::TempDir tmp;
    std::ostringstream out;
    TarWriter tar(out);
    tar.add_file("a.txt", "alpha\n");
    tar.add_file("b.bin", std::string("\x00\x01\x02", 3));
    tar.finish();
    kgtest::write_text(tmp / "t.tar", out.str());

    std::string cmd = "tar -xf '" + (tmp / "t.tar").string() + "' -C '" + tmp.path().string() +
                      "' 2>/dev/null";
    REQUIRE(std::system(cmd.c_str()) == 0);
    CHECK(kgtest::read_text(tmp / "a.txt") == "alpha\n");
    CHECK(kgtest::read_text(tmp / "b.bin") == std::string("\x00\x01\x02", 3));
}

TEST_CASE("tar reader rejects corruption") {
    std::ostringstream out;
    TarWriter tar(out);
    tar.add_file("good.txt", "hello");
    tar.finish();
    std::string archive = out.str();

    SECTION("flipped header byte fails the checksum") {
        std::string bad = archive;
        bad[3] ^= 0x40;  // inside the name field
        CHECK_THROWS_WITH(read_tar(bad), Catch::Matchers::ContainsSubstring("checksum"));
    }
    SECTION("bad magic") {
        std::string bad = archive;
        bad[257] = 'X';
        CHECK_THROWS_WITH(read_tar(bad), Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("truncated body") {
        std::string bad = archive.substr(0, 512 + 2);
        CHECK_THROWS_WITH(read_tar(bad), Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("names over 100 bytes are refused at write time") {
        std::ostringstream sink;
        TarWriter w(sink);
        CHECK_THROWS_AS(w.add_file(std::string(101, 'n'), "x"), std::invalid_argument);
        CHECK_THROWS_AS(w.add_file("", "x"), std::invalid_argument);
    }
}

TEST_CASE("dataset records resolve queries, entities, and merged origins") {
    auto q1 = make_query("red panda", QueryKind::entity, "Q1");
    auto q2 = make_query("black animal", QueryKind::natural_type_attribute, "");
    q2.attr_category = "Color";
    q2.attr_value = "black";
    q2.merged = json::array({{{"entity_id", "Q2"}, {"attr_category", "Color"},
                              {"attr_value", "black"}}});
    std::map<std::string, SearchQuery> queries = {{q1.id, q1}, {q2.id, q2}};
    std::map<std::string, Entity> entities = {
        {"Q1", make_entity("Q1", "red panda", {"firefox"}, "a small mammal")},
        {"Q2", make_entity("Q2", "black bear", {}, "")},
    };
    std::map<std::string, NaturalType> types = {
        {"Q1", {"Q1", "mammal", "a kind of mammal"}}};

    ImageRecord img;
    img.id = "cafe01";
    img.path = "images/ca/cafe01.ppm";
    img.ext = "ppm";
    img.width = 64;
    img.height = 64;
    img.byte_size = 77;
    img.alt_texts = {"a red panda resting"};
    img.query_refs = {q1.id, q2.id, "nonexistent"};

    std::vector<json> problems;
    auto records = build_dataset_records({img}, queries, entities, types, &problems);
    REQUIRE(records.size() == 1);
    const auto& rec = records[0];
    CHECK(rec.id == "cafe01");
    REQUIRE(rec.search_queries.size() == 2);
    CHECK(rec.search_queries[0].text == "red panda");
    CHECK(rec.search_queries[0].kind == QueryKind::entity);
    CHECK(rec.search_queries[1].kind == QueryKind::natural_type_attribute);
    // Entity order: direct reference first, then merged origins.
    CHECK(rec.entity_ids == std::vector<std::string>{"Q1", "Q2"});
    REQUIRE(rec.kg_texts.size() == 2);
    CHECK(rec.kg_texts[0].entity_id == "Q1");
    CHECK(rec.kg_texts[0].name == "red panda");
    CHECK(rec.kg_texts[0].aliases == std::vector<std::string>{"firefox"});
    CHECK(rec.kg_texts[0].descriptions ==
          std::vector<std::string>{"a small mammal", "a kind of mammal"});
    CHECK(rec.kg_texts[1].descriptions.empty());  // no description, no type
    REQUIRE(problems.size() == 1);
    CHECK(problems[0].at("problem") == "dangling_query");

    // Round trip through json.
    auto back = DatasetRecord::from_json(rec.to_json());
    CHECK(back.to_json() == rec.to_json());
}

TEST_CASE("dataset validation reports referential breaks") {
    auto q1 = make_query("okapi", QueryKind::entity, "Q1");
    std::map<std::string, SearchQuery> queries = {{q1.id, q1}};
    std::map<std::string, Entity> entities = {{"Q1", make_entity("Q1", "okapi")}};

    DatasetRecord good;
    good.id = "aaa";
    good.entity_ids = {"Q1"};
    good.search_queries = {{"okapi", QueryKind::entity}};
    DatasetRecord dup = good;
    DatasetRecord broken;
    broken.id = "bbb";
    broken.entity_ids = {"Q9"};
    broken.search_queries = {{"vanished query", QueryKind::entity}};
    broken.excluded = true;

    auto findings = validate_dataset({good, dup, broken}, entities, queries);
    REQUIRE(findings.size() == 4);
    CHECK(findings[0].find("duplicate record id aaa") != std::string::npos);
    CHECK(findings[1].find("excluded without a reason") != std::string::npos);
    CHECK(findings[2].find("unknown entity Q9") != std::string::npos);
    CHECK(findings[3].find("unknown query") != std::string::npos);

    CHECK(validate_dataset({good}, entities, queries).empty());
}

TEST_CASE("shards partition the manifest and skip what they must") {
    kgtest::TempDir tmp;
    auto store = tmp.path() / "store";
    std::vector<DatasetRecord> records;
    for (int i = 0; i < 9; ++i) {
        auto bytes = encode_ppm(16, 16, synth_rgb(16, 16, 5000 + i));
        DatasetRecord rec;
        rec.id = "img" + std::to_string(i);
        rec.ext = "ppm";
        rec.path = "images/xx/img" + std::to_string(i) + ".ppm";
        rec.width = rec.height = 16;
        rec.byte_size = bytes.size();
        rec.alt_texts = {"caption " + std::to_string(i)};
        if (i != 7) {  // 7 is the missing-file case
            auto path = store / rec.path;
            std::filesystem::create_directories(path.parent_path());
            kgtest::write_text(path, bytes);
        }
        records.push_back(std::move(rec));
    }
    records[4].excluded = true;
    records[4].excluded_reason = "eval_leak:e1";

    auto result = write_shards(records, store, tmp / "shards", 3, 2);
    // 9 minus one excluded minus one missing = 7 across shards of 3.
    CHECK(result.records_written == 7);
    REQUIRE(result.shard_files.size() == 3);
    REQUIRE(result.skipped.size() == 1);
    CHECK(result.skipped[0].at("id") == "img7");
    CHECK(result.skipped[0].at("reason") == "missing_file");

    auto index = read_jsonl(result.index_path);
    CHECK(index.size() == 7);
    std::map<std::string, int> per_shard;
    for (const auto& row : index) per_shard[row.at("shard").get<std::string>()]++;
    REQUIRE(per_shard.size() == 3);
    CHECK(per_shard["shard-000000.tar"] == 3);
    CHECK(per_shard["shard-000001.tar"] == 3);
    CHECK(per_shard["shard-000002.tar"] == 1);

    auto back = read_shards(tmp / "shards");
    CHECK(back.size() == 7);
    CHECK(back.count("img4") == 0);
    CHECK(back.count("img7") == 0);
    for (const auto& [id, sharded] : back) {
        const auto* orig = &records[size_t(id[3] - '0')];
        CHECK(sharded.image_bytes == kgtest::read_text(store / orig->path));
        CHECK(sharded.record.to_json() == orig->to_json());
    }

    // The shard is a plain tar: the system tool can list its members.
    std::string listing_cmd = "tar -tf '" + result.shard_files[0].string() + "' > '" +
                              (tmp / "listing.txt").string() + "' 2>/dev/null";
    REQUIRE(std::system(listing_cmd.c_str()) == 0);
    auto listing = kgtest::read_text(tmp / "listing.txt");
    CHECK(listing.find("img0.ppm") != std::string::npos);
    CHECK(listing.find("img0.json") != std::string::npos);

    CHECK_THROWS_AS(write_shards(records, store, tmp / "s2", 0), ConfigError);
}

TEST_CASE("stats count unique elements per query set") {
    // Queries: two world-entity, one world-attribute, one living-entity,
    // one living natural-type attribute with a merged origin.
    auto qw1 = make_query("red barn", QueryKind::entity, "Q1");
    auto qw2 = make_query("old barn", QueryKind::entity, "Q1");
    auto qwa = make_query("red barn roof", QueryKind::entity_attribute, "Q1");
    qwa.attr_category = "Parts";
    qwa.attr_value = "roof";
    auto ql1 = make_query("okapi", QueryKind::entity, "Q2", "living");
    auto qla = make_query("striped animal", QueryKind::natural_type_attribute, "", "living");
    qla.attr_category = "PatternTexture";
    qla.attr_value = "striped";
    qla.merged = json::array({{{"entity_id", "Q3"},
                               {"attr_category", "PatternTexture"},
                               {"attr_value", "Striped"}}});

    std::map<std::string, SearchQuery> queries;
    for (const auto& q : {qw1, qw2, qwa, ql1, qla}) queries[q.id] = q;

    KgText kt1{"Q1", "barn", {"farm building"}, {"a farm structure"}};
    KgText kt2{"Q2", "okapi", {"forest giraffe", "zebra giraffe"}, {}};
    KgText kt3{"Q3", "zebra", {}, {}};

    std::vector<DatasetRecord> records;
    {
        DatasetRecord r;  // two world queries, one image
        r.id = "img_a";
        r.alt_texts = {"a red barn", "shared caption"};
        r.search_queries = {{"red barn", QueryKind::entity}, {"old barn", QueryKind::entity}};
        r.kg_texts = {kt1};
        records.push_back(r);
    }
    {
        DatasetRecord r;  // world attribute + world entity overlap on Q1
        r.id = "img_b";
        r.alt_texts = {"shared caption"};
        r.search_queries = {{"red barn roof", QueryKind::entity_attribute},
                            {"red barn", QueryKind::entity}};
        r.kg_texts = {kt1};
        records.push_back(r);
    }
    {
        DatasetRecord r;  // living entity and the merged natural-type query
        r.id = "img_c";
        r.alt_texts = {"an okapi in the forest"};
        r.search_queries = {{"okapi", QueryKind::entity},
                            {"striped animal", QueryKind::natural_type_attribute}};
        r.kg_texts = {kt2, kt3};
        records.push_back(r);
    }
    {
        DatasetRecord r;  // excluded: must not count anywhere
        r.id = "img_x";
        r.alt_texts = {"leaked"};
        r.search_queries = {{"okapi", QueryKind::entity}};
        r.kg_texts = {kt2};
        r.excluded = true;
        r.excluded_reason = "eval_leak:e1";
        records.push_back(r);
    }
    {
        DatasetRecord r;  // stale query reference: ignored entirely
        r.id = "img_y";
        r.alt_texts = {"dangling"};
        r.search_queries = {{"no longer a query", QueryKind::entity}};
        records.push_back(r);
    }

    auto stats = compute_stats(records, queries);
    REQUIRE(stats.rows.size() == 5);
    CHECK(stats.rows[0].first == "World entity");
    CHECK(stats.rows[4].first == "All");

    const auto* we = stats.row("World entity");
    REQUIRE(we);
    CHECK(we->images == 2);     // img_a, img_b
    CHECK(we->queries == 2);    // red barn, old barn
    CHECK(we->entities == 1);   // Q1
    CHECK(we->aliases == 1);    // farm building
    CHECK(we->attributes == 0);
    CHECK(we->alt_texts == 2);  // "a red barn" and "shared caption", once each
    CHECK(format_ratio(we->images_per_query) == "1");

    const auto* wa = stats.row("World entity + attribute");
    REQUIRE(wa);
    CHECK(wa->images == 1);
    CHECK(wa->queries == 1);
    CHECK(wa->entities == 1);
    CHECK(wa->attributes == 1);  // Parts|roof
    CHECK(wa->alt_texts == 1);

    const auto* le = stats.row("Living entity");
    REQUIRE(le);
    CHECK(le->images == 1);
    CHECK(le->queries == 1);
    CHECK(le->entities == 1);   // Q2
    CHECK(le->aliases == 2);
    CHECK(le->attributes == 0);

    const auto* la = stats.row("Living entity + attribute");
    REQUIRE(la);
    CHECK(la->images == 1);
    CHECK(la->queries == 1);
    CHECK(la->entities == 1);   // Q3 via the merged origin only
    CHECK(la->aliases == 0);    // zebra has none
    // "striped" and "Striped" fold to one attribute identity.
    CHECK(la->attributes == 1);

    const auto* all = stats.row("All");
    REQUIRE(all);
    CHECK(all->images == 3);    // img_a, img_b, img_c: a recount, not 2+1+1+1
    CHECK(all->queries == 5);
    CHECK(all->entities == 3);
    CHECK(all->aliases == 3);
    CHECK(all->attributes == 2);
    CHECK(all->alt_texts == 3);
}

TEST_CASE("headline ratios come out at three significant digits") {
    StatsRow row;
    row.images = 33'000'000;
    row.queries = 416'000;
    row.alt_texts = 45'000'000;
    row = finish_row(row);
    REQUIRE(row.images_per_query);
    REQUIRE(row.alt_texts_per_image);
    CHECK(format_ratio(row.images_per_query) == "79.3");
    CHECK(format_ratio(row.alt_texts_per_image) == "1.36");

    StatsRow empty;
    empty = finish_row(empty);
    CHECK_FALSE(empty.images_per_query.has_value());
    CHECK(format_ratio(empty.images_per_query) == "-");
    CHECK(format_ratio(std::nullopt) == "-");
}

TEST_CASE("stats render as an aligned table and as json") {
    StatsRow row;
    row.images = 10;
    row.queries = 4;
    row.alt_texts = 25;
    ManifestStats stats;
    stats.rows = {{"World entity", finish_row(row)}, {"All", finish_row(row)}};

    auto text = stats_to_text(stats);
    CHECK(text.find("Query set") != std::string::npos);
    CHECK(text.find("World entity") != std::string::npos);
    CHECK(text.find("2.5") != std::string::npos);   // images per query
    CHECK(text.find(" -") != std::string::npos);    // zero attributes prints as -
    CHECK(text.back() == '\n');

    auto j = stats_to_json(stats);
    REQUIRE(j.at("rows").size() == 2);
    CHECK(j["rows"][0]["query_set"] == "World entity");
    CHECK(j["rows"][0]["images"] == 10);
    CHECK(j["rows"][0]["images_per_query"] == Catch::Approx(2.5));
}
