// SPDX-License-Identifier: Apache-2.0
//
// Final dataset assembly: provenance-complete records, tar shard output with
// an index, referential-integrity validation, and the summary stats table.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kgharvest/attr_gen.hpp"
#include "kgharvest/concurrency.hpp"
#include "kgharvest/errors.hpp"
#include "kgharvest/harvester.hpp"
#include "kgharvest/jsonl.hpp"
#include "kgharvest/query_build.hpp"
#include "kgharvest/strings.hpp"
#include "kgharvest/tar.hpp"

namespace kgharvest {

// Knowledge-graph text bundle carried alongside an image for one entity.
struct KgText {
    std::string entity_id;
    std::string name;
    std::vector<std::string> aliases;
    std::vector<std::string> descriptions;  // entity description, type reason

    json to_json() const {
        return {{"entity_id", entity_id},
                {"name", name},
                {"aliases", aliases},
                {"descriptions", descriptions}};
    }
    static KgText from_json(const json& j) {
        KgText k;
        k.entity_id = j.at("entity_id").get<std::string>();
        k.name = j.at("name").get<std::string>();
        k.aliases = j.value("aliases", std::vector<std::string>{});
        k.descriptions = j.value("descriptions", std::vector<std::string>{});
        return k;
    }
};

struct RecordQuery {
    std::string text;
    QueryKind kind = QueryKind::entity;

    bool operator==(const RecordQuery& o) const {
        return text == o.text && kind == o.kind;
    }
};

struct DatasetRecord {
    std::string id;  // content hash
    std::string path;
    std::string ext;
    uint32_t width = 0;
    uint32_t height = 0;
    uint64_t byte_size = 0;
    std::vector<std::string> alt_texts;
    std::vector<std::string> entity_ids;
    std::vector<RecordQuery> search_queries;
    std::vector<KgText> kg_texts;
    bool excluded = false;
    std::string excluded_reason;

    json to_json() const {
        json qs = json::array();
        for (const auto& q : search_queries)
            qs.push_back({{"text", q.text}, {"kind", to_string(q.kind)}});
        json kts = json::array();
        for (const auto& k : kg_texts) kts.push_back(k.to_json());
        json j{{"id", id},           {"path", path},
               {"ext", ext},         {"width", width},
               {"height", height},   {"byte_size", byte_size},
               {"alt_texts", alt_texts}, {"entity_ids", entity_ids},
               {"search_queries", qs},   {"kg_texts", kts}};
        if (excluded) {
            j["excluded"] = true;
            j["excluded_reason"] = excluded_reason;
        }
        return j;
    }

    static DatasetRecord from_json(const json& j) {
        DatasetRecord r;
        r.id = j.at("id").get<std::string>();
        r.path = j.value("path", "");
        r.ext = j.value("ext", "");
        r.width = j.value("width", 0u);
        r.height = j.value("height", 0u);
        r.byte_size = j.value("byte_size", 0ull);
        r.alt_texts = j.value("alt_texts", std::vector<std::string>{});
        r.entity_ids = j.value("entity_ids", std::vector<std::string>{});
        for (const auto& q : j.value("search_queries", json::array()))
            r.search_queries.push_back({q.at("text").get<std::string>(),
                                        query_kind_from_string(
                                            q.at("kind").get<std::string>())});
        for (const auto& k : j.value("kg_texts", json::array()))
            r.kg_texts.push_back(KgText::from_json(k));
        r.excluded = j.value("excluded", false);
        r.excluded_reason = j.value("excluded_reason", "");
        return r;
    }
};

// Resolves harvest output against the query and entity catalogs. Unresolvable
// references are reported, not silently dropped; the record keeps whatever
// resolved.
inline std::vector<DatasetRecord> build_dataset_records(
    const std::vector<ImageRecord>& images,
    const std::map<std::string, SearchQuery>& queries_by_id,
    const std::map<std::string, Entity>& entities_by_id,
    const std::map<std::string, NaturalType>& natural_types_by_entity,
    std::vector<json>* problems = nullptr) {
    std::vector<DatasetRecord> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        DatasetRecord rec;
        rec.id = img.id;
        rec.path = img.path;
        rec.ext = img.ext;
        rec.width = img.width;
        rec.height = img.height;
        rec.byte_size = img.byte_size;
        rec.alt_texts = img.alt_texts;
        rec.excluded = img.excluded;
        rec.excluded_reason = img.excluded_reason;

        std::vector<std::string> entity_order;
        auto note_entity = [&](const std::string& eid) {
            if (eid.empty()) return;
            if (std::find(entity_order.begin(), entity_order.end(), eid) ==
                entity_order.end())
                entity_order.push_back(eid);
        };
        for (const auto& qid : img.query_refs) {
            auto qit = queries_by_id.find(qid);
            if (qit == queries_by_id.end()) {
                if (problems)
                    problems->push_back({{"id", img.id},
                                         {"problem", "dangling_query"},
                                         {"query_id", qid}});
                continue;
            }
            const SearchQuery& q = qit->second;
            RecordQuery rq{q.text, q.kind};
            if (std::find(rec.search_queries.begin(), rec.search_queries.end(), rq) ==
                rec.search_queries.end())
                rec.search_queries.push_back(rq);
            note_entity(q.entity_id);
            for (const auto& origin : q.merged)
                note_entity(origin.value("entity_id", ""));
        }
        for (const auto& eid : entity_order) {
            auto eit = entities_by_id.find(eid);
            if (eit == entities_by_id.end()) {
                if (problems)
                    problems->push_back({{"id", img.id},
                                         {"problem", "dangling_entity"},
                                         {"entity_id", eid}});
                continue;
            }
            rec.entity_ids.push_back(eid);
            KgText kt;
            kt.entity_id = eid;
            kt.name = eit->second.name;
            kt.aliases = eit->second.aliases;
            if (!eit->second.description.empty())
                kt.descriptions.push_back(eit->second.description);
            auto nit = natural_types_by_entity.find(eid);
            if (nit != natural_types_by_entity.end() && !nit->second.reason.empty())
                kt.descriptions.push_back(nit->second.reason);
            rec.kg_texts.push_back(std::move(kt));
        }
        out.push_back(std::move(rec));
    }
    std::sort(out.begin(), out.end(),
              [](const DatasetRecord& a, const DatasetRecord& b) { return a.id < b.id; });
    return out;
}

// Full-manifest referential integrity pass; returns human-readable findings.
inline std::vector<std::string> validate_dataset(
    const std::vector<DatasetRecord>& records,
    const std::map<std::string, Entity>& entities_by_id,
    const std::map<std::string, SearchQuery>& queries_by_id) {
    std::set<std::string> query_texts;
    for (const auto& [id, q] : queries_by_id) query_texts.insert(fold_key(q.text));
    std::vector<std::string> findings;
    std::set<std::string> seen_ids;
    for (const auto& rec : records) {
        if (!seen_ids.insert(rec.id).second)
            findings.push_back("duplicate record id " + rec.id);
        if (rec.excluded && rec.excluded_reason.empty())
            findings.push_back("record " + rec.id + " excluded without a reason");
        for (const auto& eid : rec.entity_ids)
            if (!entities_by_id.count(eid))
                findings.push_back("record " + rec.id + " references unknown entity " +
                                   eid);
        for (const auto& q : rec.search_queries)
            if (!query_texts.count(fold_key(q.text)))
                findings.push_back("record " + rec.id + " references unknown query \"" +
                                   q.text + "\"");
    }
    return findings;
}

// ---------------------------------------------------------------------------
// Shards

struct ShardWriteResult {
    std::vector<std::filesystem::path> shard_files;
    std::filesystem::path index_path;
    uint64_t records_written = 0;
    std::vector<json> skipped;  // {id, reason}
};

// Tar shards of up to shard_size images, each member pair <id>.<ext> plus
// <id>.json. Excluded records and records whose image file is missing are
// skipped (the latter logged). Shard bodies build in parallel; the index is
// one sequential write at the end.
inline ShardWriteResult write_shards(const std::vector<DatasetRecord>& records,
                                     const std::filesystem::path& store_root,
                                     const std::filesystem::path& out_dir,
                                     size_t shard_size = 10000,
                                     size_t workers = 4) {
    if (shard_size == 0) throw ConfigError("shard_size must be positive");
    std::filesystem::create_directories(out_dir);
    ShardWriteResult result;

    std::vector<const DatasetRecord*> eligible;
    for (const auto& rec : records) {
        if (rec.excluded) continue;
        std::error_code ec;
        if (!std::filesystem::exists(store_root / rec.path, ec)) {
            result.skipped.push_back({{"id", rec.id}, {"reason", "missing_file"}});
            continue;
        }
        eligible.push_back(&rec);
    }

    size_t shard_count = (eligible.size() + shard_size - 1) / shard_size;
    result.shard_files.resize(shard_count);
    std::vector<std::vector<json>> index_rows(shard_count);

    parallel_for(shard_count, workers, [&](size_t s) {
        char name[32];
        std::snprintf(name, sizeof name, "shard-%06zu.tar", s);
        std::filesystem::path shard_path = out_dir / name;
        std::ostringstream body;
        TarWriter tar(body);
        size_t lo = s * shard_size;
        size_t hi = std::min(lo + shard_size, eligible.size());
        for (size_t i = lo; i < hi; ++i) {
            const DatasetRecord& rec = *eligible[i];
            std::ifstream in(store_root / rec.path, std::ios::binary);
            std::string bytes((std::istreambuf_iterator<char>(in)),
                              std::istreambuf_iterator<char>());
            std::string member = rec.id + "." + rec.ext;
            tar.add_file(member, bytes);
            tar.add_file(rec.id + ".json", rec.to_json().dump());
            index_rows[s].push_back(
                {{"id", rec.id}, {"shard", name}, {"member", member}});
        }
        tar.finish();
        detail::write_file_atomic(shard_path, body.str());
        result.shard_files[s] = shard_path;
    });

    result.index_path = out_dir / "shard-index.jsonl";
    std::vector<json> all_rows;
    for (const auto& rows : index_rows)
        for (const auto& row : rows) {
            all_rows.push_back(row);
            ++result.records_written;
        }
    write_jsonl(result.index_path, all_rows);
    return result;
}

struct ShardedRecord {
    DatasetRecord record;
    std::string image_bytes;
};

// Reads every shard named by the index back into memory, id-keyed.
inline std::map<std::string, ShardedRecord> read_shards(
    const std::filesystem::path& out_dir) {
    std::map<std::string, ShardedRecord> out;
    std::map<std::string, std::vector<TarEntry>> shard_cache;
    for (const auto& row : read_jsonl(out_dir / "shard-index.jsonl")) {
        std::string shard = row.at("shard").get<std::string>();
        std::string member = row.at("member").get<std::string>();
        std::string id = row.at("id").get<std::string>();
        auto it = shard_cache.find(shard);
        if (it == shard_cache.end()) {
            std::ifstream in(out_dir / shard, std::ios::binary);
            std::string data((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
            it = shard_cache.emplace(shard, read_tar(data)).first;
        }
        ShardedRecord rec;
        for (const auto& entry : it->second) {
            if (entry.name == member) rec.image_bytes = entry.bytes;
            else if (entry.name == id + ".json")
                rec.record = DatasetRecord::from_json(json::parse(entry.bytes));
        }
        out[id] = std::move(rec);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stats

struct StatsRow {
    uint64_t images = 0;
    uint64_t queries = 0;
    uint64_t entities = 0;
    uint64_t aliases = 0;
    uint64_t attributes = 0;
    uint64_t alt_texts = 0;
    std::optional<double> images_per_query;
    std::optional<double> alt_texts_per_image;
};

inline StatsRow finish_row(StatsRow row) {
    if (row.queries) row.images_per_query = double(row.images) / double(row.queries);
    if (row.images) row.alt_texts_per_image = double(row.alt_texts) / double(row.images);
    return row;
}

struct ManifestStats {
    // Fixed row order: the four query sets, then the global recount.
    std::vector<std::pair<std::string, StatsRow>> rows;

    const StatsRow* row(const std::string& name) const {
        for (const auto& [n, r] : rows)
            if (n == name) return &r;
        return nullptr;
    }
};

inline const std::vector<std::string>& stats_row_order() {
    static const std::vector<std::string> kOrder{
        "World entity", "World entity + attribute", "Living entity",
        "Living entity + attribute", "All"};
    return kOrder;
}

// Every count is over unique elements within its row; the All row is a
// global recount, not a sum of rows (sets overlap).
inline ManifestStats compute_stats(const std::vector<DatasetRecord>& records,
                                   const std::map<std::string, SearchQuery>& queries_by_id) {
    struct Acc {
        std::set<std::string> images, queries, entities, aliases, attributes,
            alt_texts;
    };
    std::map<std::string, Acc> acc;
    for (const auto& name : stats_row_order()) acc[name];

    std::map<std::string, std::set<std::string>> entity_aliases;
    for (const auto& rec : records)
        for (const auto& kt : rec.kg_texts)
            for (const auto& a : kt.aliases) entity_aliases[kt.entity_id].insert(a);

    auto note = [&](Acc& a, const DatasetRecord& rec, const SearchQuery& q) {
        a.images.insert(rec.id);
        a.queries.insert(q.id);
        auto note_entity = [&](const std::string& eid) {
            if (eid.empty()) return;
            a.entities.insert(eid);
            auto it = entity_aliases.find(eid);
            if (it != entity_aliases.end())
                for (const auto& al : it->second) a.aliases.insert(al);
        };
        note_entity(q.entity_id);
        for (const auto& origin : q.merged) note_entity(origin.value("entity_id", ""));
        if (!q.attr_value.empty())
            a.attributes.insert(q.attr_category + "|" + fold_key(q.attr_value));
        for (const auto& origin : q.merged) {
            std::string v = origin.value("attr_value", "");
            if (!v.empty())
                a.attributes.insert(origin.value("attr_category", "") + "|" + fold_key(v));
        }
        for (const auto& alt : rec.alt_texts) a.alt_texts.insert(alt);
    };

    for (const auto& rec : records) {
        if (rec.excluded) continue;
        for (const auto& rq : rec.search_queries) {
            auto qit = queries_by_id.find(SearchQuery::make_id(rq.kind, rq.text));
            if (qit == queries_by_id.end()) continue;
            note(acc[query_set_name(qit->second)], rec, qit->second);
            note(acc["All"], rec, qit->second);
        }
    }

    ManifestStats stats;
    for (const auto& name : stats_row_order()) {
        const Acc& a = acc[name];
        StatsRow row;
        row.images = a.images.size();
        row.queries = a.queries.size();
        row.entities = a.entities.size();
        row.aliases = a.aliases.size();
        row.attributes = a.attributes.size();
        row.alt_texts = a.alt_texts.size();
        stats.rows.emplace_back(name, finish_row(row));
    }
    return stats;
}

// Three significant digits, matching how the headline ratios are quoted.
inline std::string format_ratio(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3g", *v);
    return buf;
}

inline json stats_to_json(const ManifestStats& stats) {
    json rows = json::array();
    for (const auto& [name, r] : stats.rows) {
        json row{{"query_set", name},       {"images", r.images},
                 {"queries", r.queries},    {"entities", r.entities},
                 {"aliases", r.aliases},    {"attributes", r.attributes},
                 {"alt_texts", r.alt_texts}};
        row["images_per_query"] =
            r.images_per_query ? json(*r.images_per_query) : json(nullptr);
        row["alt_texts_per_image"] =
            r.alt_texts_per_image ? json(*r.alt_texts_per_image) : json(nullptr);
        rows.push_back(std::move(row));
    }
    return {{"rows", rows}};
}

inline std::string stats_to_text(const ManifestStats& stats) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"Query set", "Images", "Queries", "Entities", "Aliases",
                     "Attributes", "Alt texts", "Img/Query", "Alt/Img"});
    for (const auto& [name, r] : stats.rows) {
        auto count = [](uint64_t v) { return std::to_string(v); };
        cells.push_back({name, count(r.images), count(r.queries), count(r.entities),
                         count(r.aliases),
                         r.attributes ? count(r.attributes) : std::string("-"),
                         count(r.alt_texts), format_ratio(r.images_per_query),
                         format_ratio(r.alt_texts_per_image)});
    }
    std::vector<size_t> widths(cells[0].size(), 0);
    for (const auto& row : cells)
        for (size_t c = 0; c < row.size(); ++c)
            widths[c] = std::max(widths[c], row[c].size());
    std::string out;
    for (size_t rix = 0; rix < cells.size(); ++rix) {
        const auto& row = cells[rix];
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) out += "  ";
            // Left-align the set name, right-align numbers.
            if (c == 0) {
                out += row[c];
                out.append(widths[c] - row[c].size(), ' ');
            } else {
                out.append(widths[c] - row[c].size(), ' ');
                out += row[c];
            }
        }
        out += '\n';
        if (rix == 0) {
            size_t total = 0;
            for (size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c ? 2 : 0);
            out.append(total, '-');
            out += '\n';
        }
    }
    return out;
}

}  // namespace kgharvest
