// SPDX-License-Identifier: Apache-2.0
//
// Entity catalog construction: SPARQL query building, paged extraction over
// an HTTP endpoint, a noun-hierarchy importer for the living-things subset,
// visual/non-visual partitioning via an LLM backend, and a profanity filter.
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgharvest/checkpoint.hpp"
#include "kgharvest/entity.hpp"
#include "kgharvest/errors.hpp"
#include "kgharvest/http.hpp"
#include "kgharvest/jsonl.hpp"
#include "kgharvest/llm.hpp"
#include "kgharvest/rate_limit.hpp"
#include "kgharvest/strings.hpp"

namespace kgharvest {

inline std::string relation_property(const std::string& relation) {
    if (relation == "subclass_of") return "P279";
    if (relation == "parent_taxon") return "P171";
    throw ConfigError("unknown hierarchy relation: " + relation);
}

// Alternation path over the requested relations, canonical order P279 first.
inline std::string relation_path(const std::vector<std::string>& relations) {
    if (relations.empty()) throw ConfigError("relation set must be non-empty");
    std::vector<std::string> props;
    for (const auto& r : relations) {
        std::string p = "wdt:" + relation_property(r);
        if (std::find(props.begin(), props.end(), p) == props.end()) props.push_back(p);
    }
    std::sort(props.begin(), props.end());  // P171 < P279; canonical order wants P279 first
    std::reverse(props.begin(), props.end());
    if (props.size() == 1) return props[0] + "*";
    return "(" + join(props, "|") + ")*";
}

inline std::string build_sparql(const std::vector<std::string>& super_entity_ids,
                                long long min_sitelinks, const std::vector<std::string>& relations) {
    if (super_entity_ids.empty()) throw ConfigError("super-entity id list must be non-empty");
    if (min_sitelinks < 0) throw ConfigError("min_sitelinks must be >= 0");
    std::vector<std::string> values;
    values.reserve(super_entity_ids.size());
    for (const auto& id : super_entity_ids) values.push_back("wd:" + id);

    std::string q;
    q += "PREFIX wdt: <http://www.wikidata.org/prop/direct/>\n";
    q += "PREFIX wd: <http://www.wikidata.org/entity/>\n";
    q += "PREFIX rdfs: <http://www.w3.org/2000/01/rdf-schema#>\n";
    q += "PREFIX schema: <http://schema.org/>\n";
    q += "PREFIX wikibase: <http://wikiba.se/ontology#>\n";
    q += "PREFIX skos: <http://www.w3.org/2004/02/skos/core#>\n";
    q += "SELECT DISTINCT\n";
    q += "  ?ent\n";
    q += "  ?label\n";
    q += "  ?desc\n";
    q += "  ?links\n";
    q += "  (GROUP_CONCAT(DISTINCT ?alias; SEPARATOR=\";;\") AS ?aliases)\n";
    q += "WHERE {\n";
    q += "  VALUES ?typ { " + join(values, " ") + " }\n";
    q += "  ?ent " + relation_path(relations) + " ?typ .\n";
    q += "  ?ent rdfs:label ?label .\n";
    q += "  FILTER(LANG(?label) = \"en\")\n";
    q += "  ?ent ^schema:about/wikibase:sitelinks ?links .\n";
    q += "  FILTER(?links >= " + std::to_string(min_sitelinks) + ")\n";
    q += "  OPTIONAL {\n";
    q += "    ?ent schema:description ?desc .\n";
    q += "    FILTER(LANG(?desc) = \"en\")\n";
    q += "  }\n";
    q += "  OPTIONAL {\n";
    q += "    ?ent skos:altLabel ?alias .\n";
    q += "    FILTER(LANG(?alias) = \"en\")\n";
    q += "  }\n";
    q += "}\n";
    q += "GROUP BY ?ent ?label ?desc ?links\n";
    q += "ORDER BY DESC(?links)\n";
    return q;
}

// Paged variant: endpoints cap result sizes, so extraction re-issues with
// LIMIT/OFFSET until a short page. The id tie-break makes paging stable.
inline std::string build_sparql_paged(const std::vector<std::string>& super_entity_ids,
                                      long long min_sitelinks,
                                      const std::vector<std::string>& relations, size_t limit,
                                      size_t offset) {
    std::string q = build_sparql(super_entity_ids, min_sitelinks, relations);
    const std::string order = "ORDER BY DESC(?links)\n";
    q.replace(q.rfind(order), order.size(), "ORDER BY DESC(?links) ASC(?ent)\n");
    q += "LIMIT " + std::to_string(limit) + "\n";
    q += "OFFSET " + std::to_string(offset) + "\n";
    return q;
}

struct ExtractionConfig {
    long long min_sitelinks = 5;
    std::vector<SuperEntity> super_entities;
    std::string endpoint_url;
    size_t page_size = 10000;
    size_t max_pages = 100000;  // safety valve against a misbehaving endpoint
};

class SparqlClient {
public:
    SparqlClient(std::string endpoint_url, HttpTransport& transport, RetryPolicy retry = {})
        : endpoint_(std::move(endpoint_url)), transport_(transport), retry_(retry) {}

    // POSTs the query (form-encoded) and returns the parsed JSON results.
    // Transport errors and 5xx responses are retried with backoff.
    json query(const std::string& sparql) {
        std::string body = "query=" + percent_encode(sparql) + "&format=json";
        HeaderList headers{{"Accept", "application/sparql-results+json"}};
        std::string last_error;
        for (int attempt = 0;; ++attempt) {
            auto res = transport_.post(endpoint_, body, "application/x-www-form-urlencoded", headers);
            if (res.ok()) {
                json parsed = json::parse(res.response->body, nullptr, false);
                if (parsed.is_discarded())
                    throw FatalError("endpoint returned unparseable JSON");
                return parsed;
            }
            bool retryable = res.is_transport_error() ||
                             (res.response && res.response->status >= 500);
            last_error = res.is_transport_error()
                             ? res.transport_error
                             : "HTTP " + std::to_string(res.response->status);
            if (!retryable || attempt + 1 >= retry_.max_attempts)
                throw FatalError("endpoint query failed: " + last_error);
            std::this_thread::sleep_for(retry_.backoff_for(attempt));
        }
    }

private:
    std::string endpoint_;
    HttpTransport& transport_;
    RetryPolicy retry_;
};

struct ExtractionResult {
    std::vector<Entity> entities;
    size_t malformed_rows = 0;
    size_t pages_fetched = 0;
};

namespace detail {

inline std::string binding_value(const json& row, const char* var) {
    if (!row.contains(var)) return {};
    const json& cell = row.at(var);
    if (!cell.is_object() || !cell.contains("value")) return {};
    return cell.at("value").get<std::string>();
}

inline std::string entity_id_from_uri(const std::string& uri) {
    size_t slash = uri.rfind('/');
    return slash == std::string::npos ? uri : uri.substr(slash + 1);
}

// One result row -> Entity; nullopt when required fields are missing.
inline std::optional<Entity> parse_binding(const json& row) {
    std::string ent = binding_value(row, "ent");
    std::string label = binding_value(row, "label");
    std::string links = binding_value(row, "links");
    if (ent.empty() || label.empty() || links.empty()) return std::nullopt;
    Entity e;
    e.id = entity_id_from_uri(ent);
    e.name = normalize_whitespace(label);
    if (e.id.empty() || e.name.empty()) return std::nullopt;
    try {
        e.sitelinks = std::stoll(links);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    if (e.sitelinks < 0) return std::nullopt;
    e.description = normalize_whitespace(binding_value(row, "desc"));
    std::set<std::string> seen{fold_key(e.name)};
    for (const auto& frag : split(binding_value(row, "aliases"), ";;")) {
        std::string alias = normalize_whitespace(trim(frag));
        if (alias.empty()) continue;
        if (seen.insert(fold_key(alias)).second) e.aliases.push_back(alias);
    }
    return e;
}

}  // namespace detail

// Union over super-entities of the relation-closure under each root, with
// per-root provenance, merged duplicates, and deterministic global order.
inline ExtractionResult extract_entities(const ExtractionConfig& config, SparqlClient& client) {
    if (config.super_entities.empty()) throw ConfigError("no super-entities configured");
    if (config.page_size == 0) throw ConfigError("page_size must be positive");
    std::unordered_map<std::string, SuperEntity> roots;
    for (const auto& s : config.super_entities) {
        if (s.id.empty()) throw ConfigError("super-entity without id: " + s.name);
        roots[s.id] = s;
    }

    ExtractionResult out;
    std::unordered_map<std::string, size_t> index;
    for (const auto& root : config.super_entities) {
        for (size_t page = 0; page < config.max_pages; ++page) {
            std::string sparql =
                build_sparql_paged({root.id}, config.min_sitelinks, root.relations,
                                   config.page_size, page * config.page_size);
            json result = client.query(sparql);
            ++out.pages_fetched;
            const json* bindings = nullptr;
            if (result.contains("results") && result["results"].contains("bindings") &&
                result["results"]["bindings"].is_array())
                bindings = &result["results"]["bindings"];
            if (!bindings) throw FatalError("endpoint response missing results.bindings");
            for (const json& row : *bindings) {
                auto parsed = detail::parse_binding(row);
                if (!parsed) {
                    ++out.malformed_rows;
                    continue;
                }
                parsed->super_entities = {root.id};
                parsed->source = "wikidata";
                auto it = index.find(parsed->id);
                if (it == index.end()) {
                    index.emplace(parsed->id, out.entities.size());
                    out.entities.push_back(std::move(*parsed));
                } else {
                    merge_entity(out.entities[it->second], *parsed);
                }
            }
            if (bindings->size() < config.page_size) break;
        }
    }

    for (auto& e : out.entities) {
        e.is_living = !e.super_entities.empty();
        for (const auto& sid : e.super_entities) {
            auto it = roots.find(sid);
            if (it == roots.end() || !it->second.living) e.is_living = false;
        }
    }
    sort_entities(out.entities);
    return out;
}

// ---- Noun-hierarchy (WordNet-style) import ----

struct WordnetConfig {
    std::string root_id;                  // e.g. the living-thing synset
    std::vector<std::string> prune_ids;   // subtrees to drop (each id and all below it)
    long long sentinel_sitelinks = 5;     // assigned so imports pass the sitelink filter
};

// Input rows: {"id", "names": [...], "gloss", "hypernyms": [...]}.
// Returns all synsets strictly below the root, minus pruned subtrees.
inline std::vector<Entity> import_wordnet_living(const std::vector<json>& rows,
                                                 const WordnetConfig& config) {
    if (config.root_id.empty()) throw ConfigError("wordnet root id not configured");
    std::unordered_map<std::string, const json*> by_id;
    std::unordered_map<std::string, std::vector<std::string>> children;
    for (const auto& row : rows) {
        std::string id = row.at("id").get<std::string>();
        by_id[id] = &row;
        if (row.contains("hypernyms"))
            for (const auto& h : row.at("hypernyms"))
                children[h.get<std::string>()].push_back(id);
    }
    if (!by_id.count(config.root_id))
        throw ConfigError("wordnet root " + config.root_id + " not present in data");

    auto descend = [&](const std::vector<std::string>& seeds, bool include_seeds) {
        std::unordered_set<std::string> seen;
        std::vector<std::string> stack;
        for (const auto& s : seeds) {
            if (include_seeds) seen.insert(s);
            stack.push_back(s);
        }
        while (!stack.empty()) {
            std::string cur = stack.back();
            stack.pop_back();
            auto it = children.find(cur);
            if (it == children.end()) continue;
            for (const auto& child : it->second)
                if (seen.insert(child).second) stack.push_back(child);
        }
        return seen;
    };

    auto under_root = descend({config.root_id}, false);
    under_root.erase(config.root_id);  // "under" is strictly below
    auto pruned = descend(config.prune_ids, true);

    std::vector<Entity> out;
    for (const auto& id : under_root) {
        if (pruned.count(id)) continue;
        const json& row = *by_id.at(id);
        Entity e;
        e.id = id;
        auto names = row.at("names").get<std::vector<std::string>>();
        if (names.empty()) continue;
        e.name = normalize_whitespace(names[0]);
        std::set<std::string> seen{fold_key(e.name)};
        for (size_t i = 1; i < names.size(); ++i) {
            std::string alias = normalize_whitespace(names[i]);
            if (!alias.empty() && seen.insert(fold_key(alias)).second) e.aliases.push_back(alias);
        }
        e.description = normalize_whitespace(row.value("gloss", ""));
        e.sitelinks = config.sentinel_sitelinks;
        e.super_entities = {config.root_id};
        e.source = "wordnet";
        e.is_living = true;
        out.push_back(std::move(e));
    }
    sort_entities(out);
    return out;
}

// Cross-source merge: collisions by case-folded name keep the first
// catalog's record; names unique to the second catalog are appended.
inline std::vector<Entity> merge_catalogs(const std::vector<Entity>& primary,
                                          const std::vector<Entity>& secondary) {
    std::vector<Entity> out = primary;
    std::unordered_set<std::string> names;
    for (const auto& e : primary) names.insert(fold_key(e.name));
    for (const auto& e : secondary)
        if (names.insert(fold_key(e.name)).second) out.push_back(e);
    sort_entities(out);
    return out;
}

// ---- Visual / non-visual partition ----

struct VisualPartition {
    std::vector<Entity> visual;
    std::vector<Entity> non_visual;
    std::vector<Entity> undecided;  // backend failed after retries; never dropped
};

// Verdicts are cached by entity id (JSONL sidecar), so re-runs are free.
inline VisualPartition classify_visual(const std::vector<Entity>& entities, LlmBackend& backend,
                                       const std::filesystem::path& cache_path,
                                       RetryPolicy retry = {}) {
    std::unordered_map<std::string, bool> cache;
    if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
        for_each_jsonl(cache_path, [&](const json& row) {
            cache[row.at("id").get<std::string>()] = row.at("visual").get<bool>();
        });
    }
    std::ofstream cache_out;
    if (!cache_path.empty()) {
        if (cache_path.has_parent_path()) std::filesystem::create_directories(cache_path.parent_path());
        cache_out.open(cache_path, std::ios::app);
    }

    VisualPartition part;
    for (const auto& e : entities) {
        auto it = cache.find(e.id);
        bool verdict = false;
        bool have = false;
        if (it != cache.end()) {
            verdict = it->second;
            have = true;
        } else {
            json request{{"task", "classify_visual"}, {"name", e.name}, {"description", e.description}};
            try {
                json response = llm_generate_with_retries(backend, request, retry);
                if (!response.is_object() || !response.contains("visual") ||
                    !response["visual"].is_boolean())
                    throw LlmError("classify_visual: malformed verdict for " + e.id);
                verdict = response["visual"].get<bool>();
                have = true;
                if (cache_out.is_open()) {
                    cache_out << json{{"id", e.id}, {"visual", verdict}}.dump() << '\n';
                    cache_out.flush();
                }
            } catch (const LlmError&) {
                part.undecided.push_back(e);
            }
        }
        if (have) (verdict ? part.visual : part.non_visual).push_back(e);
    }
    return part;
}

// ---- Profanity filter ----

struct ProfanityRemoval {
    std::string entity_id;
    std::string field;  // "name" or "alias"
    std::string token;
};

inline std::vector<std::string> load_word_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open word list " + path.string());
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        std::string w = fold_key(trim(line));
        if (!w.empty() && w[0] != '#') words.push_back(w);
    }
    return words;
}

// Whole-token, case-insensitive match over names and aliases.
inline std::vector<Entity> apply_profanity_filter(const std::vector<Entity>& entities,
                                                  const std::vector<std::string>& blocklist,
                                                  std::vector<ProfanityRemoval>* removals = nullptr) {
    std::unordered_set<std::string> blocked(blocklist.begin(), blocklist.end());
    auto offending_token = [&](const std::string& text) -> std::optional<std::string> {
        for (const auto& tok : word_tokens(text))
            if (blocked.count(tok)) return tok;
        return std::nullopt;
    };
    std::vector<Entity> kept;
    for (const auto& e : entities) {
        std::optional<std::string> hit = offending_token(e.name);
        std::string field = "name";
        if (!hit) {
            for (const auto& a : e.aliases) {
                hit = offending_token(a);
                if (hit) {
                    field = "alias";
                    break;
                }
            }
        }
        if (hit) {
            if (removals) removals->push_back({e.id, field, *hit});
        } else {
            kept.push_back(e);
        }
    }
    return kept;
}

}  // namespace kgharvest
