// SPDX-License-Identifier: Apache-2.0
//
// Expansion of the entity and attribute catalogs into search queries, plus
// natural-type substitution and catalog-wide deduplication.
#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgharvest/attr_gen.hpp"
#include "kgharvest/entity.hpp"
#include "kgharvest/errors.hpp"
#include "kgharvest/hash.hpp"
#include "kgharvest/strings.hpp"

namespace kgharvest {

enum class QueryKind { entity, entity_attribute, natural_type_attribute };

inline std::string to_string(QueryKind k) {
    switch (k) {
        case QueryKind::entity: return "entity";
        case QueryKind::entity_attribute: return "entity_attribute";
        case QueryKind::natural_type_attribute: return "natural_type_attribute";
    }
    throw ContractError("unreachable query kind");
}

inline QueryKind query_kind_from_string(const std::string& s) {
    if (s == "entity") return QueryKind::entity;
    if (s == "entity_attribute") return QueryKind::entity_attribute;
    if (s == "natural_type_attribute") return QueryKind::natural_type_attribute;
    throw ConfigError("unknown query kind: " + s);
}

struct SearchQuery {
    std::string id;
    std::string text;       // single-line, whitespace-normalized
    QueryKind kind = QueryKind::entity;
    std::string entity_id;  // empty for natural_type_attribute (entity-agnostic)
    std::string attr_category;
    std::string attr_value;
    std::string domain_tag = "world";  // "living" | "world"
    std::string engine_hint;           // "", "bing", "google"
    json merged = json::array();       // provenance of duplicates folded into this query

    static std::string make_id(QueryKind kind, const std::string& text) {
        return fnv1a64_hex(to_string(kind) + "|" + fold_key(text));
    }

    static SearchQuery from_json(const json& j) {
        SearchQuery q;
        q.id = j.at("id").get<std::string>();
        q.text = j.at("text").get<std::string>();
        q.kind = query_kind_from_string(j.at("kind").get<std::string>());
        q.entity_id = j.value("entity_id", "");
        q.attr_category = j.value("attr_category", "");
        q.attr_value = j.value("attr_value", "");
        q.domain_tag = j.value("domain_tag", "world");
        q.engine_hint = j.value("engine_hint", "");
        if (j.contains("merged")) q.merged = j.at("merged");
        return q;
    }

    json to_json() const {
        return json{{"id", id},
                    {"text", text},
                    {"kind", to_string(kind)},
                    {"entity_id", entity_id},
                    {"attr_category", attr_category},
                    {"attr_value", attr_value},
                    {"domain_tag", domain_tag},
                    {"engine_hint", engine_hint},
                    {"merged", merged}};
    }

    json provenance() const {
        return json{{"kind", to_string(kind)},
                    {"entity_id", entity_id},
                    {"attr_category", attr_category},
                    {"attr_value", attr_value}};
    }
};

inline std::string domain_of(const Entity& e) { return e.is_living ? "living" : "world"; }

// One query per distinct case-folded surface form (name first, then aliases).
inline std::vector<SearchQuery> entity_queries(const Entity& entity) {
    std::vector<SearchQuery> out;
    std::map<std::string, bool> seen;
    for (const auto& form : entity.surface_forms()) {
        std::string text = normalize_whitespace(form);
        if (text.empty() || !seen.emplace(fold_key(text), true).second) continue;
        SearchQuery q;
        q.text = text;
        q.kind = QueryKind::entity;
        q.entity_id = entity.id;
        q.domain_tag = domain_of(entity);
        q.id = SearchQuery::make_id(q.kind, q.text);
        out.push_back(std::move(q));
    }
    return out;
}

inline std::vector<SearchQuery> attribute_queries(
    const std::vector<Attribute>& attributes,
    const std::unordered_map<std::string, const Entity*>& entities) {
    std::vector<SearchQuery> out;
    out.reserve(attributes.size());
    for (const auto& a : attributes) {
        if (trim(a.search_query).empty()) throw ContractError("attribute with empty search_query");
        SearchQuery q;
        q.text = normalize_whitespace(a.search_query);
        q.kind = QueryKind::entity_attribute;
        q.entity_id = a.entity_id;
        q.attr_category = to_string(a.category);
        q.attr_value = a.value;
        auto it = entities.find(a.entity_id);
        q.domain_tag = it != entities.end() ? domain_of(*it->second) : "world";
        q.id = SearchQuery::make_id(q.kind, q.text);
        out.push_back(std::move(q));
    }
    return out;
}

struct NaturalTypeQueryStats {
    size_t skipped_no_type = 0;
    size_t skipped_no_mention = 0;
    size_t skipped_residual_mention = 0;
    size_t merged_duplicates = 0;
};

namespace detail {

// Replace the first whole-word occurrence (longest surface form first) of
// the entity mention with its natural type. nullopt when no mention exists
// or a mention survives the substitution.
inline std::optional<std::string> substitute_mention(const std::string& query_text,
                                                     const Entity& entity,
                                                     const std::string& natural_type) {
    std::vector<std::string> forms = entity.surface_forms();
    std::stable_sort(forms.begin(), forms.end(),
                     [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
    std::string replaced;
    bool hit = false;
    for (const auto& form : forms) {
        if (form.empty()) continue;
        size_t pos = find_whole_word(query_text, form);
        if (pos == std::string::npos) continue;
        replaced = query_text.substr(0, pos) + natural_type + query_text.substr(pos + form.size());
        hit = true;
        break;
    }
    if (!hit) return std::nullopt;
    for (const auto& form : forms)
        if (!form.empty() && find_whole_word(replaced, form) != std::string::npos)
            return std::nullopt;  // substitution left a mention behind; unsafe to emit
    return normalize_whitespace(replaced);
}

}  // namespace detail

// "eagle in its nest" -> "bird in its nest": attribute queries rewritten to
// their entity's natural type, deduplicated case-insensitively across
// entities, and stripped of entity identity (the result is entity-agnostic).
inline std::vector<SearchQuery> natural_type_queries(
    const std::vector<Attribute>& attributes,
    const std::unordered_map<std::string, NaturalType>& natural_types,
    const std::unordered_map<std::string, const Entity*>& entities,
    NaturalTypeQueryStats* stats = nullptr) {
    std::vector<SearchQuery> out;
    std::map<std::string, size_t> by_fold;
    for (const auto& a : attributes) {
        auto nt = natural_types.find(a.entity_id);
        auto ent = entities.find(a.entity_id);
        if (nt == natural_types.end() || ent == entities.end()) {
            if (stats) ++stats->skipped_no_type;
            continue;
        }
        auto substituted =
            detail::substitute_mention(normalize_whitespace(a.search_query), *ent->second,
                                       nt->second.type_name);
        if (!substituted) {
            if (stats) {
                bool any_mention = false;
                for (const auto& form : ent->second->surface_forms())
                    if (!form.empty() &&
                        find_whole_word(a.search_query, form) != std::string::npos) {
                        any_mention = true;
                        break;
                    }
                ++(any_mention ? stats->skipped_residual_mention : stats->skipped_no_mention);
            }
            continue;
        }
        json origin{{"entity_id", a.entity_id},
                    {"attr_category", to_string(a.category)},
                    {"attr_value", a.value}};
        auto it = by_fold.find(fold_key(*substituted));
        if (it != by_fold.end()) {
            out[it->second].merged.push_back(origin);
            if (stats) ++stats->merged_duplicates;
            continue;
        }
        SearchQuery q;
        q.text = *substituted;
        q.kind = QueryKind::natural_type_attribute;
        q.attr_category = to_string(a.category);
        q.attr_value = a.value;
        q.domain_tag = domain_of(*ent->second);
        q.id = SearchQuery::make_id(q.kind, q.text);
        by_fold.emplace(fold_key(*substituted), out.size());
        out.push_back(std::move(q));
    }
    return out;
}

// Catalog-wide dedup on folded text; first occurrence wins and absorbs the
// provenance of later duplicates. Idempotent.
inline std::vector<SearchQuery> dedupe_queries(const std::vector<SearchQuery>& queries) {
    std::vector<SearchQuery> out;
    std::map<std::string, size_t> index;
    for (const auto& q : queries) {
        std::string key = fold_key(q.text);
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, out.size());
            out.push_back(q);
            continue;
        }
        SearchQuery& survivor = out[it->second];
        if (!(q.provenance() == survivor.provenance())) survivor.merged.push_back(q.provenance());
        for (const auto& m : q.merged) survivor.merged.push_back(m);
    }
    return out;
}

// Table-style set name: domain plus whether the query carries an attribute.
inline std::string query_set_name(const SearchQuery& q) {
    std::string domain = q.domain_tag == "living" ? "Living" : "World";
    return q.kind == QueryKind::entity ? domain + " entity" : domain + " entity + attribute";
}

}  // namespace kgharvest
