// SPDX-License-Identifier: Apache-2.0
//
// Visual attribute generation over pluggable LLM backends, multi-backend
// merging, and natural-type selection from an entity's ancestor chain.
#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kgharvest/entity.hpp"
#include "kgharvest/errors.hpp"
#include "kgharvest/llm.hpp"
#include "kgharvest/strings.hpp"

namespace kgharvest {

enum class AttributeCategory { Color, PatternTexture, Parts, ShapeSize, Environment, Other };

inline const std::array<AttributeCategory, 6>& all_categories() {
    static const std::array<AttributeCategory, 6> cats{
        AttributeCategory::Color,     AttributeCategory::PatternTexture,
        AttributeCategory::Parts,     AttributeCategory::ShapeSize,
        AttributeCategory::Environment, AttributeCategory::Other};
    return cats;
}

inline std::string to_string(AttributeCategory c) {
    switch (c) {
        case AttributeCategory::Color: return "Color";
        case AttributeCategory::PatternTexture: return "PatternTexture";
        case AttributeCategory::Parts: return "Parts";
        case AttributeCategory::ShapeSize: return "ShapeSize";
        case AttributeCategory::Environment: return "Environment";
        case AttributeCategory::Other: return "Other";
    }
    throw ContractError("unreachable attribute category");
}

inline AttributeCategory category_from_string(const std::string& s) {
    for (auto c : all_categories())
        if (to_string(c) == s) return c;
    throw ConfigError("unknown attribute category: " + s);
}

struct Attribute {
    std::string entity_id;
    AttributeCategory category = AttributeCategory::Other;
    std::string value;
    std::string search_query;
    std::string backend;

    static Attribute from_json(const json& j) {
        Attribute a;
        a.entity_id = j.at("entity_id").get<std::string>();
        a.category = category_from_string(j.at("category").get<std::string>());
        a.value = j.at("value").get<std::string>();
        a.search_query = j.at("search_query").get<std::string>();
        a.backend = j.value("backend", "");
        return a;
    }

    json to_json() const {
        return json{{"entity_id", entity_id},
                    {"category", to_string(category)},
                    {"value", value},
                    {"search_query", search_query},
                    {"backend", backend}};
    }
};

struct NaturalType {
    std::string entity_id;
    std::string type_name;
    std::string reason;

    static NaturalType from_json(const json& j) {
        return {j.at("entity_id").get<std::string>(), j.at("type_name").get<std::string>(),
                j.at("reason").get<std::string>()};
    }

    json to_json() const {
        return json{{"entity_id", entity_id}, {"type_name", type_name}, {"reason", reason}};
    }
};

// A usable attribute query must mention what it searches for: the entity
// name, an alias, or the natural type, as a case-insensitive substring.
// (Substring, not whole word: queries often inflect, e.g. a plural.)
inline bool attribute_query_mentions_entity(const Entity& entity,
                                            const std::optional<std::string>& natural_type,
                                            const std::string& search_query) {
    if (trim(search_query).empty()) return false;
    if (contains_ci(search_query, entity.name)) return true;
    for (const auto& a : entity.aliases)
        if (contains_ci(search_query, a)) return true;
    return natural_type && !natural_type->empty() && contains_ci(search_query, *natural_type);
}

constexpr size_t kMaxAttributesPerCategory = 10;

// Strict response schema: {"attributes":[{"value","search_query"}...]} with
// at most 10 items. Anything else rejects the whole response.
inline std::vector<Attribute> parse_attributes_response(const json& response,
                                                        const Entity& entity,
                                                        AttributeCategory category,
                                                        const std::string& backend_id) {
    if (!response.is_object() || !response.contains("attributes") ||
        !response["attributes"].is_array())
        throw LlmError(backend_id + ": attributes response is not {attributes:[...]}");
    const json& items = response["attributes"];
    if (items.size() > kMaxAttributesPerCategory)
        throw LlmError(backend_id + ": more than 10 attributes in one category");
    std::vector<Attribute> out;
    for (const json& item : items) {
        if (!item.is_object() || !item.contains("value") || !item["value"].is_string() ||
            !item.contains("search_query") || !item["search_query"].is_string())
            throw LlmError(backend_id + ": malformed attribute item");
        Attribute a;
        a.entity_id = entity.id;
        a.category = category;
        a.value = normalize_whitespace(item["value"].get<std::string>());
        a.search_query = normalize_whitespace(item["search_query"].get<std::string>());
        a.backend = backend_id;
        if (a.value.empty()) throw LlmError(backend_id + ": empty attribute value");
        out.push_back(std::move(a));
    }
    return out;
}

// Merge per-backend lists for one (entity, category): dedup by folded value
// (first-seen survives), rank by distinct-backend vote count then first-seen
// position, cap at 10.
inline std::vector<Attribute> merge_attributes(const std::vector<std::vector<Attribute>>& per_backend) {
    struct Slot {
        Attribute attr;
        std::set<std::string> voters;
        size_t first_seen;
    };
    std::vector<Slot> slots;
    std::map<std::string, size_t> index;
    size_t position = 0;
    for (const auto& list : per_backend) {
        for (const auto& a : list) {
            std::string key = fold_key(a.value);
            auto it = index.find(key);
            if (it == index.end()) {
                index.emplace(key, slots.size());
                slots.push_back({a, {a.backend}, position});
            } else {
                slots[it->second].voters.insert(a.backend);
            }
            ++position;
        }
    }
    std::sort(slots.begin(), slots.end(), [](const Slot& x, const Slot& y) {
        if (x.voters.size() != y.voters.size()) return x.voters.size() > y.voters.size();
        return x.first_seen < y.first_seen;
    });
    if (slots.size() > kMaxAttributesPerCategory) slots.resize(kMaxAttributesPerCategory);
    std::vector<Attribute> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(s.attr));
    return out;
}

struct AttrGenStats {
    size_t backend_failures = 0;    // backend gave no usable response after retries
    size_t rejected_items = 0;      // attributes failing the mention invariant
    size_t gated_entities = 0;      // below the popularity cutoff
    size_t natural_type_fallbacks = 0;
};

inline std::vector<Attribute> generate_attributes(
    const Entity& entity, const std::vector<AttributeCategory>& categories,
    const std::vector<std::shared_ptr<LlmBackend>>& backends, long long popularity_cutoff,
    const std::optional<std::string>& natural_type = std::nullopt, RetryPolicy retry = {},
    AttrGenStats* stats = nullptr) {
    if (entity.sitelinks < popularity_cutoff) {
        if (stats) ++stats->gated_entities;
        return {};
    }
    std::vector<Attribute> out;
    for (auto category : categories) {
        std::vector<std::vector<Attribute>> per_backend;
        for (const auto& backend : backends) {
            json request{{"task", "attributes"},
                         {"name", entity.name},
                         {"description", entity.description},
                         {"aliases", entity.aliases},
                         {"category", to_string(category)}};
            try {
                json response = llm_generate_with_retries(*backend, request, retry);
                auto parsed = parse_attributes_response(response, entity, category, backend->id());
                std::vector<Attribute> valid;
                for (auto& a : parsed) {
                    if (attribute_query_mentions_entity(entity, natural_type, a.search_query))
                        valid.push_back(std::move(a));
                    else if (stats)
                        ++stats->rejected_items;
                }
                per_backend.push_back(std::move(valid));
            } catch (const LlmError&) {
                if (stats) ++stats->backend_failures;
            }
        }
        auto merged = merge_attributes(per_backend);
        out.insert(out.end(), merged.begin(), merged.end());
    }
    return out;
}

// Choose the ancestor a reader would most naturally call this entity.
// Invalid backend output gets one corrective retry, then falls back to the
// nearest ancestor with a synthesized reason.
inline NaturalType select_natural_type(const Entity& entity,
                                       const std::vector<std::string>& ancestors,
                                       LlmBackend& backend, RetryPolicy retry = {},
                                       AttrGenStats* stats = nullptr) {
    if (ancestors.empty()) throw ContractError("select_natural_type: ancestors must be non-empty");
    auto synthesized = [&](const std::string& type) {
        return NaturalType{entity.id, type, "a kind of " + type};
    };
    if (ancestors.size() == 1) return synthesized(ancestors[0]);

    auto validate = [&](const json& response) -> std::optional<NaturalType> {
        if (!response.is_object() || !response.contains("type_name") ||
            !response["type_name"].is_string() || !response.contains("reason") ||
            !response["reason"].is_string())
            return std::nullopt;
        std::string type = response["type_name"].get<std::string>();
        std::string reason = normalize_whitespace(response["reason"].get<std::string>());
        if (reason.empty()) return std::nullopt;
        if (std::find(ancestors.begin(), ancestors.end(), type) == ancestors.end())
            return std::nullopt;
        return NaturalType{entity.id, type, reason};
    };

    json request{{"task", "natural_type"},
                 {"name", entity.name},
                 {"description", entity.description},
                 {"ancestors", ancestors}};
    try {
        auto first = validate(llm_generate_with_retries(backend, request, retry));
        if (first) return *first;
        json corrective = request;
        corrective["error"] = "type_name must be exactly one of the listed ancestors";
        auto second = validate(llm_generate_with_retries(backend, corrective, retry));
        if (second) return *second;
    } catch (const LlmError&) {
    }
    if (stats) ++stats->natural_type_fallbacks;
    return synthesized(ancestors[0]);
}

}  // namespace kgharvest
