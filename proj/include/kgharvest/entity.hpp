// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "kgharvest/jsonl.hpp"
#include "kgharvest/strings.hpp"

namespace kgharvest {

// A category root the extractor expands. Wikidata roots carry a Q-id and the
// relation paths to traverse; lexicon roots name a synset id instead.
struct SuperEntity {
    std::string id;
    std::string name;
    std::string description;
    std::string source = "wikidata";  // "wikidata" | "wordnet"
    bool living = false;
    std::vector<std::string> relations;  // e.g. {"subclass_of"} or {"subclass_of","parent_taxon"}

    static SuperEntity from_json(const json& j) {
        SuperEntity s;
        s.id = j.value("id", "");
        s.name = j.at("name").get<std::string>();
        s.description = j.value("description", "");
        s.source = j.value("source", "wikidata");
        s.living = j.value("living", false);
        if (j.contains("relations"))
            s.relations = j.at("relations").get<std::vector<std::string>>();
        else
            s.relations = {"subclass_of"};
        return s;
    }

    json to_json() const {
        return json{{"id", id},           {"name", name},     {"description", description},
                    {"source", source},   {"living", living}, {"relations", relations}};
    }
};

struct Entity {
    std::string id;
    std::string name;
    std::string description;
    std::vector<std::string> aliases;
    long long sitelinks = 0;
    std::vector<std::string> super_entities;  // ids of the roots that reached it
    std::string source = "wikidata";
    bool is_living = false;

    static Entity from_json(const json& j) {
        Entity e;
        e.id = j.at("id").get<std::string>();
        e.name = j.at("name").get<std::string>();
        e.description = j.value("description", "");
        if (j.contains("aliases")) e.aliases = j.at("aliases").get<std::vector<std::string>>();
        e.sitelinks = j.value("sitelinks", 0LL);
        if (j.contains("super_entities"))
            e.super_entities = j.at("super_entities").get<std::vector<std::string>>();
        e.source = j.value("source", "wikidata");
        e.is_living = j.value("is_living", false);
        return e;
    }

    json to_json() const {
        return json{{"id", id},
                    {"name", name},
                    {"description", description},
                    {"aliases", aliases},
                    {"sitelinks", sitelinks},
                    {"super_entities", super_entities},
                    {"source", source},
                    {"is_living", is_living}};
    }

    // All surface forms: name first, then aliases (order preserved).
    std::vector<std::string> surface_forms() const {
        std::vector<std::string> out;
        out.reserve(aliases.size() + 1);
        out.push_back(name);
        for (const auto& a : aliases) out.push_back(a);
        return out;
    }
};

// Merge a freshly extracted row into an existing record for the same id.
// Name and description keep the first-seen value; aliases and root
// provenance accumulate (alias dedup is case-insensitive, name excluded).
inline void merge_entity(Entity& into, const Entity& other) {
    std::set<std::string> seen;
    seen.insert(fold_key(into.name));
    for (const auto& a : into.aliases) seen.insert(fold_key(a));
    for (const auto& a : other.aliases) {
        if (seen.insert(fold_key(a)).second) into.aliases.push_back(a);
    }
    for (const auto& s : other.super_entities) {
        if (std::find(into.super_entities.begin(), into.super_entities.end(), s) ==
            into.super_entities.end())
            into.super_entities.push_back(s);
    }
    into.sitelinks = std::max(into.sitelinks, other.sitelinks);
    if (into.description.empty()) into.description = other.description;
}

// Stable global ordering used for every entity-level output file.
inline void sort_entities(std::vector<Entity>& entities) {
    std::sort(entities.begin(), entities.end(), [](const Entity& a, const Entity& b) {
        if (a.sitelinks != b.sitelinks) return a.sitelinks > b.sitelinks;
        return a.id < b.id;
    });
}

}  // namespace kgharvest
