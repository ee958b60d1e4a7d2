// SPDX-License-Identifier: Apache-2.0
//
// Training-time text label sampling. Mass splits 50/50 between alt texts and
// knowledge-graph texts; within the KG half the query takes 0.25, the
// descriptions 0.10, and the aliases the 0.65 residual. Empty sections fold
// forward: descriptions into aliases, aliases into the query.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "kgharvest/dataset_store.hpp"
#include "kgharvest/errors.hpp"

namespace kgharvest {

struct LabelPolicy {
    double alt_mass = 0.5;
    double query_mass = 0.25;        // within the KG branch
    double description_mass = 0.10;  // within the KG branch
    double alias_mass = 0.65;        // within the KG branch (residual)
    bool include_name_in_aliases = false;

    void validate() const {
        if (!(alt_mass >= 0.0 && alt_mass <= 1.0))
            throw ConfigError("alt_mass must be in [0, 1]");
        if (query_mass < 0.0 || description_mass < 0.0 || alias_mass < 0.0)
            throw ConfigError("label masses must be non-negative");
        double kg = query_mass + description_mass + alias_mass;
        if (std::abs(kg - 1.0) > 1e-9)
            throw ConfigError("query/description/alias masses must sum to 1, got " +
                              std::to_string(kg));
    }
};

struct LabelPool {
    std::vector<std::string> alt_texts;
    std::string search_query;
    std::vector<std::string> aliases;
    std::vector<std::string> descriptions;
};

// Ordered (text, probability) pairs; duplicate texts accumulate into their
// first occurrence so the result is a true distribution over distinct texts.
using LabelDistribution = std::vector<std::pair<std::string, double>>;

inline LabelDistribution label_distribution(const LabelPool& pool,
                                            const LabelPolicy& policy = {}) {
    policy.validate();
    if (pool.search_query.empty())
        throw ContractError("label pool has an empty search query");

    LabelDistribution dist;
    auto add = [&dist](const std::string& text, double p) {
        for (auto& [t, q] : dist)
            if (t == text) {
                q += p;
                return;
            }
        dist.emplace_back(text, p);
    };

    double kg_total = pool.alt_texts.empty() ? 1.0 : 1.0 - policy.alt_mass;
    if (!pool.alt_texts.empty()) {
        double per_alt = policy.alt_mass / double(pool.alt_texts.size());
        for (const auto& alt : pool.alt_texts) add(alt, per_alt);
    }

    double q = policy.query_mass;
    double d = policy.description_mass;
    double a = policy.alias_mass;
    if (pool.descriptions.empty()) {
        a += d;
        d = 0.0;
    }
    if (pool.aliases.empty()) {
        q += a;
        a = 0.0;
    }
    add(pool.search_query, q * kg_total);
    if (d > 0.0) {
        double per = d * kg_total / double(pool.descriptions.size());
        for (const auto& desc : pool.descriptions) add(desc, per);
    }
    if (a > 0.0) {
        double per = a * kg_total / double(pool.aliases.size());
        for (const auto& alias : pool.aliases) add(alias, per);
    }
    return dist;
}

namespace detail {

// 53-bit uniform in [0, 1); bit-identical across platforms.
inline double uniform01(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1.0p-53;
}

inline size_t uniform_index(std::mt19937_64& rng, size_t n) {
    size_t i = size_t(uniform01(rng) * double(n));
    return i >= n ? n - 1 : i;
}

}  // namespace detail

inline std::string sample_label(const LabelPool& pool, const LabelPolicy& policy,
                                std::mt19937_64& rng) {
    LabelDistribution dist = label_distribution(pool, policy);
    double u = detail::uniform01(rng);
    double cum = 0.0;
    for (const auto& [text, p] : dist) {
        cum += p;
        if (u < cum) return text;
    }
    return dist.back().first;  // guards accumulated rounding at u ~ 1
}

// One pool per entity on the record. The pool's query is the first record
// query that mentions the entity (whole-word, name or alias), falling back
// to the record's first query. Aliases drop the entity name unless the
// policy keeps it.
inline std::vector<LabelPool> build_label_pools(const DatasetRecord& record,
                                                const LabelPolicy& policy = {}) {
    if (record.search_queries.empty())
        throw ContractError("record " + record.id + " has no search queries");
    auto query_for = [&](const KgText& kt) -> std::string {
        for (const auto& rq : record.search_queries) {
            if (find_whole_word(rq.text, kt.name) != std::string::npos) return rq.text;
            for (const auto& alias : kt.aliases)
                if (find_whole_word(rq.text, alias) != std::string::npos)
                    return rq.text;
        }
        return record.search_queries.front().text;
    };
    std::vector<LabelPool> pools;
    for (const auto& kt : record.kg_texts) {
        LabelPool pool;
        pool.alt_texts = record.alt_texts;
        pool.search_query = query_for(kt);
        pool.descriptions = kt.descriptions;
        for (const auto& alias : kt.aliases)
            if (policy.include_name_in_aliases || fold_key(alias) != fold_key(kt.name))
                pool.aliases.push_back(alias);
        pools.push_back(std::move(pool));
    }
    if (pools.empty()) {
        LabelPool pool;
        pool.alt_texts = record.alt_texts;
        pool.search_query = record.search_queries.front().text;
        pools.push_back(std::move(pool));
    }
    return pools;
}

// Mixture over pools with uniform entity choice; exact texts merge across
// pools, so the alt section keeps its full mass.
inline LabelDistribution record_label_distribution(const DatasetRecord& record,
                                                   const LabelPolicy& policy = {}) {
    auto pools = build_label_pools(record, policy);
    LabelDistribution mix;
    double w = 1.0 / double(pools.size());
    for (const auto& pool : pools)
        for (const auto& [text, p] : label_distribution(pool, policy)) {
            bool found = false;
            for (auto& [t, q] : mix)
                if (t == text) {
                    q += w * p;
                    found = true;
                    break;
                }
            if (!found) mix.emplace_back(text, w * p);
        }
    return mix;
}

// Entity first (uniform), then the per-pool draw. Single-entity records
// consume exactly one uniform per label.
inline std::string sample_record_label(const DatasetRecord& record,
                                       const LabelPolicy& policy,
                                       std::mt19937_64& rng) {
    auto pools = build_label_pools(record, policy);
    size_t pick = pools.size() == 1 ? 0 : detail::uniform_index(rng, pools.size());
    return sample_label(pools[pick], policy, rng);
}

}  // namespace kgharvest
