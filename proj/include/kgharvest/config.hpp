// SPDX-License-Identifier: Apache-2.0
//
// Pipeline configuration: a single JSON file (comments allowed) with
// ${VAR} environment interpolation, plus the seed fan-out shared by all
// stages. Every field has a default; an empty config is runnable.
#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "kgharvest/errors.hpp"
#include "kgharvest/hash.hpp"
#include "kgharvest/jsonl.hpp"
#include "kgharvest/rate_limit.hpp"
#include "kgharvest/text_sampler.hpp"

namespace kgharvest {

// Stage seeds derive from one top-level seed; the label keeps stages
// statistically independent yet individually reproducible.
inline uint64_t derive_seed(uint64_t base, const std::string& label) {
    return fnv1a64(label, base ^ 0x9E3779B97F4A7C15ull);
}

namespace detail {

// Replaces every ${NAME} with the environment value; unset names are
// configuration errors so secrets never silently vanish.
inline std::string interpolate_env(const std::string& s, const std::string& where) {
    std::string out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t open = s.find("${", pos);
        if (open == std::string::npos) {
            out += s.substr(pos);
            break;
        }
        size_t close = s.find('}', open + 2);
        if (close == std::string::npos) {
            out += s.substr(pos);
            break;
        }
        out += s.substr(pos, open - pos);
        std::string name = s.substr(open + 2, close - open - 2);
        const char* value = std::getenv(name.c_str());
        if (!value)
            throw ConfigError("config field '" + where + "' references unset environment variable " +
                              name);
        out += value;
        pos = close + 1;
    }
    return out;
}

inline void interpolate_env_tree(json& node, const std::string& where) {
    if (node.is_string()) {
        node = interpolate_env(node.get<std::string>(), where);
    } else if (node.is_object()) {
        for (auto it = node.begin(); it != node.end(); ++it)
            interpolate_env_tree(it.value(), where.empty() ? it.key() : where + "." + it.key());
    } else if (node.is_array()) {
        size_t i = 0;
        for (auto& item : node)
            interpolate_env_tree(item, where + "[" + std::to_string(i++) + "]");
    }
}

// Dotted-path getter with a field-level diagnostic on type mismatch.
template <typename T>
T config_field(const json& root, const std::string& dotted, T fallback) {
    const json* node = &root;
    size_t pos = 0;
    while (pos <= dotted.size()) {
        size_t dot = dotted.find('.', pos);
        std::string key = dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (!node->is_object() || !node->contains(key)) return fallback;
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    try {
        return node->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config field '" + dotted + "': " + e.what());
    }
}

}  // namespace detail

struct PipelineConfig {
    std::filesystem::path work_dir = "out";
    std::filesystem::path store_dir;  // defaults to work_dir/store
    uint64_t seed = 42;
    bool fixed_timestamps = false;

    struct Kg {
        std::string endpoint = "https://query.wikidata.org/sparql";
        std::string super_entities_file = "data/super_entities.json";
        long long min_sitelinks = 5;
        size_t page_size = 10000;
        std::string wordnet_file;  // optional JSONL synset dump
        std::string wordnet_root;
        std::vector<std::string> wordnet_prune;
        std::string profanity_file;
        int retry_attempts = 3;
        int retry_backoff_ms = 1000;
    } kg;

    struct Llm {
        std::vector<std::string> backends{"default"};
        std::string endpoint;     // HTTP backend; empty selects the lookup table
        std::string lookup_file;  // canned responses for offline runs
        long long popularity_cutoff = 25;
        int retry_attempts = 3;
        int retry_backoff_ms = 1000;
    } llm;

    struct Search {
        std::string engine_default = "bing";
        bool use_google_for_living = false;
        std::string google_endpoint = "https://www.googleapis.com/customsearch/v1";
        std::string bing_endpoint = "https://api.bing.microsoft.com/v7.0/images/search";
        double qps = 3.0;
        int retry_attempts = 3;
        int retry_backoff_ms = 1000;
        std::optional<double> budget_cap_dollars;
        size_t workers = 8;
        std::string benchmark_terms_file;  // query exclusion list
    } search;

    struct Harvest {
        size_t workers = 16;
        int host_delay_ms = 200;
        bool use_engine_snippets = false;
    } harvest;

    struct Curate {
        double dedup_threshold = 0.8;
        double leak_threshold = 0.8;
        std::string eval_leak_dir;  // directory of eval images to scan against
        size_t workers = 8;
    } curate;

    struct Shard {
        size_t shard_size = 10000;
        size_t workers = 4;
    } shard;

    LabelPolicy sampler;

    struct Eval {
        std::string templates_file = "data/clip_imagenet_templates.txt";
        std::string spec_file;
        bool normalize_first = true;
    } eval;

    // Stage artifact locations, all under work_dir.
    std::filesystem::path entities_path() const { return work_dir / "entities.jsonl"; }
    std::filesystem::path visual_path() const { return work_dir / "visual.jsonl"; }
    std::filesystem::path non_visual_path() const { return work_dir / "non_visual.jsonl"; }
    std::filesystem::path natural_types_path() const { return work_dir / "natural_types.jsonl"; }
    std::filesystem::path attributes_path() const { return work_dir / "attributes.jsonl"; }
    std::filesystem::path queries_path() const { return work_dir / "queries.jsonl"; }
    std::filesystem::path results_path() const { return work_dir / "results.jsonl"; }
    std::filesystem::path images_path() const { return work_dir / "images.jsonl"; }
    std::filesystem::path curated_path() const { return work_dir / "curated.jsonl"; }
    std::filesystem::path deduped_path() const { return work_dir / "deduped.jsonl"; }
    std::filesystem::path dataset_path() const { return work_dir / "dataset.jsonl"; }
    std::filesystem::path stats_text_path() const { return work_dir / "stats.txt"; }
    std::filesystem::path stats_json_path() const { return work_dir / "stats.json"; }
    std::filesystem::path shards_dir() const { return work_dir / "shards"; }
    std::filesystem::path samples_path() const { return work_dir / "samples.jsonl"; }
    std::filesystem::path eval_report_path() const { return work_dir / "eval_report.json"; }
    std::filesystem::path checkpoints_dir() const { return work_dir / "checkpoints"; }
    std::filesystem::path reports_dir() const { return work_dir / "reports"; }
    std::filesystem::path store_root() const {
        return store_dir.empty() ? work_dir / "store" : store_dir;
    }
    std::filesystem::path descriptor_cache_path() const {
        return work_dir / "descriptors.bin";
    }

    RetryPolicy kg_retry() const {
        return {kg.retry_attempts, std::chrono::milliseconds(kg.retry_backoff_ms), 2.0};
    }
    RetryPolicy llm_retry() const {
        return {llm.retry_attempts, std::chrono::milliseconds(llm.retry_backoff_ms), 2.0};
    }
    RetryPolicy search_retry() const {
        return {search.retry_attempts, std::chrono::milliseconds(search.retry_backoff_ms),
                2.0};
    }

    void validate() const {
        if (search.budget_cap_dollars && *search.budget_cap_dollars < 0.0)
            throw ConfigError("config field 'search.budget_cap_dollars' must be >= 0");
        if (search.qps <= 0.0)
            throw ConfigError("config field 'search.qps' must be positive");
        if (shard.shard_size == 0)
            throw ConfigError("config field 'shard.shard_size' must be positive");
        if (!(curate.dedup_threshold > 0.0 && curate.dedup_threshold <= 1.0))
            throw ConfigError("config field 'curate.dedup_threshold' must be in (0, 1]");
        if (!(curate.leak_threshold > 0.0 && curate.leak_threshold <= 1.0))
            throw ConfigError("config field 'curate.leak_threshold' must be in (0, 1]");
        if (kg.min_sitelinks < 0)
            throw ConfigError("config field 'kg.min_sitelinks' must be >= 0");
        sampler.validate();
    }
};

inline PipelineConfig config_from_json(json j) {
    detail::interpolate_env_tree(j, "");
    using detail::config_field;
    PipelineConfig c;
    c.work_dir = config_field<std::string>(j, "work_dir", c.work_dir.string());
    c.store_dir = config_field<std::string>(j, "store_dir", "");
    c.seed = config_field<uint64_t>(j, "seed", c.seed);
    c.fixed_timestamps = config_field<bool>(j, "fixed_timestamps", c.fixed_timestamps);

    c.kg.endpoint = config_field<std::string>(j, "kg.endpoint", c.kg.endpoint);
    c.kg.super_entities_file =
        config_field<std::string>(j, "kg.super_entities_file", c.kg.super_entities_file);
    c.kg.min_sitelinks = config_field<long long>(j, "kg.min_sitelinks", c.kg.min_sitelinks);
    c.kg.page_size = config_field<size_t>(j, "kg.page_size", c.kg.page_size);
    c.kg.wordnet_file = config_field<std::string>(j, "kg.wordnet_file", "");
    c.kg.wordnet_root = config_field<std::string>(j, "kg.wordnet_root", "");
    c.kg.wordnet_prune =
        config_field<std::vector<std::string>>(j, "kg.wordnet_prune", {});
    c.kg.profanity_file = config_field<std::string>(j, "kg.profanity_file", "");
    c.kg.retry_attempts = config_field<int>(j, "kg.retry_attempts", c.kg.retry_attempts);
    c.kg.retry_backoff_ms =
        config_field<int>(j, "kg.retry_backoff_ms", c.kg.retry_backoff_ms);

    c.llm.backends =
        config_field<std::vector<std::string>>(j, "llm.backends", c.llm.backends);
    c.llm.endpoint = config_field<std::string>(j, "llm.endpoint", "");
    c.llm.lookup_file = config_field<std::string>(j, "llm.lookup_file", "");
    c.llm.popularity_cutoff =
        config_field<long long>(j, "llm.popularity_cutoff", c.llm.popularity_cutoff);
    c.llm.retry_attempts =
        config_field<int>(j, "llm.retry_attempts", c.llm.retry_attempts);
    c.llm.retry_backoff_ms =
        config_field<int>(j, "llm.retry_backoff_ms", c.llm.retry_backoff_ms);

    c.search.engine_default =
        config_field<std::string>(j, "search.engine_default", c.search.engine_default);
    c.search.use_google_for_living = config_field<bool>(j, "search.use_google_for_living",
                                                        c.search.use_google_for_living);
    c.search.google_endpoint =
        config_field<std::string>(j, "search.google_endpoint", c.search.google_endpoint);
    c.search.bing_endpoint =
        config_field<std::string>(j, "search.bing_endpoint", c.search.bing_endpoint);
    c.search.qps = config_field<double>(j, "search.qps", c.search.qps);
    c.search.retry_attempts =
        config_field<int>(j, "search.retry_attempts", c.search.retry_attempts);
    c.search.retry_backoff_ms =
        config_field<int>(j, "search.retry_backoff_ms", c.search.retry_backoff_ms);
    if (j.contains("search") && j["search"].is_object() &&
        j["search"].contains("budget_cap_dollars") &&
        !j["search"]["budget_cap_dollars"].is_null())
        c.search.budget_cap_dollars =
            config_field<double>(j, "search.budget_cap_dollars", 0.0);
    c.search.workers = config_field<size_t>(j, "search.workers", c.search.workers);
    c.search.benchmark_terms_file =
        config_field<std::string>(j, "search.benchmark_terms_file", "");

    c.harvest.workers = config_field<size_t>(j, "harvest.workers", c.harvest.workers);
    c.harvest.host_delay_ms =
        config_field<int>(j, "harvest.host_delay_ms", c.harvest.host_delay_ms);
    c.harvest.use_engine_snippets = config_field<bool>(j, "harvest.use_engine_snippets",
                                                       c.harvest.use_engine_snippets);

    c.curate.dedup_threshold =
        config_field<double>(j, "curate.dedup_threshold", c.curate.dedup_threshold);
    c.curate.leak_threshold =
        config_field<double>(j, "curate.leak_threshold", c.curate.leak_threshold);
    c.curate.eval_leak_dir = config_field<std::string>(j, "curate.eval_leak_dir", "");
    c.curate.workers = config_field<size_t>(j, "curate.workers", c.curate.workers);

    c.shard.shard_size = config_field<size_t>(j, "shard.shard_size", c.shard.shard_size);
    c.shard.workers = config_field<size_t>(j, "shard.workers", c.shard.workers);

    c.sampler.alt_mass = config_field<double>(j, "sampler.alt_mass", c.sampler.alt_mass);
    c.sampler.query_mass =
        config_field<double>(j, "sampler.query_mass", c.sampler.query_mass);
    c.sampler.description_mass =
        config_field<double>(j, "sampler.description_mass", c.sampler.description_mass);
    c.sampler.alias_mass =
        config_field<double>(j, "sampler.alias_mass", c.sampler.alias_mass);
    c.sampler.include_name_in_aliases = config_field<bool>(
        j, "sampler.include_name_in_aliases", c.sampler.include_name_in_aliases);

    c.eval.templates_file =
        config_field<std::string>(j, "eval.templates_file", c.eval.templates_file);
    c.eval.spec_file = config_field<std::string>(j, "eval.spec_file", "");
    c.eval.normalize_first =
        config_field<bool>(j, "eval.normalize_first", c.eval.normalize_first);

    c.validate();
    return c;
}

// Comments (// and /* */) are allowed in config files.
inline PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    return config_from_json(std::move(j));
}

}  // namespace kgharvest
