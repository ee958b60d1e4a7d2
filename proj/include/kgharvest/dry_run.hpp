// SPDX-License-Identifier: Apache-2.0
//
// End-to-end pipeline run against in-process mock services, driven entirely
// by bundled fixtures. No real network, no API keys, deterministic output.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kgharvest/mock/mock_kg.hpp"
#include "kgharvest/mock/mock_search.hpp"
#include "kgharvest/mock/mock_web.hpp"
#include "kgharvest/pipeline.hpp"

namespace kgharvest {

namespace detail {

inline std::string replace_all(std::string s, const std::string& from,
                               const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

}  // namespace detail

struct DryRunFixtures {
    std::filesystem::path dir;  // directory holding the fixture files

    std::filesystem::path kg_graph() const { return dir / "kg_graph.json"; }
    std::filesystem::path wordnet() const { return dir / "wordnet.jsonl"; }
    std::filesystem::path super_entities() const {
        return dir / "super_entities_dryrun.json";
    }
    std::filesystem::path llm_lookup() const { return dir / "llm_lookup.json"; }
    std::filesystem::path search_db() const { return dir / "search_db.json"; }
    std::filesystem::path web_pages() const { return dir / "web_pages.json"; }
    std::filesystem::path profanity() const { return dir / "profanity_dryrun.txt"; }

    void validate() const {
        for (const auto& p : {kg_graph(), wordnet(), super_entities(), llm_lookup(),
                              search_db(), web_pages()})
            if (!std::filesystem::exists(p))
                throw ConfigError("missing dry-run fixture " + p.string());
    }
};

// The config a dry run executes under; exposed so tests can tweak knobs.
inline PipelineConfig dry_run_config(const std::filesystem::path& work_dir,
                                     const DryRunFixtures& fixtures, uint64_t seed) {
    PipelineConfig cfg;
    cfg.work_dir = work_dir;
    cfg.seed = seed;
    cfg.fixed_timestamps = true;
    cfg.kg.super_entities_file = fixtures.super_entities().string();
    cfg.kg.min_sitelinks = 5;
    cfg.kg.page_size = 50;  // exercises paging on the small fixture graph
    cfg.kg.wordnet_file = fixtures.wordnet().string();
    cfg.kg.wordnet_root = "wn:living";
    cfg.kg.wordnet_prune = {"wn:microbe"};
    if (std::filesystem::exists(fixtures.profanity()))
        cfg.kg.profanity_file = fixtures.profanity().string();
    cfg.kg.retry_backoff_ms = 20;
    cfg.llm.lookup_file = fixtures.llm_lookup().string();
    cfg.llm.popularity_cutoff = 25;
    cfg.llm.retry_backoff_ms = 20;
    cfg.search.qps = 500.0;
    cfg.search.use_google_for_living = true;  // both engines get exercised
    cfg.search.retry_backoff_ms = 20;
    cfg.search.workers = 4;
    cfg.harvest.workers = 8;
    cfg.harvest.host_delay_ms = 2;
    cfg.shard.shard_size = 6;  // several shards even at fixture scale
    cfg.validate();
    return cfg;
}

// Synthesizes a small classification spec from the finished dataset: up to
// four images, two classes drawn from their lead entities.
inline json dry_run_eval_spec(const PipelineConfig& cfg,
                              const std::vector<DatasetRecord>& records) {
    std::vector<std::string> classes;
    std::vector<EvalItem> items;
    for (const auto& rec : records) {
        if (rec.excluded || rec.kg_texts.empty()) continue;
        const std::string& name = rec.kg_texts.front().name;
        size_t cls = classes.size();
        for (size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == name) cls = i;
        if (cls == classes.size()) {
            if (classes.size() >= 2) continue;
            classes.push_back(name);
        }
        items.push_back({(cfg.store_root() / rec.path).string(), cls});
        if (items.size() >= 4) break;
    }
    if (classes.empty()) throw ContractError("dry run produced no evaluable records");
    json spec{{"class_names", classes},
              {"prompt_templates",
               json::array({"a photo of a {}.", "a close-up photo of a {}."})}};
    json jitems = json::array();
    for (const auto& item : items)
        jitems.push_back({{"image", item.image_ref}, {"gold", item.gold}});
    spec["items"] = jitems;
    return spec;
}

// Runs every stage in order against the mocks and returns the summary that
// also lands in <work_dir>/dry_run_summary.json. Planted fixture failures
// surface in the counts, not the exit code; completion means success here.
inline StageSummary dry_run(const std::filesystem::path& work_dir,
                            const DryRunFixtures& fixtures, uint64_t seed = 42) {
    fixtures.validate();
    std::filesystem::create_directories(work_dir);

    MockWebServer web;
    web.load_config(read_json_file(fixtures.web_pages()));
    web.start();
    MockKgServer kg;
    kg.set_graph(MockKgGraph::from_json(read_json_file(fixtures.kg_graph())));
    kg.start();
    MockSearchServer search;
    search.start();
    {
        std::string db = detail::replace_all(
            read_json_file(fixtures.search_db()).dump(), "{web}", web.base_url());
        search.load_db(json::parse(db));
    }

    PipelineConfig cfg = dry_run_config(work_dir, fixtures, seed);
    cfg.kg.endpoint = kg.endpoint_url();
    cfg.search.google_endpoint = search.google_endpoint();
    cfg.search.bing_endpoint = search.bing_endpoint();

    HttplibTransport transport(10);
    json stages;
    stages["extract"] = stage_extract(cfg, transport).data;
    stages["classify"] = stage_classify(cfg, transport).data;
    stages["natural_types"] = stage_natural_types(cfg, transport).data;
    stages["attrs"] = stage_attrs(cfg, transport).data;
    stages["queries"] = stage_queries(cfg).data;
    StageSummary search_sum = stage_search(cfg, transport);
    stages["search"] = search_sum.data;
    StageSummary harvest_sum = stage_harvest(cfg, transport);
    stages["harvest"] = harvest_sum.data;
    stages["curate"] = stage_curate(cfg).data;
    stages["dedup"] = stage_dedup(cfg).data;
    StageSummary stats_sum = stage_stats(cfg);
    stages["stats"] = stats_sum.data["stats"];
    stages["shard"] = stage_shard(cfg).data;
    stages["sample"] = stage_sample(cfg, 2).data;

    auto records = ensure_dataset(cfg);
    json eval_spec = dry_run_eval_spec(cfg, records);
    std::filesystem::path spec_path = work_dir / "eval_spec.json";
    write_json_file(spec_path, eval_spec);
    stages["eval"] = stage_eval(cfg, spec_path).data;

    StageSummary summary;
    summary.data = {{"seed", seed}, {"stages", stages}};
    write_json_file(work_dir / "dry_run_summary.json", summary.data);
    return summary;
}

}  // namespace kgharvest
