// SPDX-License-Identifier: Apache-2.0
//
// Stage orchestration. Each stage reads its predecessor's manifest, writes
// its own, and returns a summary; a missing predecessor names the command
// that produces it. Everything flows through files under work_dir, so any
// stage can be re-run in isolation.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "kgharvest/attr_gen.hpp"
#include "kgharvest/config.hpp"
#include "kgharvest/curate.hpp"
#include "kgharvest/dataset_store.hpp"
#include "kgharvest/harvester.hpp"
#include "kgharvest/kg_extract.hpp"
#include "kgharvest/llm.hpp"
#include "kgharvest/query_build.hpp"
#include "kgharvest/search_client.hpp"
#include "kgharvest/text_sampler.hpp"
#include "kgharvest/zeroshot_eval.hpp"

namespace kgharvest {

struct StageSummary {
    int exit_code = 0;  // 0 ok, 2 partial failure
    json data;
};

namespace detail {

inline void require_stage_file(const std::filesystem::path& path,
                               const std::string& producer) {
    if (!std::filesystem::exists(path))
        throw ConfigError("missing " + path.string() + "; run `kgharvest " + producer +
                          "` first");
}

template <typename T>
std::vector<T> load_rows(const std::filesystem::path& path) {
    std::vector<T> out;
    for_each_jsonl(path, [&](const json& row) { out.push_back(T::from_json(row)); });
    return out;
}

template <typename T>
void save_rows(const std::filesystem::path& path, const std::vector<T>& rows) {
    std::vector<json> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.to_json());
    write_jsonl(path, out);
}

inline std::vector<SuperEntity> load_super_entities(const std::filesystem::path& path) {
    json j = read_json_file(path);
    const json& list = j.is_array() ? j : j.at("super_entities");
    std::vector<SuperEntity> out;
    for (const auto& row : list) out.push_back(SuperEntity::from_json(row));
    if (out.empty()) throw ConfigError("no super entities in " + path.string());
    return out;
}

inline std::map<std::string, Entity> entity_index(const std::vector<Entity>& entities) {
    std::map<std::string, Entity> out;
    for (const auto& e : entities) out[e.id] = e;
    return out;
}

inline std::map<std::string, NaturalType> natural_type_index(
    const std::filesystem::path& path) {
    std::map<std::string, NaturalType> out;
    if (!std::filesystem::exists(path)) return out;
    for_each_jsonl(path, [&](const json& row) {
        NaturalType nt = NaturalType::from_json(row);
        out[nt.entity_id] = nt;
    });
    return out;
}

inline std::map<std::string, SearchQuery> query_index(
    const std::filesystem::path& path) {
    std::map<std::string, SearchQuery> out;
    for_each_jsonl(path, [&](const json& row) {
        SearchQuery q = SearchQuery::from_json(row);
        out[q.id] = q;
    });
    return out;
}

}  // namespace detail

// Builds the configured LLM backend stack for one backend id: HTTP when an
// endpoint is configured, otherwise the canned lookup table, wrapped in the
// response cache either way.
inline std::shared_ptr<LlmBackend> make_llm_backend(const PipelineConfig& cfg,
                                                    const std::string& backend_id,
                                                    HttpTransport& transport) {
    std::shared_ptr<LlmBackend> inner;
    if (!cfg.llm.endpoint.empty()) {
        inner = std::make_shared<HttpLlmBackend>(backend_id, cfg.llm.endpoint, transport);
    } else if (!cfg.llm.lookup_file.empty()) {
        inner = std::make_shared<LookupLlmBackend>(backend_id,
                                                   read_json_file(cfg.llm.lookup_file));
    } else {
        throw ConfigError(
            "no LLM backend configured: set llm.endpoint or llm.lookup_file");
    }
    return std::make_shared<CachedLlmBackend>(inner,
                                              cfg.checkpoints_dir() / "llm_cache");
}

// ---------------------------------------------------------------------------

inline StageSummary stage_extract(const PipelineConfig& cfg, HttpTransport& transport) {
    auto supers = detail::load_super_entities(cfg.kg.super_entities_file);
    ExtractionConfig xcfg;
    xcfg.min_sitelinks = cfg.kg.min_sitelinks;
    // Lexicon-source roots exist for ancestor naming; only graph roots are
    // expanded through the SPARQL endpoint.
    for (const auto& se : supers)
        if (se.source == "wikidata") xcfg.super_entities.push_back(se);
    xcfg.endpoint_url = cfg.kg.endpoint;
    xcfg.page_size = cfg.kg.page_size;
    SparqlClient client(cfg.kg.endpoint, transport, cfg.kg_retry());
    ExtractionResult res = extract_entities(xcfg, client);

    size_t wordnet_count = 0;
    std::vector<Entity> merged = res.entities;
    if (!cfg.kg.wordnet_file.empty()) {
        WordnetConfig wcfg;
        wcfg.root_id = cfg.kg.wordnet_root;
        wcfg.prune_ids = cfg.kg.wordnet_prune;
        wcfg.sentinel_sitelinks = cfg.kg.min_sitelinks;
        auto wordnet = import_wordnet_living(read_jsonl(cfg.kg.wordnet_file), wcfg);
        wordnet_count = wordnet.size();
        merged = merge_catalogs(merged, wordnet);
    }

    std::vector<ProfanityRemoval> removals;
    if (!cfg.kg.profanity_file.empty()) {
        auto blocklist = load_word_list(cfg.kg.profanity_file);
        merged = apply_profanity_filter(merged, blocklist, &removals);
        std::vector<json> rows;
        for (const auto& r : removals)
            rows.push_back({{"entity_id", r.entity_id},
                            {"field", r.field},
                            {"token", r.token}});
        write_jsonl(cfg.reports_dir() / "profanity_removals.jsonl", rows);
    }

    detail::save_rows(cfg.entities_path(), merged);
    StageSummary s;
    s.data = {{"entities", merged.size()},
              {"wikidata_entities", res.entities.size()},
              {"wordnet_entities", wordnet_count},
              {"pages_fetched", res.pages_fetched},
              {"malformed_rows", res.malformed_rows},
              {"profanity_removals", removals.size()}};
    return s;
}

inline StageSummary stage_classify(const PipelineConfig& cfg, HttpTransport& transport) {
    detail::require_stage_file(cfg.entities_path(), "extract");
    auto entities = detail::load_rows<Entity>(cfg.entities_path());
    auto backend = make_llm_backend(cfg, cfg.llm.backends.front(), transport);
    VisualPartition part =
        classify_visual(entities, *backend,
                        cfg.checkpoints_dir() / "visual_verdicts.jsonl", cfg.llm_retry());
    detail::save_rows(cfg.visual_path(), part.visual);
    detail::save_rows(cfg.non_visual_path(), part.non_visual);
    detail::save_rows(cfg.reports_dir() / "visual_undecided.jsonl", part.undecided);
    StageSummary s;
    s.data = {{"visual", part.visual.size()},
              {"non_visual", part.non_visual.size()},
              {"undecided", part.undecided.size()}};
    return s;
}

inline StageSummary stage_natural_types(const PipelineConfig& cfg,
                                        HttpTransport& transport) {
    detail::require_stage_file(cfg.visual_path(), "classify");
    auto entities = detail::load_rows<Entity>(cfg.visual_path());
    auto supers = detail::load_super_entities(cfg.kg.super_entities_file);
    std::map<std::string, std::string> super_names;
    for (const auto& se : supers) super_names[se.id] = se.name;
    auto backend = make_llm_backend(cfg, cfg.llm.backends.front(), transport);

    AttrGenStats stats;
    std::vector<NaturalType> types;
    std::vector<json> skipped;
    for (const auto& e : entities) {
        std::vector<std::string> ancestors;
        for (const auto& sid : e.super_entities) {
            auto it = super_names.find(sid);
            if (it != super_names.end() &&
                std::find(ancestors.begin(), ancestors.end(), it->second) ==
                    ancestors.end())
                ancestors.push_back(it->second);
        }
        if (ancestors.empty()) {
            skipped.push_back({{"entity_id", e.id}, {"reason", "no_known_ancestors"}});
            continue;
        }
        types.push_back(select_natural_type(e, ancestors, *backend, cfg.llm_retry(),
                                            &stats));
    }
    detail::save_rows(cfg.natural_types_path(), types);
    write_jsonl(cfg.reports_dir() / "natural_type_skipped.jsonl", skipped);
    StageSummary s;
    s.data = {{"typed", types.size()},
              {"skipped", skipped.size()},
              {"fallbacks", stats.natural_type_fallbacks}};
    return s;
}

inline StageSummary stage_attrs(const PipelineConfig& cfg, HttpTransport& transport) {
    detail::require_stage_file(cfg.visual_path(), "classify");
    auto entities = detail::load_rows<Entity>(cfg.visual_path());
    auto ntypes = detail::natural_type_index(cfg.natural_types_path());
    std::vector<std::shared_ptr<LlmBackend>> backends;
    for (const auto& id : cfg.llm.backends)
        backends.push_back(make_llm_backend(cfg, id, transport));

    AttrGenStats stats;
    std::vector<Attribute> all;
    std::vector<AttributeCategory> categories(all_categories().begin(),
                                              all_categories().end());
    for (const auto& e : entities) {
        std::optional<std::string> nt;
        auto it = ntypes.find(e.id);
        if (it != ntypes.end()) nt = it->second.type_name;
        auto attrs = generate_attributes(e, categories, backends,
                                         cfg.llm.popularity_cutoff, nt, cfg.llm_retry(),
                                         &stats);
        all.insert(all.end(), attrs.begin(), attrs.end());
    }
    detail::save_rows(cfg.attributes_path(), all);
    StageSummary s;
    s.data = {{"entities", entities.size()},
              {"attributes", all.size()},
              {"gated_entities", stats.gated_entities},
              {"backend_failures", stats.backend_failures},
              {"rejected_items", stats.rejected_items}};
    return s;
}

inline StageSummary stage_queries(const PipelineConfig& cfg) {
    detail::require_stage_file(cfg.visual_path(), "classify");
    detail::require_stage_file(cfg.attributes_path(), "attrs");
    auto entities = detail::load_rows<Entity>(cfg.visual_path());
    auto attrs = detail::load_rows<Attribute>(cfg.attributes_path());
    auto ntype_map = detail::natural_type_index(cfg.natural_types_path());
    std::unordered_map<std::string, NaturalType> ntypes(ntype_map.begin(),
                                                        ntype_map.end());
    auto index = detail::entity_index(entities);
    std::unordered_map<std::string, const Entity*> by_id;
    for (const auto& [id, e] : index) by_id.emplace(id, &e);

    std::vector<SearchQuery> queries;
    for (const auto& e : entities) {
        auto qs = entity_queries(e);
        queries.insert(queries.end(), qs.begin(), qs.end());
    }
    auto aq = attribute_queries(attrs, by_id);
    queries.insert(queries.end(), aq.begin(), aq.end());
    NaturalTypeQueryStats nt_stats;
    auto nq = natural_type_queries(attrs, ntypes, by_id, &nt_stats);
    queries.insert(queries.end(), nq.begin(), nq.end());
    queries = dedupe_queries(queries);

    size_t excluded = 0;
    if (!cfg.search.benchmark_terms_file.empty()) {
        auto terms = load_word_list(cfg.search.benchmark_terms_file);
        std::vector<json> removals;
        size_t before = queries.size();
        queries = exclude_benchmark_terms(queries, terms, &removals);
        excluded = before - queries.size();
        write_jsonl(cfg.reports_dir() / "benchmark_removals.jsonl", removals);
        write_jsonl(cfg.reports_dir() / "benchmark_entities.jsonl",
                    benchmark_entity_matches(entities, terms));
    }

    detail::save_rows(cfg.queries_path(), queries);
    std::map<std::string, size_t> by_kind;
    for (const auto& q : queries) ++by_kind[to_string(q.kind)];
    StageSummary s;
    s.data = {{"queries", queries.size()},
              {"by_kind", by_kind},
              {"merged_duplicates", nt_stats.merged_duplicates},
              {"benchmark_excluded", excluded}};
    return s;
}

inline StageSummary stage_search(const PipelineConfig& cfg, HttpTransport& transport) {
    detail::require_stage_file(cfg.queries_path(), "queries");
    std::vector<SearchQuery> queries;
    for_each_jsonl(cfg.queries_path(),
                   [&](const json& row) { queries.push_back(SearchQuery::from_json(row)); });

    std::map<std::string, Entity> index;
    if (std::filesystem::exists(cfg.visual_path()))
        index = detail::entity_index(detail::load_rows<Entity>(cfg.visual_path()));
    auto ntypes = detail::natural_type_index(cfg.natural_types_path());

    DispatchConfig dcfg;
    dcfg.engine_default = cfg.search.engine_default;
    dcfg.use_google_for_living = cfg.search.use_google_for_living;
    dcfg.google_endpoint = cfg.search.google_endpoint;
    dcfg.bing_endpoint = cfg.search.bing_endpoint;
    dcfg.qps = cfg.search.qps;
    dcfg.retry = cfg.search_retry();
    dcfg.workers = cfg.search.workers;
    if (cfg.search.budget_cap_dollars)
        dcfg.budget_cap_micro = llround(*cfg.search.budget_cap_dollars * 1e6);

    CostLedger ledger;
    CheckpointStore checkpoint(cfg.checkpoints_dir() / "search.jsonl",
                               cfg.fixed_timestamps);
    auto context_for = [&](const SearchQuery& q) {
        QueryContext ctx;
        auto eit = index.find(q.entity_id);
        if (eit != index.end()) ctx.entity = &eit->second;
        auto nit = ntypes.find(q.entity_id);
        if (nit != ntypes.end()) ctx.natural_type = nit->second.type_name;
        return ctx;
    };
    DispatchOutcome outcome = dispatch_search(queries, context_for, transport, dcfg,
                                              ledger, checkpoint,
                                              SearchCredentials::from_env());

    // Queries the checkpoint marked done were skipped above, so their rows
    // exist only in the previous results file. Keep those, replace the rest.
    std::vector<SearchResult> merged = std::move(outcome.results);
    if (outcome.queries_skipped > 0 && std::filesystem::exists(cfg.results_path())) {
        std::unordered_set<std::string> current, fresh;
        for (const auto& q : queries) current.insert(q.id);
        for (const auto& r : merged) fresh.insert(r.query_id);
        for_each_jsonl(cfg.results_path(), [&](const json& row) {
            auto r = SearchResult::from_json(row);
            if (current.count(r.query_id) && !fresh.count(r.query_id))
                merged.push_back(std::move(r));
        });
        std::sort(merged.begin(), merged.end(),
                  [](const SearchResult& a, const SearchResult& b) {
                      if (a.query_id != b.query_id) return a.query_id < b.query_id;
                      if (a.raw_rank != b.raw_rank) return a.raw_rank < b.raw_rank;
                      return a.image_url < b.image_url;
                  });
    }

    std::vector<json> rows;
    for (const auto& r : merged) rows.push_back(r.to_json());
    write_jsonl(cfg.results_path(), rows);
    StageSummary s;
    s.exit_code = outcome.queries_failed > 0 ? 2 : 0;
    s.data = {{"results", merged.size()},
              {"queries_done", outcome.queries_done},
              {"queries_skipped", outcome.queries_skipped},
              {"queries_failed", outcome.queries_failed},
              {"budget_exhausted", outcome.budget_exhausted},
              {"engine_disabled", outcome.engine_disabled},
              {"run_cost", ledger.total_formatted()},
              {"google_calls", ledger.google_calls()},
              {"bing_calls", ledger.bing_calls()}};
    return s;
}

inline StageSummary stage_harvest(const PipelineConfig& cfg, HttpTransport& transport) {
    detail::require_stage_file(cfg.results_path(), "search");
    std::vector<SearchResult> results;
    for_each_jsonl(cfg.results_path(),
                   [&](const json& row) { results.push_back(SearchResult::from_json(row)); });

    HarvestConfig hcfg;
    hcfg.store_root = cfg.store_root();
    hcfg.workers = cfg.harvest.workers;
    hcfg.host_delay = std::chrono::milliseconds(cfg.harvest.host_delay_ms);
    hcfg.fixed_timestamps = cfg.fixed_timestamps;
    hcfg.use_engine_snippets = cfg.harvest.use_engine_snippets;
    HarvestCheckpoint checkpoint(cfg.checkpoints_dir() / "harvest.jsonl",
                                 cfg.fixed_timestamps);
    HarvestOutcome out = harvest(results, hcfg, transport, checkpoint);

    detail::save_rows(cfg.images_path(), out.records);
    write_jsonl(cfg.reports_dir() / "harvest_failures.jsonl", out.failures);
    write_jsonl(cfg.reports_dir() / "harvest_quarantined.jsonl", out.quarantined);
    write_jsonl(cfg.reports_dir() / "harvest_alt_failures.jsonl", out.alt_failures);
    StageSummary s;
    s.exit_code = out.failures.empty() ? 0 : 2;
    s.data = {{"inputs", out.inputs},
              {"records", out.records.size()},
              {"failures", out.failures.size()},
              {"quarantined", out.quarantined.size()},
              {"alt_failures", out.alt_failures.size()},
              {"network_calls", out.network_calls}};
    return s;
}

inline StageSummary stage_curate(const PipelineConfig& cfg) {
    detail::require_stage_file(cfg.images_path(), "harvest");
    auto records = detail::load_rows<ImageRecord>(cfg.images_path());
    FilterReport report;
    auto kept = apply_filters(records, &report);
    detail::save_rows(cfg.curated_path(), kept);
    write_jsonl(cfg.reports_dir() / "curate_report.jsonl", report.rows);
    StageSummary s;
    s.data = {{"input", records.size()},
              {"kept", kept.size()},
              {"images_dropped", report.images_dropped},
              {"texts_dropped", report.texts_dropped}};
    return s;
}

// Builds a descriptor set for a directory of images (file stem = id).
inline DescriptorSet directory_descriptors(const std::filesystem::path& dir,
                                           const DescriptorBackend& backend) {
    DescriptorSet set;
    set.backend_id = backend.id();
    set.dim = backend.dim();
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        auto gray = decode_gray(bytes);
        if (gray) set.vectors[file.stem().string()] = backend.compute(*gray);
    }
    return set;
}

inline StageSummary stage_dedup(const PipelineConfig& cfg) {
    detail::require_stage_file(cfg.curated_path(), "curate");
    auto records = detail::load_rows<ImageRecord>(cfg.curated_path());

    GrayscaleDescriptor backend;
    DescriptorFailures desc_failures;
    DescriptorSet descriptors =
        compute_descriptors(records, cfg.store_root(), backend, cfg.curate.workers,
                            cfg.descriptor_cache_path(), &desc_failures);
    auto clusters = cluster_duplicates(descriptors, records, cfg.curate.dedup_threshold);
    std::vector<json> removed;
    auto deduped = apply_dedup(records, clusters, &removed);

    size_t leak_count = 0;
    if (!cfg.curate.eval_leak_dir.empty()) {
        DescriptorSet eval_set = directory_descriptors(cfg.curate.eval_leak_dir, backend);
        DescriptorSet survivors;
        survivors.backend_id = descriptors.backend_id;
        survivors.dim = descriptors.dim;
        for (const auto& rec : deduped) {
            auto it = descriptors.vectors.find(rec.id);
            if (it != descriptors.vectors.end()) survivors.vectors[rec.id] = it->second;
        }
        auto hits = detect_eval_leaks(survivors, eval_set, cfg.curate.leak_threshold);
        mark_eval_leaks(deduped, hits);
        std::vector<json> leak_rows;
        for (const auto& h : hits)
            leak_rows.push_back({{"dataset_id", h.dataset_id},
                                 {"eval_id", h.eval_id},
                                 {"similarity", h.similarity}});
        write_jsonl(cfg.reports_dir() / "eval_leaks.jsonl", leak_rows);
        std::set<std::string> leaked;
        for (const auto& h : hits) leaked.insert(h.dataset_id);
        leak_count = leaked.size();
    }

    detail::save_rows(cfg.deduped_path(), deduped);
    write_jsonl(cfg.reports_dir() / "dedup_removed.jsonl", removed);
    write_jsonl(cfg.reports_dir() / "descriptor_failures.jsonl", desc_failures.rows);
    size_t multi = 0;
    for (const auto& c : clusters)
        if (c.member_ids.size() > 1) ++multi;
    StageSummary s;
    s.data = {{"input", records.size()},
              {"retained", deduped.size()},
              {"clusters", clusters.size()},
              {"merged_clusters", multi},
              {"descriptor_failures", desc_failures.rows.size()},
              {"eval_leaks", leak_count}};
    return s;
}

// dataset.jsonl derives from deduped.jsonl plus the catalogs; built on
// demand by stats/shard/sample so each stays independently re-runnable.
inline std::vector<DatasetRecord> ensure_dataset(const PipelineConfig& cfg) {
    if (std::filesystem::exists(cfg.dataset_path()))
        return detail::load_rows<DatasetRecord>(cfg.dataset_path());
    detail::require_stage_file(cfg.deduped_path(), "dedup");
    detail::require_stage_file(cfg.queries_path(), "queries");
    detail::require_stage_file(cfg.entities_path(), "extract");
    auto images = detail::load_rows<ImageRecord>(cfg.deduped_path());
    auto queries = detail::query_index(cfg.queries_path());
    auto entities = detail::entity_index(detail::load_rows<Entity>(cfg.entities_path()));
    auto ntypes = detail::natural_type_index(cfg.natural_types_path());
    std::vector<json> problems;
    auto records = build_dataset_records(images, queries, entities, ntypes, &problems);
    detail::save_rows(cfg.dataset_path(), records);
    write_jsonl(cfg.reports_dir() / "dataset_problems.jsonl", problems);
    return records;
}

inline StageSummary stage_stats(const PipelineConfig& cfg) {
    auto records = ensure_dataset(cfg);
    auto queries = detail::query_index(cfg.queries_path());
    ManifestStats stats = compute_stats(records, queries);
    std::string text = stats_to_text(stats);
    detail::write_file_atomic(cfg.stats_text_path(), text);
    write_json_file(cfg.stats_json_path(), stats_to_json(stats));
    StageSummary s;
    s.data = {{"table", text}, {"stats", stats_to_json(stats)}};
    return s;
}

inline StageSummary stage_shard(const PipelineConfig& cfg) {
    auto records = ensure_dataset(cfg);
    ShardWriteResult res = write_shards(records, cfg.store_root(), cfg.shards_dir(),
                                        cfg.shard.shard_size, cfg.shard.workers);
    StageSummary s;
    s.exit_code = res.skipped.empty() ? 0 : 2;
    s.data = {{"shards", res.shard_files.size()},
              {"records_written", res.records_written},
              {"skipped", res.skipped.size()}};
    return s;
}

inline StageSummary stage_sample(const PipelineConfig& cfg, size_t draws_per_record) {
    auto records = ensure_dataset(cfg);
    uint64_t stage_seed = derive_seed(cfg.seed, "sample");
    std::vector<json> rows;
    size_t skipped = 0;
    for (const auto& rec : records) {
        if (rec.excluded) continue;
        if (rec.search_queries.empty()) {
            ++skipped;
            continue;
        }
        // Per-record seeding keeps draws independent of manifest order.
        std::mt19937_64 rng(derive_seed(stage_seed, rec.id));
        for (size_t d = 0; d < draws_per_record; ++d)
            rows.push_back(
                {{"id", rec.id}, {"label", sample_record_label(rec, cfg.sampler, rng)}});
    }
    write_jsonl(cfg.samples_path(), rows);
    StageSummary s;
    s.data = {{"records", records.size()},
              {"labels", rows.size()},
              {"skipped_no_query", skipped}};
    return s;
}

inline StageSummary stage_eval(const PipelineConfig& cfg,
                               const std::filesystem::path& spec_path) {
    if (spec_path.empty()) throw ConfigError("eval needs a spec file (--spec)");
    json spec_json = read_json_file(spec_path);
    SimpleEncoder encoder;
    json report;

    auto load_spec = [&](json node) {
        if (node.contains("template_file"))
            node["prompt_templates"] =
                load_templates(node.at("template_file").get<std::string>());
        return EvalSpec::from_json(node);
    };

    if (spec_json.contains("class_names")) {
        EvalSpec spec = load_spec(spec_json);
        report["classification"] =
            best_of_protocols(spec, encoder, cfg.eval.normalize_first).to_json();
    }
    if (spec_json.contains("variants")) {
        std::vector<EvalSpec> variants;
        for (const auto& v : spec_json["variants"]) variants.push_back(load_spec(v));
        report["multi_name"] =
            multi_name_best(variants, encoder, cfg.eval.normalize_first).to_json();
    }
    if (spec_json.contains("retrieval")) {
        RetrievalSpec rspec;
        for (const auto& p : spec_json["retrieval"].at("pairs"))
            rspec.pairs.push_back({p.at("image").get<std::string>(),
                                   p.at("texts").get<std::vector<std::string>>()});
        report["retrieval"] = retrieval_recall1(rspec, encoder).to_json();
    }
    if (report.empty())
        throw ConfigError("eval spec " + spec_path.string() +
                          " defines no classification, variants, or retrieval section");
    write_json_file(cfg.eval_report_path(), report);
    StageSummary s;
    s.data = report;
    return s;
}

}  // namespace kgharvest
