// SPDX-License-Identifier: Apache-2.0
//
// kgharvest: build image-text training datasets by walking a knowledge
// graph, generating search queries, and harvesting the results.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "kgharvest/dry_run.hpp"
#include "kgharvest/pipeline.hpp"

namespace {

using namespace kgharvest;

// Fixture directory fallback: next to the binary's source tree when the
// working directory has no data/.
std::filesystem::path resolve_data_dir(const std::filesystem::path& requested) {
    if (std::filesystem::exists(requested)) return requested;
#ifdef KGH_SOURCE_DIR
    std::filesystem::path fallback = std::filesystem::path(KGH_SOURCE_DIR) / requested;
    if (std::filesystem::exists(fallback)) return fallback;
#endif
    return requested;
}

void print_summary(const StageSummary& s) { std::cout << s.data.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kgharvest: knowledge-graph driven image-text dataset pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string work_override;
    app.add_option("-c,--config", config_path, "pipeline config file (JSON, comments ok)");
    app.add_option("-w,--work", work_override, "override the work directory");

    auto* c_extract = app.add_subcommand("extract", "pull entities from the knowledge graph");
    auto* c_classify = app.add_subcommand("classify", "split entities into visual / non-visual");
    auto* c_ntypes = app.add_subcommand("natural-types", "pick a natural type per entity");
    auto* c_attrs = app.add_subcommand("attrs", "generate visual attributes per entity");
    auto* c_queries = app.add_subcommand("queries", "build the search query catalog");
    auto* c_search = app.add_subcommand("search", "dispatch image-search API calls");
    auto* c_harvest = app.add_subcommand("harvest", "download images and collect alt texts");
    auto* c_curate = app.add_subcommand("curate", "apply text/image filters");
    auto* c_dedup = app.add_subcommand("dedup", "deduplicate images and scan for eval leaks");
    auto* c_stats = app.add_subcommand("stats", "compute the dataset summary table");
    auto* c_shard = app.add_subcommand("shard", "write tar shards plus index");
    auto* c_sample = app.add_subcommand("sample", "draw training text labels");
    auto* c_eval = app.add_subcommand("eval", "zero-shot classification / retrieval harness");
    auto* c_dry = app.add_subcommand("dry-run", "full pipeline against bundled mock services");

    size_t sample_draws = 1;
    c_sample->add_option("-n,--draws", sample_draws, "labels to draw per record");

    std::string eval_spec;
    c_eval->add_option("--spec", eval_spec, "eval spec JSON file")->required();

    std::string dry_out = "dryrun-out";
    std::string dry_fixtures = "data/fixtures";
    uint64_t dry_seed = 42;
    c_dry->add_option("-o,--out", dry_out, "output directory for the dry run");
    c_dry->add_option("--fixtures", dry_fixtures, "fixture directory");
    c_dry->add_option("--seed", dry_seed, "pipeline seed");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        if (!work_override.empty()) cfg.work_dir = work_override;

        HttplibTransport transport(30);
        StageSummary summary;

        if (c_extract->parsed()) summary = stage_extract(cfg, transport);
        else if (c_classify->parsed()) summary = stage_classify(cfg, transport);
        else if (c_ntypes->parsed()) summary = stage_natural_types(cfg, transport);
        else if (c_attrs->parsed()) summary = stage_attrs(cfg, transport);
        else if (c_queries->parsed()) summary = stage_queries(cfg);
        else if (c_search->parsed()) summary = stage_search(cfg, transport);
        else if (c_harvest->parsed()) summary = stage_harvest(cfg, transport);
        else if (c_curate->parsed()) summary = stage_curate(cfg);
        else if (c_dedup->parsed()) summary = stage_dedup(cfg);
        else if (c_stats->parsed()) summary = stage_stats(cfg);
        else if (c_shard->parsed()) summary = stage_shard(cfg);
        else if (c_sample->parsed()) summary = stage_sample(cfg, sample_draws);
        else if (c_eval->parsed()) summary = stage_eval(cfg, eval_spec);
        else if (c_dry->parsed()) {
            DryRunFixtures fixtures{resolve_data_dir(dry_fixtures)};
            summary = dry_run(dry_out, fixtures, dry_seed);
        }

        print_summary(summary);
        return summary.exit_code;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FatalError& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 3;
    }
}
