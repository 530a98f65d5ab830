// ariapipe command-line driver.
#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>

#include "ariapipe/pipeline.hpp"

namespace ap = ariapipe::pipeline;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFatal = 4;

void init_logging() {
    auto logger = spdlog::stderr_color_mt("ariapipe");
    logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("ARIAPIPE_LOG")) {
        const auto level = spdlog::level::from_str(env);
        // from_str maps unknown names to off; only "off" itself should silence.
        if (level != spdlog::level::off || std::string_view(env) == "off") {
            spdlog::set_level(level);
        } else {
            spdlog::warn("ignoring unknown ARIAPIPE_LOG level '{}'", env);
        }
    }
}

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::string> format;
    bool disjoint_views = false;
    std::string input;
    std::string output;
    std::string catalog;
};

ap::PipelineConfig resolve_config(const Overrides& o) {
    ap::PipelineConfig c = o.config.empty() ? ap::PipelineConfig{} : ap::PipelineConfig::load(o.config);
    if (!o.input.empty()) c.input_dir = o.input;
    if (!o.output.empty()) c.output_dir = o.output;
    if (!o.catalog.empty()) c.catalog_path = std::filesystem::path(o.catalog);
    if (o.seed) c.seed = *o.seed;
    if (o.workers) c.workers = *o.workers;
    if (o.format) c.format = *ariapipe::shard::format_from_name(*o.format);
    if (o.disjoint_views) c.disjoint_views = true;
    c.augment.seed = c.seed;
    return c;
}

int report(const ap::StageResult& r) {
    std::cout << ap::to_json(r).dump() << '\n';
    spdlog::info("{}: {} in, {} out, {} records, {} errors", r.stage, r.files_in, r.files_out, r.records,
                 r.errors.size());
    return r.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
    init_logging();

    CLI::App app{"ariapipe: symbolic music dataset pipeline"};
    app.require_subcommand(1);
    Overrides o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Master seed");
        sub->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--format", o.format, "Shard format")->check(CLI::IsMember({"text", "binary"}));
        sub->add_option("--input", o.input, "Input MIDI directory");
        sub->add_option("--output", o.output, "Output directory");
        sub->add_option("--catalog", o.catalog, "Catalog TSV (source_id, composer, opus, piece)");
    };

    auto* scan = app.add_subcommand("scan", "Parse MIDI files, record note counts and failures");
    auto* filter = app.add_subcommand("filter", "Apply quality filters and opus deduplication");
    auto* tokenize = app.add_subcommand("tokenize", "Tokenize kept files into a shard");
    auto* pack = app.add_subcommand("pack", "Build pretraining or finetuning sequences");
    auto* views = app.add_subcommand("views", "Draw augmented contrastive view pairs");
    auto* stats = app.add_subcommand("stats", "Summarize shards into stats.json");
    auto* all = app.add_subcommand("all", "Run every stage in order");
    auto* ntx = app.add_subcommand("nt-xent", "NT-Xent loss and gradient check over slice embeddings");
    for (auto* s : {scan, filter, tokenize, pack, views, stats, all}) add_common(s);
    views->add_flag("--disjoint-views", o.disjoint_views, "Forbid overlap between the two slices");
    all->add_flag("--disjoint-views", o.disjoint_views, "Forbid overlap between the two slices");

    std::string mode = "pretrain";
    pack->add_option("--mode", mode, "pretrain or finetune")->check(CLI::IsMember({"pretrain", "finetune"}));

    std::string embeddings;
    double tau = 0.1;
    bool no_grad_check = false;
    std::string pooled_out;
    ntx->add_option("--embeddings", embeddings, "JSONL slice embeddings")->required();
    ntx->add_option("--tau", tau, "Temperature")->check(CLI::PositiveNumber);
    ntx->add_flag("--no-grad-check", no_grad_check, "Skip the finite-difference check");
    ntx->add_option("--pooled-out", pooled_out, "Write mean-pooled file embeddings here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (ntx->parsed()) {
            const auto r = ap::run_ntxent(embeddings, tau, !no_grad_check,
                                          pooled_out.empty() ? std::nullopt
                                                             : std::optional<std::filesystem::path>(pooled_out));
            std::cout << ap::to_json(r).dump() << '\n';
            if (!no_grad_check && !r.grad_check_passed) {
                spdlog::error("gradient check failed: relative error {:.3e}", r.grad_check.max_rel_error);
                return 1;
            }
            return 0;
        }

        ap::PipelineConfig config;
        try {
            config = resolve_config(o);
            config.validate(!stats->parsed() && !pack->parsed());
        } catch (const std::invalid_argument& e) {
            spdlog::error("invalid configuration: {}", e.what());
            return kExitUsage;
        }

        if (scan->parsed()) return report(ap::run_scan(config));
        if (filter->parsed()) return report(ap::run_filter(config));
        if (tokenize->parsed()) return report(ap::run_tokenize(config));
        if (pack->parsed()) {
            return report(ap::run_pack(config, mode == "pretrain" ? ap::PackMode::Pretrain : ap::PackMode::Finetune));
        }
        if (views->parsed()) return report(ap::run_views(config));
        if (stats->parsed()) return report(ap::run_stats(config));
        int code = 0;
        for (const auto& r : ap::run_all(config)) code = std::max(code, report(r));
        return code;
    } catch (const ap::MissingInput& e) {
        spdlog::error("{}", e.what());
        return kExitFatal;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitFatal;
    }
}
