#include "vulbin/app/config.hpp"
#include "vulbin/app/pipeline.hpp"
#include "vulbin/common/error.hpp"
#include "vulbin/memory/queue.hpp"
#include "vulbin/reasoner/knowledge.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace vulbin;

namespace {

struct Overrides {
    std::string config;
    std::string output;
    std::optional<unsigned> workers;
    std::optional<std::uint64_t> seed;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--output", o.output, "output directory (overrides output_dir)");
    cmd->add_option("--workers", o.workers, "concurrent function analyses")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", o.seed, "distractor sampling seed");
}

app::RunConfig resolve(const Overrides& o) {
    app::RunConfig cfg = o.config.empty() ? app::parse_config("{}", fs::current_path()) : app::load_config(o.config);
    if (!o.output.empty()) cfg.output_dir = fs::absolute(o.output);
    if (o.workers) cfg.workers = *o.workers;
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    return cfg;
}

int queue_status(const fs::path& store) {
    std::error_code ec;
    if (!fs::is_regular_file(store, ec)) throw Error(ErrorCode::StoreError, store.string() + ": no such store");
    memory::AnalysisQueue queue(store, {});
    auto cov = queue.coverage_report();
    std::cout << "done=" << cov.done << " failed=" << cov.failed << " skipped=" << cov.skipped
              << " pending=" << cov.pending << " in_flight=" << cov.in_flight << " total=" << cov.total() << "\n";
    for (const auto& [id, err] : cov.failures) std::cout << "failed " << id << ": " << err << "\n";
    return 0;
}

int kb_build(const fs::path& dir) {
    auto kb = reasoner::KnowledgeBase::load_dir(dir, true);
    for (const auto& id : kb.ids()) std::cout << id << " " << kb.at(id).name << "\n";
    std::cout << kb.ids().size() << " documents valid\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Vulnerability detection for stripped binaries"};
    app.require_subcommand(1);
    Overrides o;
    std::string binary, corpus, manifest, baseline, store, kb_dir;

    auto* analyze = app.add_subcommand("analyze", "full pipeline: report.json, report.md, store");
    analyze->add_option("binary", binary)->required();
    add_run_flags(analyze, o);

    auto* enhance = app.add_subcommand("enhance", "decompile and rewrite only; writes enhanced/");
    enhance->add_option("binary", binary)->required();
    add_run_flags(enhance, o);

    auto* eval = app.add_subcommand("eval", "analyze a labelled corpus and score it");
    eval->add_option("corpus_dir", corpus)->required();
    eval->add_option("manifest", manifest)->required();
    eval->add_option("--baseline", baseline, "baseline tool metrics JSON");
    add_run_flags(eval, o);

    auto* queue = app.add_subcommand("queue", "inspect an analysis store");
    queue->require_subcommand(1);
    auto* status = queue->add_subcommand("status", "print coverage counts");
    status->add_option("store", store)->required();

    auto* kb = app.add_subcommand("kb", "knowledge documents");
    kb->require_subcommand(1);
    auto* build = kb->add_subcommand("build", "validate a knowledge directory");
    build->add_option("dir", kb_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*status) return queue_status(store);
        if (*build) return kb_build(kb_dir);
        auto cfg = resolve(o);
        app::RunLog log(cfg.output_dir / "run.log");
        if (*enhance) {
            auto r = app::run_enhance(binary, cfg, log);
            std::cout << r.enhanced.size() << " functions enhanced into " << (cfg.output_dir / "enhanced").string() << "\n";
            return 0;
        }
        if (*analyze) {
            auto r = app::run_analyze(binary, cfg, log);
            const auto& cov = r.report.coverage;
            std::cout << "done=" << cov.done << " failed=" << cov.failed << " skipped=" << cov.skipped << "\n";
            for (const auto& cwe : r.report.target_cwes) std::cout << cwe << ": " << r.report.per_cwe.at(cwe) << "\n";
            for (const auto& [id, err] : cov.failures) std::cerr << "failed " << id << ": " << err << "\n";
            return r.exit_code;
        }
        if (*eval) {
            int rc = app::run_eval(corpus, manifest, cfg, log, baseline);
            std::cout << "report written to " << (cfg.output_dir / "report.md").string() << "\n";
            return rc;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
