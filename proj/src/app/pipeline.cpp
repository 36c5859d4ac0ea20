#include "vulbin/app/pipeline.hpp"

#include "vulbin/common/text.hpp"
#include "vulbin/eval/eval.hpp"
#include "vulbin/ingest/binary.hpp"
#include "vulbin/memory/queue.hpp"
#include "vulbin/reasoner/classifier.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <exception>
#include <iostream>
#include <thread>

namespace vulbin::app {

RunLog::RunLog(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::app);
}

void RunLog::event(std::string_view stage, std::string_view message, double ms) {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["message"] = message;
    if (ms >= 0) j["ms"] = ms;
    std::lock_guard lock(mu_);
    out_ << j.dump() << "\n";
    out_.flush();
}

void RunLog::warn(std::string_view stage, std::string_view message) {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["level"] = "warning";
    j["message"] = message;
    std::lock_guard lock(mu_);
    out_ << j.dump() << "\n";
    out_.flush();
}

StageTimer::StageTimer(RunLog& log, std::string stage)
    : log_(log), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}

StageTimer::~StageTimer() {
    auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    log_.event(stage_, "finished", ms);
}

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min<std::size_t>(std::max(1u, workers), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

namespace {

std::string annotation_hints(const reasoner::KnowledgeBase& kb) {
    std::vector<std::string> names;
    for (const auto& id : kb.ids()) names.push_back(id + " " + kb.at(id).name);
    if (names.empty()) return {};
    return "Known weakness classes: " + text::join(names, "; ") + ".";
}

reasoner::KnowledgeBase load_kb(const RunConfig& cfg) {
    auto kb = reasoner::KnowledgeBase::load_dir(cfg.reasoner.kb_dir, false);
    std::vector<std::string> needed = cfg.reasoner.target_cwes;
    if (cfg.reasoner.k_distractors > 0) {
        needed.insert(needed.end(), reasoner::kDistractorPool.begin(), reasoner::kDistractorPool.end());
    }
    auto gaps = kb.missing(needed);
    if (!gaps.empty()) {
        throw Error(ErrorCode::KnowledgeError, cfg.reasoner.kb_dir.string() + ": no document for " + text::join(gaps, ", "));
    }
    return kb;
}

EnhanceResult enhance_stage(const std::filesystem::path& binary, const RunConfig& cfg, RunLog& log,
                            llm::LlmClient& client, const reasoner::KnowledgeBase& kb) {
    EnhanceResult result;
    ingest::BinaryArtifact artifact;
    {
        StageTimer t(log, "ingest");
        artifact = ingest::load_binary(binary);
        if (artifact.unknown_format) {
            throw Error(ErrorCode::UnknownFormat, binary.string() + ": not an ELF, PE or Mach-O file");
        }
        log.event("ingest", binary.filename().string() + " " + std::string(ingest::to_string(artifact.format)) + " " +
                                artifact.arch.name() + (artifact.stripped ? " stripped" : " with symbols"));
    }
    result.artifact_hash = artifact.content_hash;
    decomp::Decompilation dec;
    {
        StageTimer t(log, "decompile");
        dec = decomp::decompile(artifact, cfg.decompiler, cfg.output_dir / "decompiler");
        log.event("decompile", std::to_string(dec.functions.size()) + " functions, " +
                                   std::to_string(dec.graph.edges().size()) + " call edges");
    }
    {
        StageTimer t(log, "enhance");
        std::vector<std::size_t> ok;
        for (std::size_t i = 0; i < dec.functions.size(); ++i) {
            if (dec.functions[i].status == decomp::FunctionStatus::ok) ok.push_back(i);
        }
        prominence::AgentOptions opts{annotation_hints(kb)};
        result.enhanced.resize(ok.size());
        parallel_for(ok.size(), cfg.workers, [&](std::size_t k) {
            result.enhanced[k] = prominence::enhance(dec.functions[ok[k]], client, opts);
        });
        prominence::unify_function_names(dec.functions, result.enhanced);
        for (const auto& e : result.enhanced) {
            for (const auto& w : e.warnings) log.warn("enhance", e.function_id + ": " + w);
            if (e.rejected) std::cerr << "warning: " << e.function_id << ": rewrite rejected, raw code kept\n";
            prominence::save_enhanced(cfg.output_dir, e);
        }
    }
    result.functions = std::move(dec.functions);
    result.graph = std::move(dec.graph);
    return result;
}

}  // namespace

EnhanceResult run_enhance(const std::filesystem::path& binary, const RunConfig& cfg, RunLog& log) {
    cfg.validate();
    auto kb = load_kb(cfg);
    auto client = llm::LlmClient::from_config(cfg.llm);
    return enhance_stage(binary, cfg, log, *client, kb);
}

AnalyzeResult run_analyze(const std::filesystem::path& binary, const RunConfig& cfg, RunLog& log) {
    cfg.validate();
    auto kb = load_kb(cfg);
    auto client = llm::LlmClient::from_config(cfg.llm);
    auto enhanced = enhance_stage(binary, cfg, log, *client, kb);
    const auto fingerprint = config_fingerprint(cfg);

    memory::QueueOptions qopts{cfg.memory.max_retries, cfg.memory.strict_order, cfg.memory.summary_token_cap};
    memory::AnalysisQueue queue(cfg.store_path(), qopts);
    if (queue.meta("artifact_hash") != enhanced.artifact_hash || queue.meta("config_fingerprint") != fingerprint) {
        queue.clear();
        queue.set_meta("artifact_hash", enhanced.artifact_hash);
        queue.set_meta("config_fingerprint", fingerprint);
    }
    std::set<std::string> skip;
    for (const auto& f : enhanced.functions) {
        if (f.status == decomp::FunctionStatus::skipped) skip.insert(f.function_id);
    }
    queue.enqueue_all(enhanced.graph, skip);

    std::map<std::string, reasoner::FunctionInput> inputs;
    {
        std::map<std::string, const decomp::RawFunction*> raw;
        for (const auto& f : enhanced.functions) raw.emplace(f.function_id, &f);
        for (const auto& e : enhanced.enhanced) {
            const auto* r = raw.at(e.function_id);
            auto renamed = e.rename_map.find(r->synthetic_name);
            inputs[e.function_id] = {e.function_id, renamed == e.rename_map.end() ? r->synthetic_name : renamed->second,
                                     e.code};
        }
    }

    reasoner::ReasonerOptions ropts;
    ropts.k_distractors = cfg.reasoner.k_distractors;
    ropts.seed = cfg.seed;
    ropts.summary_token_cap = cfg.memory.summary_token_cap;
    ropts.icl_shots = cfg.reasoner.icl_shots;
    reasoner::Classifier classifier(kb, *client, ropts);
    {
        StageTimer t(log, "classify");
        auto work = [&] {
            while (auto entry = queue.next()) {
                try {
                    auto it = inputs.find(entry->function_id);
                    if (it == inputs.end()) throw Error(ErrorCode::UnknownFunction, entry->function_id);
                    auto verdicts = classifier.classify(it->second, cfg.reasoner.target_cwes, &queue);
                    auto broken = std::find_if(verdicts.begin(), verdicts.end(),
                                               [](const reasoner::CweVerdict& v) { return v.transport_failure; });
                    if (broken != verdicts.end()) {
                        queue.fail(*entry, broken->rationale);
                        log.warn("classify", entry->function_id + ": " + broken->rationale);
                        continue;
                    }
                    auto record = classifier.summarize(it->second, verdicts, enhanced.graph.callees(entry->function_id));
                    queue.complete(*entry, std::move(record));
                } catch (const std::exception& e) {
                    queue.fail(*entry, e.what());
                    log.warn("classify", entry->function_id + ": " + e.what());
                }
            }
        };
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < std::max(1u, cfg.workers); ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }

    AnalyzeResult result;
    {
        StageTimer t(log, "report");
        reasoner::ReportInfo info{enhanced.artifact_hash, binary.filename().string(), cfg.reasoner.target_cwes,
                                  fingerprint, cfg.seed, cfg.llm.model_tag};
        result.report = reasoner::aggregate(queue, info);
        text::write_file(cfg.output_dir / "report.json", reasoner::report_json(result.report));
        text::write_file(cfg.output_dir / "report.md", reasoner::report_markdown(result.report));
    }
    const auto& cov = result.report.coverage;
    log.event("analyze", "done=" + std::to_string(cov.done) + " failed=" + std::to_string(cov.failed) +
                             " skipped=" + std::to_string(cov.skipped));
    result.exit_code = cov.failed > 0 ? 3 : 0;
    return result;
}

int run_eval(const std::filesystem::path& corpus_dir, const std::filesystem::path& manifest, const RunConfig& cfg,
             RunLog& log, const std::filesystem::path& baseline) {
    auto truth = eval::parse_manifest(text::read_file(manifest), corpus_dir);
    std::optional<eval::ToolMetrics> base;
    if (!baseline.empty()) base = eval::load_baseline(baseline);

    std::map<std::string, std::pair<std::filesystem::path, std::vector<std::string>>> cases;
    for (const auto& e : truth) {
        auto& c = cases[e.case_id];
        c.first = e.binary_path;
        c.second.push_back(e.cwe_id);
    }
    eval::CaseVerdicts verdicts;
    for (const auto& [case_id, c] : cases) {
        std::error_code ec;
        if (!std::filesystem::is_regular_file(c.first, ec)) {
            log.warn("eval", case_id + ": binary " + c.first.string() + " is missing");
            continue;
        }
        RunConfig case_cfg = cfg;
        case_cfg.output_dir = cfg.output_dir / "cases" / case_id;
        case_cfg.memory.store_path.clear();
        case_cfg.reasoner.target_cwes = c.second;
        auto result = run_analyze(c.first, case_cfg, log);
        for (const auto& cwe : c.second) {
            const auto& v = result.report.per_cwe.at(cwe);
            if (v == "incomplete") continue;  // scored as missing
            verdicts[case_id][cwe] = v == "yes";
        }
    }
    eval::ToolMetrics metrics{"vulbin", eval::score(verdicts, truth)};
    eval::write_report(cfg.output_dir, metrics, base);
    log.event("eval", std::to_string(cases.size()) + " cases scored");
    return 0;
}

}  // namespace vulbin::app
