#pragma once

#include "vulbin/app/config.hpp"
#include "vulbin/prominence/enhancer.hpp"
#include "vulbin/reasoner/report.hpp"

#include <chrono>
#include <functional>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace vulbin::app {

// JSON-lines event log (run.log).
class RunLog {
public:
    explicit RunLog(const std::filesystem::path& path);
    void event(std::string_view stage, std::string_view message, double ms = -1);
    void warn(std::string_view stage, std::string_view message);

private:
    std::mutex mu_;
    std::ofstream out_;
};

// Logs the elapsed time of a stage when it goes out of scope.
class StageTimer {
public:
    StageTimer(RunLog& log, std::string stage);
    ~StageTimer();

private:
    RunLog& log_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

struct EnhanceResult {
    std::string artifact_hash;
    std::vector<decomp::RawFunction> functions;  // every decompiled function
    decomp::CallGraph graph;
    std::vector<prominence::EnhancedFunction> enhanced;  // one per ok function, address order
};

struct AnalyzeResult {
    reasoner::BinaryReport report;
    int exit_code = 0;
};

// Ingest, decompile and enhance; writes enhanced/ files under cfg.output_dir.
EnhanceResult run_enhance(const std::filesystem::path& binary, const RunConfig& cfg, RunLog& log);

// Full pipeline; writes report.json, report.md and the store.
AnalyzeResult run_analyze(const std::filesystem::path& binary, const RunConfig& cfg, RunLog& log);

// Every manifest case analysed with its own targets; writes the metrics report.
// Relative binary paths resolve against `corpus_dir`.
int run_eval(const std::filesystem::path& corpus_dir, const std::filesystem::path& manifest, const RunConfig& cfg, RunLog& log,
             const std::filesystem::path& baseline = {});

// Runs `fn(i)` for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace vulbin::app
