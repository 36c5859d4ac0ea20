#pragma once

#include "vulbin/decomp/adapter.hpp"

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vulbin::memory {

enum class EntryState { pending, in_flight, done, failed, skipped };

std::string_view to_string(EntryState state);
EntryState parse_state(std::string_view text);  // throws Error{StoreError}
inline bool terminal(EntryState s) {
    return s == EntryState::done || s == EntryState::failed || s == EntryState::skipped;
}

struct QueueEntry {
    std::string function_id;
    EntryState state = EntryState::pending;
    unsigned attempts = 0;
    std::optional<std::string> last_error;
    std::uint64_t address = 0;
    std::size_t position = 0;  // dispatch order
};

struct Suspicion {
    std::string cwe_id;
    double confidence = 1.0;
};

// Per-CWE verdict kept alongside the record so reports can be rebuilt from the store.
struct VerdictRow {
    std::string cwe_id;
    std::string verdict;  // "yes", "no" or "invalid"
    std::string rationale;
    double confidence = 1.0;
};

struct AnalysisRecord {
    std::string function_id;
    std::string summary;
    std::vector<Suspicion> suspected;
    std::vector<std::string> callees;
    std::string created_at;
    std::string model_tag;
    std::vector<VerdictRow> verdicts;
};

struct ContextItem {
    std::string function_id;
    std::string summary;
};

struct ContextBundle {
    std::vector<ContextItem> items;
    std::uint64_t total_tokens = 0;
    std::uint64_t budget = 0;
    bool empty() const { return items.empty(); }
};

struct CoverageReport {
    std::size_t done = 0, failed = 0, skipped = 0, pending = 0, in_flight = 0;
    std::vector<std::pair<std::string, std::string>> failures;  // (function_id, last_error), queue order
    std::size_t total() const { return done + failed + skipped + pending + in_flight; }
};

struct QueueOptions {
    unsigned max_retries = 2;
    bool strict_order = true;  // dispatch only once every callee outside the SCC is terminal
    std::uint64_t summary_token_cap = 256;
};

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kInMemory = ":memory:";

// Cuts at the last sentence end that fits `cap` tokens; falls back to a
// UTF-8 safe byte cut when no sentence end fits.
std::string truncate_summary(std::string_view summary, std::uint64_t cap);

// Callee-first order over the SCC condensation; ties and SCC members by
// entry address. Pure; enqueue_all persists this order.
std::vector<std::string> dispatch_order(const decomp::CallGraph& graph);

// Strongly connected component index per node.
std::unordered_map<std::string, std::size_t> components(const decomp::CallGraph& graph);

// Address parsed from a function id; ids without one sort last.
std::uint64_t entry_address(std::string_view function_id);

class Database;

// The analysis queue and the archival store behind it. Every mutation is
// written to the SQL store in one transaction before the in-memory view
// changes; reads are served from that view. All methods are thread-safe.
class AnalysisQueue {
public:
    // Opens or creates the store. In-flight entries of an interrupted run are
    // returned to pending. Errors: SchemaTooNew, StoreError.
    explicit AnalysisQueue(const std::filesystem::path& store_path, QueueOptions options = {});
    ~AnalysisQueue();
    AnalysisQueue(const AnalysisQueue&) = delete;
    AnalysisQueue& operator=(const AnalysisQueue&) = delete;

    // On a fresh store, persists one entry per node. On a store that already
    // holds exactly this node set, keeps the stored states (resume).
    // Errors: StoreError when the store holds a different graph.
    std::vector<QueueEntry> enqueue_all(const decomp::CallGraph& graph, const std::set<std::string>& skip);

    // Blocks until an entry is eligible; none once nothing is pending.
    std::optional<QueueEntry> next();
    std::optional<QueueEntry> try_next();

    // Errors: IllegalTransition unless the entry is in flight.
    void complete(const QueueEntry& entry, AnalysisRecord record);
    void fail(const QueueEntry& entry, const std::string& reason);

    // Errors: UnknownFunction.
    ContextBundle fetch_context(const std::string& function_id, std::uint64_t budget_tokens) const;

    CoverageReport coverage_report() const;
    bool is_terminal() const;

    std::vector<QueueEntry> entries() const;  // dispatch order
    std::optional<QueueEntry> entry(const std::string& function_id) const;
    std::optional<AnalysisRecord> record(const std::string& function_id) const;
    std::vector<std::pair<std::string, std::string>> edges() const;

    std::optional<std::string> meta(const std::string& key) const;
    void set_meta(const std::string& key, const std::string& value);

    // Drops every function, edge and record.
    void clear();

    const QueueOptions& options() const { return options_; }

private:
    std::optional<QueueEntry> take_locked();
    bool eligible_locked(const QueueEntry& e) const;
    void load();
    void index_graph();
    QueueEntry& require_in_flight(const QueueEntry& entry);

    QueueOptions options_;
    std::unique_ptr<Database> db_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::vector<QueueEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::map<std::string, std::vector<std::string>> callees_;  // ascending address
    std::unordered_map<std::string, std::size_t> component_;
    std::map<std::string, AnalysisRecord> records_;
    std::vector<std::pair<std::string, std::string>> edges_;
};

}  // namespace vulbin::memory
