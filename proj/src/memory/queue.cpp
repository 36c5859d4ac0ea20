#include "vulbin/memory/queue.hpp"

#include "database.hpp"
#include "vulbin/common/text.hpp"
#include "vulbin/llm/tokens.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <limits>
#include <queue>

namespace vulbin::memory {

namespace {

constexpr std::string_view kSchema = R"sql(
CREATE TABLE IF NOT EXISTS meta(key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS functions(
    function_id TEXT PRIMARY KEY,
    state TEXT NOT NULL,
    attempts INTEGER NOT NULL DEFAULT 0,
    last_error TEXT,
    address INTEGER NOT NULL,
    position INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS records(
    function_id TEXT PRIMARY KEY,
    summary TEXT NOT NULL,
    callees TEXT NOT NULL,
    created_at TEXT NOT NULL,
    model_tag TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS suspected(
    function_id TEXT NOT NULL,
    cwe_id TEXT NOT NULL,
    confidence REAL NOT NULL,
    PRIMARY KEY(function_id, cwe_id));
CREATE TABLE IF NOT EXISTS verdicts(
    function_id TEXT NOT NULL,
    cwe_id TEXT NOT NULL,
    verdict TEXT NOT NULL,
    rationale TEXT NOT NULL,
    confidence REAL NOT NULL,
    PRIMARY KEY(function_id, cwe_id));
CREATE TABLE IF NOT EXISTS edges(caller TEXT NOT NULL, callee TEXT NOT NULL, PRIMARY KEY(caller, callee));
)sql";

std::string utc_now() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct NodeKey {
    std::uint64_t address;
    std::string id;
    auto operator<=>(const NodeKey&) const = default;
};

}  // namespace

std::string_view to_string(EntryState state) {
    switch (state) {
    case EntryState::pending: return "pending";
    case EntryState::in_flight: return "in_flight";
    case EntryState::done: return "done";
    case EntryState::failed: return "failed";
    case EntryState::skipped: return "skipped";
    }
    return "?";
}

EntryState parse_state(std::string_view text) {
    for (auto s : {EntryState::pending, EntryState::in_flight, EntryState::done, EntryState::failed,
                   EntryState::skipped}) {
        if (to_string(s) == text) return s;
    }
    throw Error(ErrorCode::StoreError, "unknown queue state '" + std::string(text) + "'");
}

std::uint64_t entry_address(std::string_view function_id) {
    try {
        return decomp::address_of(function_id);
    } catch (const Error&) {
        return std::numeric_limits<std::uint64_t>::max();
    }
}

std::string truncate_summary(std::string_view summary, std::uint64_t cap) {
    if (llm::count_tokens(summary) <= cap) return std::string(summary);
    const std::size_t max_bytes = cap * 4;
    std::size_t cut = std::string_view::npos;
    for (std::size_t i = 0; i < summary.size() && i < max_bytes; ++i) {
        char c = summary[i];
        bool boundary = (c == '.' || c == '!' || c == '?') && (i + 1 == summary.size() || summary[i + 1] == ' ' ||
                                                               summary[i + 1] == '\n');
        if (boundary) cut = i + 1;
    }
    if (cut == std::string_view::npos) cut = text::utf8_safe_prefix(summary, max_bytes);
    return std::string(text::trim(summary.substr(0, cut)));
}

std::unordered_map<std::string, std::size_t> components(const decomp::CallGraph& graph) {
    // Iterative Tarjan over nodes in id order.
    std::vector<std::string> nodes(graph.nodes().begin(), graph.nodes().end());
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < nodes.size(); ++i) idx.emplace(nodes[i], i);
    std::vector<std::vector<std::size_t>> adj(nodes.size());
    for (const auto& [a, b] : graph.edges()) adj[idx.at(a)].push_back(idx.at(b));

    constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> order(nodes.size(), kUnset), low(nodes.size(), 0), comp(nodes.size(), kUnset);
    std::vector<bool> on_stack(nodes.size(), false);
    std::vector<std::size_t> stack;
    std::size_t counter = 0, ncomp = 0;
    std::vector<std::pair<std::size_t, std::size_t>> work;  // (node, next edge)
    for (std::size_t root = 0; root < nodes.size(); ++root) {
        if (order[root] != kUnset) continue;
        work.emplace_back(root, 0);
        while (!work.empty()) {
            auto& [v, e] = work.back();
            if (e == 0 && order[v] == kUnset) {
                order[v] = low[v] = counter++;
                stack.push_back(v);
                on_stack[v] = true;
            }
            if (e < adj[v].size()) {
                std::size_t w = adj[v][e++];
                if (order[w] == kUnset) {
                    work.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], order[w]);
                }
                continue;
            }
            if (low[v] == order[v]) {
                std::size_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    comp[w] = ncomp;
                } while (w != v);
                ++ncomp;
            }
            std::size_t done = v;
            work.pop_back();
            if (!work.empty()) {
                auto parent = work.back().first;
                low[parent] = std::min(low[parent], low[done]);
            }
        }
    }
    std::unordered_map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < nodes.size(); ++i) out.emplace(nodes[i], comp[i]);
    return out;
}

std::vector<std::string> dispatch_order(const decomp::CallGraph& graph) {
    auto comp = components(graph);
    std::size_t ncomp = 0;
    for (const auto& [id, c] : comp) ncomp = std::max(ncomp, c + 1);

    std::vector<std::vector<NodeKey>> members(ncomp);
    for (const auto& id : graph.nodes()) members[comp.at(id)].push_back({entry_address(id), id});
    for (auto& m : members) std::sort(m.begin(), m.end());

    // Condensation edges point caller -> callee; a component is ready once
    // all its callee components are emitted.
    std::vector<std::set<std::size_t>> callers(ncomp);
    std::vector<std::size_t> waiting(ncomp, 0);
    for (const auto& [a, b] : graph.edges()) {
        std::size_t ca = comp.at(a), cb = comp.at(b);
        if (ca != cb && callers[cb].insert(ca).second) ++waiting[ca];
    }
    using Item = std::pair<NodeKey, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;
    for (std::size_t c = 0; c < ncomp; ++c) {
        if (waiting[c] == 0) ready.emplace(members[c].front(), c);
    }
    std::vector<std::string> out;
    out.reserve(graph.nodes().size());
    while (!ready.empty()) {
        auto c = ready.top().second;
        ready.pop();
        for (const auto& m : members[c]) out.push_back(m.id);
        for (auto caller : callers[c]) {
            if (--waiting[caller] == 0) ready.emplace(members[caller].front(), caller);
        }
    }
    return out;
}

AnalysisQueue::AnalysisQueue(const std::filesystem::path& store_path, QueueOptions options)
    : options_(options) {
    if (store_path.native() != kInMemory && store_path.has_parent_path()) {
        std::filesystem::create_directories(store_path.parent_path());
    }
    db_ = std::make_unique<Database>(store_path);
    if (store_path.native() != kInMemory) {
        db_->exec("PRAGMA journal_mode=WAL");
        db_->exec("PRAGMA synchronous=NORMAL");
    }
    db_->exec(kSchema);
    auto version = meta("schema_version");
    if (!version) {
        set_meta("schema_version", std::to_string(kSchemaVersion));
    } else if (std::stoi(*version) > kSchemaVersion) {
        throw Error(ErrorCode::SchemaTooNew, "store schema version " + *version + " is newer than " +
                                                 std::to_string(kSchemaVersion));
    }
    load();
}

AnalysisQueue::~AnalysisQueue() = default;

std::optional<std::string> AnalysisQueue::meta(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto st = db_->prepare("SELECT value FROM meta WHERE key = ?");
    st.bind(1, key);
    if (st.step()) return st.text(0);
    return std::nullopt;
}

void AnalysisQueue::set_meta(const std::string& key, const std::string& value) {
    std::lock_guard lock(mu_);
    db_->prepare("INSERT OR REPLACE INTO meta(key, value) VALUES(?, ?)").bind(1, key).bind(2, value).run();
}

void AnalysisQueue::load() {
    std::lock_guard lock(mu_);
    entries_.clear();
    records_.clear();
    edges_.clear();
    {
        auto st = db_->prepare("SELECT function_id, state, attempts, last_error, address, position FROM functions "
                               "ORDER BY position");
        while (st.step()) {
            QueueEntry e;
            e.function_id = st.text(0);
            e.state = parse_state(st.text(1));
            e.attempts = static_cast<unsigned>(st.integer(2));
            if (!st.is_null(3)) e.last_error = st.text(3);
            e.address = static_cast<std::uint64_t>(st.integer(4));
            e.position = static_cast<std::size_t>(st.integer(5));
            entries_.push_back(std::move(e));
        }
    }
    {
        auto st = db_->prepare("SELECT caller, callee FROM edges ORDER BY caller, callee");
        while (st.step()) edges_.emplace_back(st.text(0), st.text(1));
    }
    {
        auto st = db_->prepare("SELECT function_id, summary, callees, created_at, model_tag FROM records");
        while (st.step()) {
            AnalysisRecord r;
            r.function_id = st.text(0);
            r.summary = st.text(1);
            r.callees = nlohmann::json::parse(st.text(2)).get<std::vector<std::string>>();
            r.created_at = st.text(3);
            r.model_tag = st.text(4);
            records_.emplace(r.function_id, std::move(r));
        }
    }
    {
        auto st = db_->prepare("SELECT function_id, cwe_id, confidence FROM suspected ORDER BY function_id, cwe_id");
        while (st.step()) {
            auto it = records_.find(st.text(0));
            if (it != records_.end()) it->second.suspected.push_back({st.text(1), st.real(2)});
        }
    }
    {
        auto st = db_->prepare(
            "SELECT function_id, cwe_id, verdict, rationale, confidence FROM verdicts ORDER BY function_id, cwe_id");
        while (st.step()) {
            auto it = records_.find(st.text(0));
            if (it != records_.end()) it->second.verdicts.push_back({st.text(1), st.text(2), st.text(3), st.real(4)});
        }
    }
    // Resume: whatever was in flight when the last run stopped is retried.
    bool reset = false;
    for (auto& e : entries_) {
        if (e.state == EntryState::in_flight) {
            e.state = EntryState::pending;
            reset = true;
        }
    }
    if (reset) db_->exec("UPDATE functions SET state = 'pending' WHERE state = 'in_flight'");
    index_graph();
}

void AnalysisQueue::index_graph() {
    index_.clear();
    callees_.clear();
    decomp::CallGraph graph;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        index_.emplace(entries_[i].function_id, i);
        graph.add_node(entries_[i].function_id);
    }
    for (const auto& [a, b] : edges_) {
        if (graph.contains(a) && graph.contains(b)) graph.add_edge(a, b);
    }
    for (const auto& e : entries_) {
        auto list = graph.callees(e.function_id);
        std::sort(list.begin(), list.end(), [&](const std::string& x, const std::string& y) {
            return std::pair(entries_[index_.at(x)].address, x) < std::pair(entries_[index_.at(y)].address, y);
        });
        callees_.emplace(e.function_id, std::move(list));
    }
    component_ = components(graph);
}

std::vector<QueueEntry> AnalysisQueue::enqueue_all(const decomp::CallGraph& graph,
                                                   const std::set<std::string>& skip) {
    std::unique_lock lock(mu_);
    if (!entries_.empty()) {
        std::set<std::string> stored;
        for (const auto& e : entries_) stored.insert(e.function_id);
        if (stored != graph.nodes()) {
            throw Error(ErrorCode::StoreError, "store already holds a different call graph");
        }
        return entries_;
    }
    auto order = dispatch_order(graph);
    std::vector<QueueEntry> fresh;
    fresh.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        QueueEntry e;
        e.function_id = order[i];
        e.state = skip.contains(order[i]) ? EntryState::skipped : EntryState::pending;
        e.address = entry_address(order[i]);
        e.position = i;
        fresh.push_back(std::move(e));
    }
    Transaction tx(*db_);
    auto ins = db_->prepare(
        "INSERT INTO functions(function_id, state, attempts, last_error, address, position) VALUES(?, ?, 0, NULL, ?, ?)");
    for (const auto& e : fresh) {
        ins.bind(1, e.function_id)
            .bind(2, to_string(e.state))
            .bind(3, static_cast<std::int64_t>(e.address))
            .bind(4, static_cast<std::int64_t>(e.position))
            .run();
        ins.reset();
    }
    auto edge = db_->prepare("INSERT OR IGNORE INTO edges(caller, callee) VALUES(?, ?)");
    for (const auto& [a, b] : graph.edges()) {
        edge.bind(1, a).bind(2, b).run();
        edge.reset();
    }
    tx.commit();
    entries_ = std::move(fresh);
    edges_.assign(graph.edges().begin(), graph.edges().end());
    index_graph();
    lock.unlock();
    cv_.notify_all();
    return entries();
}

bool AnalysisQueue::eligible_locked(const QueueEntry& e) const {
    if (e.state != EntryState::pending) return false;
    if (!options_.strict_order) return true;
    auto own = component_.at(e.function_id);
    for (const auto& callee : callees_.at(e.function_id)) {
        if (component_.at(callee) == own) continue;
        if (!terminal(entries_[index_.at(callee)].state)) return false;
    }
    return true;
}

std::optional<QueueEntry> AnalysisQueue::take_locked() {
    for (auto& e : entries_) {
        if (!eligible_locked(e)) continue;
        db_->prepare("UPDATE functions SET state = 'in_flight' WHERE function_id = ?").bind(1, e.function_id).run();
        e.state = EntryState::in_flight;
        return e;
    }
    return std::nullopt;
}

std::optional<QueueEntry> AnalysisQueue::next() {
    std::unique_lock lock(mu_);
    for (;;) {
        if (auto e = take_locked()) return e;
        bool pending = std::any_of(entries_.begin(), entries_.end(),
                                   [](const QueueEntry& q) { return q.state == EntryState::pending; });
        if (!pending) return std::nullopt;
        cv_.wait(lock);
    }
}

std::optional<QueueEntry> AnalysisQueue::try_next() {
    std::lock_guard lock(mu_);
    return take_locked();
}

QueueEntry& AnalysisQueue::require_in_flight(const QueueEntry& entry) {
    auto it = index_.find(entry.function_id);
    if (it == index_.end()) throw Error(ErrorCode::UnknownFunction, entry.function_id);
    auto& e = entries_[it->second];
    if (e.state != EntryState::in_flight) {
        throw Error(ErrorCode::IllegalTransition,
                    entry.function_id + " is " + std::string(to_string(e.state)) + ", not in_flight");
    }
    return e;
}

void AnalysisQueue::complete(const QueueEntry& entry, AnalysisRecord record) {
    {
        std::lock_guard lock(mu_);
        auto& e = require_in_flight(entry);
        record.function_id = e.function_id;
        record.summary = truncate_summary(record.summary, options_.summary_token_cap);
        if (record.created_at.empty()) record.created_at = utc_now();
        std::vector<Suspicion> unique;
        for (auto& s : record.suspected) {
            s.confidence = std::clamp(s.confidence, 0.0, 1.0);
            if (std::none_of(unique.begin(), unique.end(), [&](const Suspicion& u) { return u.cwe_id == s.cwe_id; })) {
                unique.push_back(s);
            }
        }
        std::sort(unique.begin(), unique.end(),
                  [](const Suspicion& a, const Suspicion& b) { return a.cwe_id < b.cwe_id; });
        record.suspected = std::move(unique);
        std::sort(record.verdicts.begin(), record.verdicts.end(),
                  [](const VerdictRow& a, const VerdictRow& b) { return a.cwe_id < b.cwe_id; });

        Transaction tx(*db_);
        db_->prepare("INSERT OR REPLACE INTO records(function_id, summary, callees, created_at, model_tag) "
                     "VALUES(?, ?, ?, ?, ?)")
            .bind(1, record.function_id)
            .bind(2, record.summary)
            .bind(3, nlohmann::json(record.callees).dump())
            .bind(4, record.created_at)
            .bind(5, record.model_tag)
            .run();
        db_->prepare("DELETE FROM suspected WHERE function_id = ?").bind(1, record.function_id).run();
        db_->prepare("DELETE FROM verdicts WHERE function_id = ?").bind(1, record.function_id).run();
        auto sus = db_->prepare("INSERT OR REPLACE INTO suspected(function_id, cwe_id, confidence) VALUES(?, ?, ?)");
        for (const auto& s : record.suspected) {
            sus.bind(1, record.function_id).bind(2, s.cwe_id).bind(3, s.confidence).run();
            sus.reset();
        }
        auto ver = db_->prepare("INSERT OR REPLACE INTO verdicts(function_id, cwe_id, verdict, rationale, confidence) "
                                "VALUES(?, ?, ?, ?, ?)");
        for (const auto& v : record.verdicts) {
            ver.bind(1, record.function_id).bind(2, v.cwe_id).bind(3, v.verdict).bind(4, v.rationale)
                .bind(5, v.confidence).run();
            ver.reset();
        }
        db_->prepare("UPDATE functions SET state = 'done', last_error = NULL WHERE function_id = ?")
            .bind(1, record.function_id)
            .run();
        tx.commit();
        e.state = EntryState::done;
        e.last_error.reset();
        records_[record.function_id] = std::move(record);
    }
    cv_.notify_all();
}

void AnalysisQueue::fail(const QueueEntry& entry, const std::string& reason) {
    {
        std::lock_guard lock(mu_);
        auto& e = require_in_flight(entry);
        unsigned attempts = e.attempts + 1;
        EntryState next = attempts <= options_.max_retries ? EntryState::pending : EntryState::failed;
        db_->prepare("UPDATE functions SET state = ?, attempts = ?, last_error = ? WHERE function_id = ?")
            .bind(1, to_string(next))
            .bind(2, static_cast<std::int64_t>(attempts))
            .bind(3, reason)
            .bind(4, e.function_id)
            .run();
        e.state = next;
        e.attempts = attempts;
        e.last_error = reason;
    }
    cv_.notify_all();
}

ContextBundle AnalysisQueue::fetch_context(const std::string& function_id, std::uint64_t budget_tokens) const {
    std::lock_guard lock(mu_);
    if (!index_.contains(function_id)) throw Error(ErrorCode::UnknownFunction, function_id);

    std::vector<std::string> order;
    std::set<std::string> seen{function_id};
    auto push = [&](const std::string& id) {
        if (seen.insert(id).second) order.push_back(id);
    };
    const auto& direct = callees_.at(function_id);
    for (const auto& c : direct) push(c);
    std::vector<std::string> second;
    for (const auto& c : direct) {
        for (const auto& cc : callees_.at(c)) second.push_back(cc);
    }
    std::sort(second.begin(), second.end(), [&](const std::string& x, const std::string& y) {
        return std::pair(entries_[index_.at(x)].address, x) < std::pair(entries_[index_.at(y)].address, y);
    });
    for (const auto& c : second) push(c);
    std::vector<const QueueEntry*> flagged;
    for (const auto& e : entries_) {
        if (e.state != EntryState::done || seen.contains(e.function_id)) continue;
        auto r = records_.find(e.function_id);
        if (r != records_.end() && !r->second.suspected.empty()) flagged.push_back(&e);
    }
    std::sort(flagged.begin(), flagged.end(), [](const QueueEntry* a, const QueueEntry* b) {
        return std::pair(a->address, a->function_id) < std::pair(b->address, b->function_id);
    });
    for (const auto* e : flagged) push(e->function_id);

    ContextBundle bundle;
    bundle.budget = budget_tokens;
    for (const auto& id : order) {
        if (entries_[index_.at(id)].state != EntryState::done) continue;
        auto r = records_.find(id);
        if (r == records_.end() || r->second.summary.empty()) continue;
        auto cost = llm::count_tokens(r->second.summary);
        if (bundle.total_tokens + cost > budget_tokens) break;
        bundle.total_tokens += cost;
        bundle.items.push_back({id, r->second.summary});
    }
    return bundle;
}

CoverageReport AnalysisQueue::coverage_report() const {
    std::lock_guard lock(mu_);
    CoverageReport c;
    for (const auto& e : entries_) {
        switch (e.state) {
        case EntryState::done: ++c.done; break;
        case EntryState::failed:
            ++c.failed;
            c.failures.emplace_back(e.function_id, e.last_error.value_or(""));
            break;
        case EntryState::skipped: ++c.skipped; break;
        case EntryState::pending: ++c.pending; break;
        case EntryState::in_flight: ++c.in_flight; break;
        }
    }
    return c;
}

bool AnalysisQueue::is_terminal() const {
    std::lock_guard lock(mu_);
    return std::all_of(entries_.begin(), entries_.end(), [](const QueueEntry& e) { return terminal(e.state); });
}

std::vector<QueueEntry> AnalysisQueue::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

std::optional<QueueEntry> AnalysisQueue::entry(const std::string& function_id) const {
    std::lock_guard lock(mu_);
    auto it = index_.find(function_id);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second];
}

std::optional<AnalysisRecord> AnalysisQueue::record(const std::string& function_id) const {
    std::lock_guard lock(mu_);
    auto it = records_.find(function_id);
    if (it == records_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::pair<std::string, std::string>> AnalysisQueue::edges() const {
    std::lock_guard lock(mu_);
    return edges_;
}

void AnalysisQueue::clear() {
    {
        std::lock_guard lock(mu_);
        Transaction tx(*db_);
        db_->exec("DELETE FROM functions; DELETE FROM records; DELETE FROM suspected; DELETE FROM verdicts; "
                  "DELETE FROM edges;");
        tx.commit();
        entries_.clear();
        records_.clear();
        edges_.clear();
        index_graph();
    }
    cv_.notify_all();
}

}  // namespace vulbin::memory
