#include "support.hpp"

#include "vulbin/llm/tokens.hpp"
#include "vulbin/memory/queue.hpp"

#include <random>
#include <thread>

using namespace vulbin;
using namespace vulbin::memory;

namespace {

std::string id(unsigned addr) { return decomp::make_function_id("h", addr); }

decomp::CallGraph graph_of(unsigned n, const std::vector<std::pair<unsigned, unsigned>>& edges) {
    decomp::CallGraph g;
    for (unsigned i = 1; i <= n; ++i) g.add_node(id(i * 0x10));
    for (auto [a, b] : edges) g.add_edge(id(a * 0x10), id(b * 0x10));
    return g;
}

AnalysisRecord record(const std::string& fid, std::string summary, bool flagged = false) {
    AnalysisRecord r;
    r.function_id = fid;
    r.summary = std::move(summary);
    if (flagged) r.suspected.push_back({"CWE-78", 1.0});
    r.verdicts.push_back({"CWE-78", flagged ? "yes" : "no", "because", 1.0});
    return r;
}

std::map<std::string, std::size_t> positions(const std::vector<std::string>& order) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    return pos;
}

}  // namespace

TEST_CASE("callees come before callers") {
    // 1 -> 2 -> 3
    auto g = graph_of(3, {{1, 2}, {2, 3}});
    CHECK(dispatch_order(g) == std::vector<std::string>{id(0x30), id(0x20), id(0x10)});
}

TEST_CASE("cycles are ordered by address") {
    // 1 -> 2 <-> 3, 3 -> 4
    auto g = graph_of(4, {{1, 2}, {2, 3}, {3, 2}, {3, 4}});
    CHECK(dispatch_order(g) == std::vector<std::string>{id(0x40), id(0x20), id(0x30), id(0x10)});
    auto comp = components(g);
    CHECK(comp.at(id(0x20)) == comp.at(id(0x30)));
    CHECK(comp.at(id(0x10)) != comp.at(id(0x20)));
}

TEST_CASE("dispatch order property on random graphs") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        unsigned n = 1 + rng() % 40;
        std::vector<std::pair<unsigned, unsigned>> edges;
        for (unsigned k = 0; k < n * 2; ++k) edges.emplace_back(1 + rng() % n, 1 + rng() % n);
        auto g = graph_of(n, edges);
        auto order = dispatch_order(g);
        REQUIRE(order.size() == n);
        auto pos = positions(order);
        REQUIRE(pos.size() == n);
        auto comp = components(g);
        for (const auto& [a, b] : g.edges()) {
            if (comp.at(a) != comp.at(b)) CHECK(pos.at(b) < pos.at(a));
        }
        CHECK(order == dispatch_order(g));
    }
}

TEST_CASE("entry addresses from ids") {
    CHECK(entry_address(id(0x401130)) == 0x401130);
    CHECK(entry_address("nonsense") == std::numeric_limits<std::uint64_t>::max());
}

TEST_CASE("state transitions") {
    AnalysisQueue q{std::string(kInMemory)};
    auto g = graph_of(3, {{1, 2}, {2, 3}});
    auto entries = q.enqueue_all(g, {});
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].function_id == id(0x30));

    auto e = q.try_next();
    REQUIRE(e);
    CHECK(e->function_id == id(0x30));
    CHECK(e->state == EntryState::in_flight);
    CHECK_FALSE(q.try_next());  // 0x20 waits for its callee

    q.complete(*e, record(e->function_id, "leaf."));
    CHECK_ERROR_CODE(q.complete(*e, record(e->function_id, "again.")), ErrorCode::IllegalTransition);
    CHECK_ERROR_CODE(q.fail(*e, "late"), ErrorCode::IllegalTransition);
    CHECK(q.entry(id(0x30))->state == EntryState::done);
    CHECK(q.record(id(0x30))->summary == "leaf.");

    auto e2 = q.next();
    REQUIRE(e2);
    CHECK(e2->function_id == id(0x20));
    CHECK_FALSE(q.is_terminal());
}

TEST_CASE("failures are retried then given up") {
    AnalysisQueue q(std::string(kInMemory), QueueOptions{2, true, 256});
    q.enqueue_all(graph_of(1, {}), {});
    for (int i = 0; i < 3; ++i) {
        auto e = q.try_next();
        REQUIRE(e);
        q.fail(*e, "boom " + std::to_string(i));
    }
    auto e = q.entry(id(0x10));
    CHECK(e->state == EntryState::failed);
    CHECK(e->attempts == 3);
    CHECK(e->last_error == "boom 2");
    CHECK_FALSE(q.try_next());
    CHECK_FALSE(q.next());
    CHECK(q.is_terminal());
    auto cov = q.coverage_report();
    CHECK(cov.failed == 1);
    CHECK(cov.failures == std::vector<std::pair<std::string, std::string>>{{id(0x10), "boom 2"}});
}

TEST_CASE("failed callees unblock callers") {
    AnalysisQueue q(std::string(kInMemory), QueueOptions{0, true, 256});
    q.enqueue_all(graph_of(2, {{1, 2}}), {});
    auto e = q.try_next();
    q.fail(*e, "x");
    auto caller = q.try_next();
    REQUIRE(caller);
    CHECK(caller->function_id == id(0x10));
}

TEST_CASE("skipped functions are terminal from the start") {
    AnalysisQueue q{std::string(kInMemory)};
    q.enqueue_all(graph_of(2, {{1, 2}}), {id(0x20)});
    CHECK(q.entry(id(0x20))->state == EntryState::skipped);
    auto e = q.try_next();
    REQUIRE(e);
    CHECK(e->function_id == id(0x10));
    q.complete(*e, record(e->function_id, "top."));
    CHECK(q.is_terminal());
    auto cov = q.coverage_report();
    CHECK(cov.done == 1);
    CHECK(cov.skipped == 1);
    CHECK(cov.total() == 2);
}

TEST_CASE("relaxed order hands out any pending entry") {
    AnalysisQueue q(std::string(kInMemory), QueueOptions{2, false, 256});
    q.enqueue_all(graph_of(3, {{1, 2}, {2, 3}}), {});
    CHECK(q.try_next());
    CHECK(q.try_next());
    CHECK(q.try_next());
    CHECK(q.coverage_report().in_flight == 3);
}

TEST_CASE("stores persist and resume") {
    testing::TempDir tmp;
    auto path = tmp / "store.db";
    auto g = graph_of(3, {{1, 2}, {2, 3}});
    {
        AnalysisQueue q(path);
        q.enqueue_all(g, {});
        q.set_meta("artifact_hash", "abc");
        auto e = q.next();
        q.complete(*e, record(e->function_id, "leaf summary.", true));
        auto e2 = q.next();  // left in flight by the "crash"
        CHECK(e2->function_id == id(0x20));
    }
    {
        AnalysisQueue q(path);
        CHECK(q.meta("artifact_hash") == "abc");
        CHECK(q.entry(id(0x20))->state == EntryState::pending);
        auto entries = q.enqueue_all(g, {});
        CHECK(entries.size() == 3);
        CHECK(q.entry(id(0x30))->state == EntryState::done);
        auto rec = q.record(id(0x30));
        REQUIRE(rec);
        CHECK(rec->summary == "leaf summary.");
        REQUIRE(rec->suspected.size() == 1);
        CHECK(rec->verdicts.at(0).verdict == "yes");
        CHECK(q.edges().size() == 2);
        CHECK_ERROR_CODE(q.enqueue_all(graph_of(4, {}), {}), ErrorCode::StoreError);
        q.clear();
        CHECK(q.entries().empty());
        CHECK(q.enqueue_all(graph_of(4, {}), {}).size() == 4);
    }
}

TEST_CASE("newer schemas are refused") {
    testing::TempDir tmp;
    auto path = tmp / "store.db";
    {
        AnalysisQueue q(path);
        q.set_meta("schema_version", std::to_string(kSchemaVersion + 1));
    }
    CHECK_ERROR_CODE(AnalysisQueue{path}, ErrorCode::SchemaTooNew);
}

TEST_CASE("context prefers direct callees, then their callees, then flagged functions") {
    AnalysisQueue q(std::string(kInMemory), QueueOptions{2, false, 256});
    // 1 -> 2 -> 3, 1 -> 4, 5 flagged elsewhere, 6 clean elsewhere
    q.enqueue_all(graph_of(6, {{1, 2}, {2, 3}, {1, 4}}), {});
    std::map<std::string, QueueEntry> taken;
    while (auto e = q.try_next()) taken.emplace(e->function_id, *e);
    q.complete(taken.at(id(0x20)), record(id(0x20), "two."));
    q.complete(taken.at(id(0x30)), record(id(0x30), "three."));
    q.complete(taken.at(id(0x40)), record(id(0x40), "four."));
    q.complete(taken.at(id(0x50)), record(id(0x50), "five.", true));
    q.complete(taken.at(id(0x60)), record(id(0x60), "six."));

    auto ctx = q.fetch_context(id(0x10), 1000);
    std::vector<std::string> ids;
    for (const auto& item : ctx.items) ids.push_back(item.function_id);
    CHECK(ids == std::vector<std::string>{id(0x20), id(0x40), id(0x30), id(0x50)});
    CHECK(ctx.total_tokens == 7);
    CHECK(ctx.budget == 1000);

    auto tight = q.fetch_context(id(0x10), 3);
    CHECK(tight.items.size() == 2);
    CHECK(tight.total_tokens <= 3);
    CHECK(q.fetch_context(id(0x10), 0).empty());
    CHECK_ERROR_CODE(q.fetch_context("h:0x999", 10), ErrorCode::UnknownFunction);
    // Unfinished callees contribute nothing.
    CHECK(q.fetch_context(id(0x60), 1000).items.size() == 1);
}

TEST_CASE("context stays within budget on random stores") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        unsigned n = 2 + rng() % 25;
        std::vector<std::pair<unsigned, unsigned>> edges;
        for (unsigned k = 0; k < n; ++k) edges.emplace_back(1 + rng() % n, 1 + rng() % n);
        AnalysisQueue q(std::string(kInMemory), QueueOptions{0, false, 256});
        q.enqueue_all(graph_of(n, edges), {});
        while (auto e = q.try_next()) {
            if (rng() % 4 == 0) q.fail(*e, "x");
            else q.complete(*e, record(e->function_id, std::string(rng() % 200, 's') + ".", rng() % 3 == 0));
        }
        for (unsigned i = 1; i <= n; ++i) {
            auto budget = rng() % 120;
            auto ctx = q.fetch_context(id(i * 0x10), budget);
            std::uint64_t sum = 0;
            for (const auto& item : ctx.items) {
                CHECK(item.function_id != id(i * 0x10));
                CHECK(q.entry(item.function_id)->state == EntryState::done);
                sum += llm::count_tokens(item.summary);
            }
            CHECK(sum == ctx.total_tokens);
            CHECK(ctx.total_tokens <= budget);
        }
    }
}

TEST_CASE("summary truncation") {
    CHECK(truncate_summary("Short.", 10) == "Short.");
    CHECK(truncate_summary("One two. Three four five six seven.", 3) == "One two.");
    auto cut = truncate_summary("nopunctuationhereatallforsure", 2);
    CHECK(cut == "nopunctu");
    std::string accents = "\xc3\xa9\xc3\xa9\xc3\xa9\xc3\xa9\xc3\xa9";
    CHECK(truncate_summary(accents, 1) == "\xc3\xa9\xc3\xa9");
    std::mt19937_64 rng(2);
    for (int i = 0; i < 500; ++i) {
        std::string s;
        for (int k = rng() % 300; k > 0; --k) s.push_back("ab .\xc3\xa9"[rng() % 6]);
        auto cap = 1 + rng() % 40;
        auto t = truncate_summary(s, cap);
        CHECK(llm::count_tokens(t) <= cap);
        CHECK(std::string_view(s).find(t) != std::string_view::npos);
    }
}

TEST_CASE("workers drain the queue exactly once") {
    testing::TempDir tmp;
    std::mt19937_64 rng(4);
    unsigned n = 60;
    std::vector<std::pair<unsigned, unsigned>> edges;
    for (unsigned k = 0; k < 90; ++k) edges.emplace_back(1 + rng() % n, 1 + rng() % n);
    auto g = graph_of(n, edges);
    AnalysisQueue q(tmp / "store.db");
    q.enqueue_all(g, {});
    auto comp = components(g);
    std::mutex mu;
    std::vector<std::string> finished;
    std::atomic<int> violations{0};
    auto work = [&] {
        while (auto e = q.next()) {
            for (const auto& c : g.callees(e->function_id)) {
                if (comp.at(c) != comp.at(e->function_id) && q.entry(c)->state != EntryState::done) ++violations;
            }
            q.complete(*e, record(e->function_id, "ok."));
            std::lock_guard lock(mu);
            finished.push_back(e->function_id);
        }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < 4; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    CHECK(violations == 0);
    CHECK(finished.size() == n);
    CHECK(std::set<std::string>(finished.begin(), finished.end()).size() == n);
    CHECK(q.coverage_report().done == n);
}
