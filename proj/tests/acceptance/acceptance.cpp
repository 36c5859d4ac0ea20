// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when any fails.

#include "vulbin/common/text.hpp"
#include "vulbin/decomp/adapter.hpp"
#include "vulbin/eval/eval.hpp"
#include "vulbin/lang/lexer.hpp"
#include "vulbin/llm/client.hpp"
#include "vulbin/llm/tokens.hpp"
#include "vulbin/memory/queue.hpp"
#include "vulbin/prominence/enhancer.hpp"
#include "vulbin/reasoner/classifier.hpp"

#include <json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stack>
#include <string>
#include <vector>

using namespace vulbin;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = VULBIN_FIXTURES;
const fs::path kKb = VULBIN_KB;
const std::string kCli = VULBIN_CLI;

// Frozen output of tests/fixtures/tools/similarity_oracle.py.
constexpr double kOracleCosine = 0.979713;

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects the first few failure messages of a criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (ok) return;
        ++failures_;
        if (failures_ <= 5) messages_.push_back(what);
    }
    Outcome outcome(std::string summary) const {
        if (failures_ == 0) return {true, std::move(summary)};
        return {false, std::to_string(failures_) + " failure(s): " + text::join(messages_, "; ")};
    }

private:
    int failures_ = 0;
    std::vector<std::string> messages_;
};

class ScratchDir {
public:
    ScratchDir() {
        path_ = fs::temp_directory_path() / ("vulbin-acceptance-" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s.precision(digits);
    s << std::fixed << v;
    return s.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

int run_cli(const std::string& args, const fs::path& log) {
    std::string cmd = kCli + " " + args + " > " + q(log) + " 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 1. Confusion counts to published percentages.
Outcome metric_oracle() {
    Check c;
    struct Row {
        const char* label;
        eval::ConfusionCounts counts;
        double accuracy, precision, f1;
    };
    const Row rows[] = {{"LATTE CWE-78", {892, 68, 960, 0}, 96.46, 100.00, 96.33},
                        {"Vul-BinLLM CWE-134", {1345, 0, 3998, 14}, 99.74, 98.97, 99.48}};
    std::vector<std::string> got;
    for (const auto& r : rows) {
        auto m = eval::metrics(r.counts);
        double a = eval::percent(m.accuracy), p = eval::percent(m.precision), f = eval::percent(m.f1);
        c.expect(std::abs(a - r.accuracy) <= 0.01, std::string(r.label) + " accuracy " + fmt(a, 2));
        c.expect(std::abs(p - r.precision) <= 0.01, std::string(r.label) + " precision " + fmt(p, 2));
        c.expect(std::abs(f - r.f1) <= 0.01, std::string(r.label) + " f1 " + fmt(f, 2));
        got.push_back(fmt(a, 2) + "/" + fmt(p, 2) + "/" + fmt(f, 2));
    }
    return c.outcome(text::join(got, ", "));
}

std::vector<decomp::RawFunction> fixture_functions() {
    std::vector<fs::path> dirs;
    for (const char* d : {"prog20", "samples", "hello-stripped", "failing"}) dirs.push_back(kFixtures / "decomp" / d);
    std::vector<fs::path> juliet;
    for (const auto& e : fs::directory_iterator(kFixtures / "juliet" / "decomp")) juliet.push_back(e.path());
    std::sort(juliet.begin(), juliet.end());
    dirs.insert(dirs.end(), juliet.begin(), juliet.end());

    std::vector<decomp::RawFunction> out;
    for (const auto& d : dirs) {
        auto dec = decomp::read_backend_output(d, d.filename().string());
        for (auto& f : dec.functions) {
            if (f.status == decomp::FunctionStatus::ok) out.push_back(std::move(f));
        }
    }
    return out;
}

// Replaces one code token of `code`; every variant changes the token stream.
std::string mutate(const std::string& code, std::mt19937_64& rng) {
    auto tokens = lang::code_tokens(code, lang::LexMode::Strict);
    const auto& t = tokens[rng() % tokens.size()];
    std::string text(t.text);
    std::string replacement;
    switch (rng() % 4) {
    case 0: replacement = ""; break;                    // delete
    case 1: replacement = text + " " + text; break;     // duplicate
    case 2: replacement = text + ";\n  mutated = 0;"; break;  // inject a statement
    default:
        switch (t.kind) {
        case lang::TokenKind::Identifier: replacement = text + "_m"; break;
        case lang::TokenKind::Keyword: replacement = text == "int" ? "long" : "int"; break;
        case lang::TokenKind::Number: replacement = text == "1" ? "2" : "1"; break;
        case lang::TokenKind::String: replacement = "\"mutated\""; break;
        case lang::TokenKind::Char: replacement = text == "'m'" ? "'n'" : "'m'"; break;
        default: replacement = text == "+" ? "-" : "+"; break;
        }
    }
    std::string out = code;
    out.replace(t.offset, t.text.size(), replacement);
    return out;
}

// 2. Every plan output validates; every token mutation is rejected.
Outcome preservation_suite() {
    Check c;
    auto functions = fixture_functions();
    c.expect(functions.size() >= 50, "only " + std::to_string(functions.size()) + " fixture functions");
    auto client = llm::LlmClient::from_config(llm::LlmConfig{});
    using prominence::Action;
    const std::vector<Action> all = {Action::RenameVariables, Action::RecoverStructs, Action::AnnotateVulnerabilities};

    std::mt19937_64 rng(2024);
    std::size_t outputs = 0, mutations = 0, rejected = 0;
    for (const auto& raw : functions) {
        std::vector<prominence::OptimizationPlan> plans;
        for (unsigned mask = 0; mask < 8; ++mask) {
            prominence::OptimizationPlan plan;
            for (unsigned b = 0; b < 3; ++b) {
                if (mask & (1u << b)) plan.actions.push_back(all[b]);
            }
            plans.push_back(plan);
        }
        plans.push_back(prominence::decide_optimizations(raw, *client));
        prominence::EnhancedFunction richest;
        for (const auto& plan : plans) {
            auto e = prominence::apply_plan(raw, plan, *client);
            ++outputs;
            c.expect(!e.rejected && prominence::validate_preservation(raw, e),
                     raw.synthetic_name + " plan of " + std::to_string(plan.actions.size()) + " actions rejected");
            if (plan.actions.size() == 3) richest = e;
        }
        for (int k = 0; k < 12; ++k) {
            auto m = richest;
            m.code = mutate(richest.code, rng);
            ++mutations;
            bool ok = prominence::validate_preservation(raw, m);
            rejected += !ok;
            c.expect(!ok, raw.synthetic_name + " accepted a mutation");
        }
    }
    c.expect(mutations >= 500, "only " + std::to_string(mutations) + " mutations");
    return c.outcome(std::to_string(functions.size()) + " functions, " + std::to_string(outputs) + " plan outputs accepted, " +
                     std::to_string(rejected) + "/" + std::to_string(mutations) + " mutations rejected");
}

struct RandomGraph {
    std::vector<std::string> ids;
    std::vector<std::vector<std::size_t>> adj;
    decomp::CallGraph graph;
};

RandomGraph random_graph(std::mt19937_64& rng, std::size_t max_n) {
    RandomGraph g;
    std::size_t n = 1 + rng() % max_n;
    std::set<std::uint64_t> addrs;
    while (addrs.size() < n) addrs.insert(0x400000 + (rng() % 0x100000) * 0x10);
    std::vector<std::uint64_t> shuffled(addrs.begin(), addrs.end());
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (auto a : shuffled) {
        g.ids.push_back(decomp::make_function_id("acc", a));
        g.graph.add_node(g.ids.back());
    }
    g.adj.resize(n);
    std::size_t m = rng() % (2 * n + 1);
    for (std::size_t k = 0; k < m; ++k) {
        std::size_t a = rng() % n, b = rng() % n;
        g.adj[a].push_back(b);
        g.graph.add_edge(g.ids[a], g.ids[b]);
    }
    return g;
}

// Kosaraju SCCs, iterative.
std::vector<std::size_t> scc_oracle(const std::vector<std::vector<std::size_t>>& adj) {
    const std::size_t n = adj.size();
    std::vector<std::vector<std::size_t>> radj(n);
    for (std::size_t u = 0; u < n; ++u) {
        for (auto v : adj[u]) radj[v].push_back(u);
    }
    std::vector<bool> seen(n, false);
    std::vector<std::size_t> finish;
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        std::stack<std::pair<std::size_t, std::size_t>> st;
        st.push({s, 0});
        seen[s] = true;
        while (!st.empty()) {
            auto& [u, i] = st.top();
            if (i < adj[u].size()) {
                auto v = adj[u][i++];
                if (!seen[v]) {
                    seen[v] = true;
                    st.push({v, 0});
                }
            } else {
                finish.push_back(u);
                st.pop();
            }
        }
    }
    std::vector<std::size_t> comp(n, SIZE_MAX);
    std::size_t next = 0;
    for (auto it = finish.rbegin(); it != finish.rend(); ++it) {
        if (comp[*it] != SIZE_MAX) continue;
        std::vector<std::size_t> todo{*it};
        comp[*it] = next;
        while (!todo.empty()) {
            auto u = todo.back();
            todo.pop_back();
            for (auto v : radj[u]) {
                if (comp[v] == SIZE_MAX) {
                    comp[v] = next;
                    todo.push_back(v);
                }
            }
        }
        ++next;
    }
    return comp;
}

// Kahn's algorithm on the condensation with edges reversed (callee first).
std::vector<std::size_t> kahn_callee_first(const std::vector<std::vector<std::size_t>>& adj,
                                           const std::vector<std::size_t>& comp) {
    std::size_t k = *std::max_element(comp.begin(), comp.end()) + 1;
    std::vector<std::set<std::size_t>> callers(k);
    std::vector<std::size_t> pending_callees(k, 0);
    for (std::size_t u = 0; u < adj.size(); ++u) {
        for (auto v : adj[u]) {
            if (comp[u] != comp[v] && callers[comp[v]].insert(comp[u]).second) ++pending_callees[comp[u]];
        }
    }
    std::vector<std::size_t> ready, order;
    for (std::size_t c = 0; c < k; ++c) {
        if (pending_callees[c] == 0) ready.push_back(c);
    }
    while (!ready.empty()) {
        auto c = ready.back();
        ready.pop_back();
        order.push_back(c);
        for (auto caller : callers[c]) {
            if (--pending_callees[caller] == 0) ready.push_back(caller);
        }
    }
    return order;  // shorter than k only if the condensation had a cycle
}

// 3. Callee-first dispatch and termination under failures.
Outcome queue_properties() {
    Check c;
    std::mt19937_64 rng(77);
    std::size_t simulated = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto g = random_graph(rng, 200);
        const std::size_t n = g.ids.size();
        auto comp = scc_oracle(g.adj);
        auto kahn = kahn_callee_first(g.adj, comp);
        std::size_t k = *std::max_element(comp.begin(), comp.end()) + 1;
        c.expect(kahn.size() == k, "oracle condensation is cyclic");

        std::set<std::string> skip;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng() % 10 == 0) skip.insert(g.ids[i]);
        }
        memory::QueueOptions opts{static_cast<unsigned>(rng() % 4), true, 256};
        memory::AnalysisQueue queue{std::string(memory::kInMemory), opts};
        auto entries = queue.enqueue_all(g.graph, skip);
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < entries.size(); ++i) pos[entries[i].function_id] = i;
        c.expect(entries.size() == n && pos.size() == n, "enqueue_all is not a permutation");
        if (pos.size() != n) continue;

        // Same partition as the oracle.
        auto impl = memory::components(g.graph);
        for (std::size_t u = 0; u < n; ++u) {
            for (std::size_t v = u + 1; v < n; ++v) {
                if ((comp[u] == comp[v]) != (impl.at(g.ids[u]) == impl.at(g.ids[v]))) {
                    c.expect(false, "component partition differs from the oracle");
                    u = n;
                    break;
                }
            }
        }
        // Oracle order position of each component.
        std::vector<std::size_t> kahn_pos(k);
        for (std::size_t i = 0; i < kahn.size(); ++i) kahn_pos[kahn[i]] = i;
        for (std::size_t u = 0; u < n; ++u) {
            for (auto v : g.adj[u]) {
                if (comp[u] == comp[v]) continue;
                c.expect(pos[g.ids[v]] < pos[g.ids[u]], "caller dispatched before callee");
                c.expect(kahn_pos[comp[v]] < kahn_pos[comp[u]], "oracle order inconsistent");
            }
        }

        // Single-worker run with random failures.
        std::size_t steps = 0;
        while (auto e = queue.try_next()) {
            if (++steps > 10 * n + 10) break;
            if (rng() % 3 == 0) {
                queue.fail(*e, "simulated");
            } else {
                memory::AnalysisRecord r;
                r.function_id = e->function_id;
                r.summary = "ok.";
                queue.complete(*e, r);
            }
        }
        auto cov = queue.coverage_report();
        c.expect(queue.is_terminal(), "run stopped with pending entries");
        c.expect(cov.done + cov.failed + cov.skipped == n, "terminal counts do not add up");
        c.expect(cov.skipped == skip.size(), "skip count differs");
        ++simulated;
    }
    return c.outcome("1000 graphs checked against the oracle, " + std::to_string(simulated) + " runs terminated");
}

// 4. Context bundles never exceed their budget.
Outcome context_budget() {
    Check c;
    std::mt19937_64 rng(31);
    const std::uint64_t budgets[] = {512, 2048, 8192};
    std::size_t states = 0, fetches = 0, max_items = 0;
    while (states < 10000) {
        auto g = random_graph(rng, 40);
        memory::AnalysisQueue queue{std::string(memory::kInMemory), memory::QueueOptions{1, false, 4096}};
        queue.enqueue_all(g.graph, {});
        auto check_state = [&] {
            ++states;
            const auto& target = g.ids[rng() % g.ids.size()];
            for (auto budget : budgets) {
                auto bundle = queue.fetch_context(target, budget);
                ++fetches;
                max_items = std::max(max_items, bundle.items.size());
                std::uint64_t sum = 0;
                std::set<std::string> seen;
                for (const auto& item : bundle.items) {
                    sum += llm::count_tokens(item.summary);
                    auto e = queue.entry(item.function_id);
                    c.expect(e && e->state == memory::EntryState::done, "context item not in done state");
                    c.expect(item.function_id != target, "context contains the function itself");
                    c.expect(seen.insert(item.function_id).second, "duplicate context item");
                }
                c.expect(sum == bundle.total_tokens, "token total mismatch");
                c.expect(bundle.total_tokens <= budget, "bundle over budget");
            }
        };
        check_state();
        std::vector<memory::QueueEntry> in_flight;
        while (states < 10000) {
            if (in_flight.empty() || rng() % 2 == 0) {
                if (auto e = queue.try_next()) in_flight.push_back(*e);
                else if (in_flight.empty()) break;
            } else {
                auto idx = rng() % in_flight.size();
                auto e = in_flight[idx];
                in_flight.erase(in_flight.begin() + static_cast<std::ptrdiff_t>(idx));
                if (rng() % 5 == 0) {
                    queue.fail(e, "simulated");
                } else {
                    memory::AnalysisRecord r;
                    r.function_id = e.function_id;
                    r.summary = std::string(rng() % 12000, 's') + ".";
                    if (rng() % 3 == 0) r.suspected.push_back({"CWE-78", 1.0});
                    queue.complete(e, r);
                }
            }
            check_state();
        }
    }
    return c.outcome(std::to_string(states) + " states, " + std::to_string(fetches) + " bundles, up to " +
                     std::to_string(max_items) + " items");
}

// 5. Byte-identical report.json across repeated runs and worker counts.
Outcome end_to_end_determinism(const fs::path& scratch) {
    Check c;
    const auto binary = kFixtures / "bin" / "prog20";
    const auto config = kFixtures / "configs" / "prog20.json";
    struct Run {
        std::string label;
        unsigned workers;
    };
    const std::vector<Run> runs = {{"a", 4}, {"b", 4}, {"c", 4}, {"w1", 1}, {"w4", 4}};
    std::string reference;
    std::size_t functions = 0;
    for (const auto& r : runs) {
        auto out = scratch / ("e2e-" + r.label);
        int code = run_cli("analyze " + q(binary) + " --config " + q(config) + " --output " + q(out) + " --workers " +
                               std::to_string(r.workers),
                           scratch / ("e2e-" + r.label + ".log"));
        c.expect(code == 0, "run " + r.label + " exited with " + std::to_string(code));
        if (code != 0) continue;
        auto report = text::read_file(out / "report.json");
        if (reference.empty()) {
            reference = report;
            functions = nlohmann::json::parse(report)["functions"].size();
        }
        c.expect(report == reference, "run " + r.label + " report differs");
    }
    return c.outcome(std::to_string(runs.size()) + " runs identical, " + std::to_string(functions) + " functions");
}

// 6. Planted-vulnerability mini corpus.
Outcome planted_recovery(const fs::path& scratch) {
    Check c;
    auto out = scratch / "juliet-eval";
    int code = run_cli("eval " + q(kFixtures / "juliet") + " " + q(kFixtures / "juliet" / "manifest.csv") + " --config " +
                           q(kFixtures / "configs" / "juliet.json") + " --output " + q(out),
                       scratch / "juliet-eval.log");
    c.expect(code == 0, "eval exited with " + std::to_string(code));
    if (code != 0) return c.outcome("");
    auto report = nlohmann::json::parse(text::read_file(out / "report.json"));
    eval::ConfusionCounts total;
    for (const auto& [cwe, row] : report["cwes"].items()) {
        const auto& k = row["counts"];
        total.tp += k["tp"].get<std::uint64_t>();
        total.fn += k["fn"].get<std::uint64_t>();
        total.tn += k["tn"].get<std::uint64_t>();
        total.fp += k["fp"].get<std::uint64_t>();
        total.missing += k["missing"].get<std::uint64_t>();
    }
    std::string got = "tp=" + std::to_string(total.tp) + " fn=" + std::to_string(total.fn) + " tn=" +
                      std::to_string(total.tn) + " fp=" + std::to_string(total.fp);
    c.expect(total == eval::ConfusionCounts{4, 0, 4, 0, 0}, got + " missing=" + std::to_string(total.missing));
    return c.outcome(got);
}

// 7. Oversized function split, analysed, reassembled.
Outcome chunking_soundness() {
    Check c;
    auto kb = reasoner::KnowledgeBase::load_dir(kKb);
    llm::LlmConfig cfg;
    cfg.max_context_tokens = 2048;
    cfg.max_reply_tokens = 256;
    auto client = llm::LlmClient::from_config(cfg);
    const auto budget = client->prompt_budget();

    std::string code = "void FUN_00402000(char *param_1)\n{\n  int local_c;\n\n";
    for (int i = 0; llm::count_tokens(code) < 5 * budget; ++i) {
        code += "  local_c = local_c + " + std::to_string(i) + ";\n  puts(\"step " + std::to_string(i) + "\");\n";
    }
    code += "  system(param_1);\n  return;\n}\n";

    reasoner::Classifier classifier(kb, *client, {});
    reasoner::FunctionInput fn{decomp::make_function_id("acc", 0x402000), "FUN_00402000", code};
    std::vector<reasoner::ChunkTrace> trace;
    auto verdicts = classifier.classify_chunked(fn, {"CWE-78"}, &trace);

    std::string joined;
    for (const auto& t : trace) joined += t.text;
    c.expect(trace.size() >= 5, "only " + std::to_string(trace.size()) + " chunks");
    c.expect(joined == code, "chunks do not reassemble the function");
    c.expect(!trace.empty() && trace.back().text.find("system(param_1)") != std::string::npos,
             "planted call is not in the final chunk");
    for (std::size_t i = 0; i < trace.size(); ++i) {
        bool last = i + 1 == trace.size();
        auto v = trace[i].verdicts.count("CWE-78") ? trace[i].verdicts.at("CWE-78") : reasoner::Verdict::invalid;
        c.expect(v == (last ? reasoner::Verdict::yes : reasoner::Verdict::no), "chunk " + std::to_string(i) + " verdict");
    }
    c.expect(verdicts.size() == 1 && verdicts[0].verdict == reasoner::Verdict::yes, "function verdict is not yes");

    // The public entry point takes the same path.
    auto direct = classifier.classify(fn, {"CWE-78"});
    c.expect(direct.size() == 1 && direct[0].verdict == reasoner::Verdict::yes, "classify missed the planted flag");
    return c.outcome(std::to_string(llm::count_tokens(code)) + " tokens vs budget " + std::to_string(budget) + ", " +
                     std::to_string(trace.size()) + " chunks, flag in the last");
}

// 8. Assembly similarity against the scripting oracle.
Outcome similarity_diagnostic() {
    Check c;
    auto a = text::read_file(kFixtures / "asm" / "CWE78_bad_01.s");
    auto b = text::read_file(kFixtures / "asm" / "CWE78_bad_02.s");
    auto self = eval::assembly_similarity(a, a);
    c.expect(self.cosine == 1.0 && self.levenshtein_norm == 1.0,
             "identical inputs gave " + fmt(self.cosine) + ", " + fmt(self.levenshtein_norm));
    auto s = eval::assembly_similarity(a, b);
    c.expect(std::abs(s.cosine - kOracleCosine) <= 0.05, "cosine " + fmt(s.cosine) + " vs oracle " + fmt(kOracleCosine));
    c.expect(s.cosine >= 0.9, "cosine " + fmt(s.cosine) + " is not near 98%");
    return c.outcome("cosine " + fmt(s.cosine) + " (oracle " + fmt(kOracleCosine) + "), levenshtein " +
                     fmt(s.levenshtein_norm));
}

}  // namespace

int main() {
    ScratchDir scratch;
    struct Criterion {
        const char* name;
        double limit_seconds;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"metric oracle", 1, metric_oracle},
        {"preservation suite", 30, preservation_suite},
        {"queue properties", 60, queue_properties},
        {"context budget", 30, context_budget},
        {"end-to-end determinism", 60, [&] { return end_to_end_determinism(scratch.path()); }},
        {"planted-vulnerability recovery", 60, [&] { return planted_recovery(scratch.path()); }},
        {"chunking soundness", 30, chunking_soundness},
        {"similarity diagnostic", 30, similarity_diagnostic},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& cr = criteria[i];
        auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = cr.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs > cr.limit_seconds) {
            o.pass = false;
            o.detail += "; took longer than " + fmt(cr.limit_seconds, 0) + " s";
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << cr.name << " (" << fmt(secs, 2)
                  << " s): " << o.detail << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
