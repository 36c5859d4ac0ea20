#include "support.hpp"

#include "vulbin/llm/client.hpp"
#include "vulbin/llm/mock_backend.hpp"
#include "vulbin/llm/protocol.hpp"

#include <httplib.h>

#include <random>
#include <thread>

using namespace vulbin;
using namespace vulbin::llm;
namespace p = vulbin::llm::protocol;

namespace {

// Scripted backend: pops one outcome per call.
class ScriptedBackend : public ChatBackend {
public:
    struct Step {
        std::string reply;
        int fail = 0;  // 0 ok, 1 transient, 2 permanent
    };
    explicit ScriptedBackend(std::vector<Step> steps, int* calls) : steps_(std::move(steps)), calls_(calls) {}
    std::string send(const std::vector<ChatMessage>&, const LlmConfig&) override {
        auto s = steps_.at(static_cast<std::size_t>((*calls_)++));
        if (s.fail) throw TransportError("scripted", s.fail == 1);
        return s.reply;
    }

private:
    std::vector<Step> steps_;
    int* calls_;
};

std::vector<ChatMessage> question(std::string code, std::string cwes) {
    return {{Role::system, p::task_line(p::kTaskClassify) + "\nAnswer per CWE."},
            {Role::user, "Function f:\n" + p::fence(code, "c") + "\n" + std::string(p::kCweListPrefix) + cwes}};
}

LlmConfig small_config() {
    LlmConfig c;
    c.max_context_tokens = 100;
    c.max_reply_tokens = 20;
    c.retry_base_delay_ms = 10;
    return c;
}

}  // namespace

TEST_CASE("count_tokens definition") {
    CHECK(count_tokens("") == 0);
    CHECK(count_tokens("12345678") == 2);
    CHECK(count_tokens("123456789") == 3);
    CHECK(count_tokens("a") == 1);
}

TEST_CASE("count_tokens is monotone and sub-additive on random strings") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 2000; ++i) {
        std::string a(rng() % 50, 'x'), b(rng() % 50, 'y');
        auto ab = count_tokens(a + b);
        CHECK(ab >= std::max(count_tokens(a), count_tokens(b)));
        CHECK(ab <= count_tokens(a) + count_tokens(b) + 1);
    }
}

TEST_CASE("message token count sums contents") {
    std::vector<ChatMessage> m = {{Role::system, "12345678"}, {Role::user, "1"}};
    CHECK(count_tokens(m) >= 3);
}

TEST_CASE("request hash depends on role and content") {
    std::vector<ChatMessage> a = {{Role::user, "x"}};
    std::vector<ChatMessage> b = {{Role::system, "x"}};
    CHECK(request_hash(a) != request_hash(b));
    CHECK(request_hash(a) == request_hash({{Role::user, "x"}}));
    CHECK(request_hash(a).size() == 64);
}

TEST_CASE("budget overflow is raised before any backend call") {
    int calls = 0;
    LlmClient client(small_config(), std::make_unique<ScriptedBackend>(std::vector<ScriptedBackend::Step>{{"ok"}}, &calls));
    CHECK(client.prompt_budget() == 80);
    CHECK_ERROR_CODE(client.complete({{Role::user, std::string(400, 'a')}}), ErrorCode::BudgetOverflow);
    CHECK(calls == 0);
    CHECK(client.complete({{Role::user, std::string(320, 'a')}}) == "ok");
}

TEST_CASE("transient failures retry with exponential backoff") {
    int calls = 0;
    std::vector<ScriptedBackend::Step> steps = {{"", 1}, {"", 1}, {"third time"}};
    LlmClient client(small_config(), std::make_unique<ScriptedBackend>(steps, &calls));
    std::vector<long> sleeps;
    client.set_sleep([&](std::chrono::milliseconds d) { sleeps.push_back(static_cast<long>(d.count())); });
    CHECK(client.complete({{Role::user, "hi"}}) == "third time");
    CHECK(calls == 3);
    CHECK(sleeps == std::vector<long>{10, 20});
}

TEST_CASE("retries are bounded") {
    int calls = 0;
    std::vector<ScriptedBackend::Step> steps(10, {"", 1});
    auto cfg = small_config();
    cfg.max_retries = 2;
    LlmClient client(cfg, std::make_unique<ScriptedBackend>(steps, &calls));
    client.set_sleep([](std::chrono::milliseconds) {});
    CHECK_ERROR_CODE(client.complete({{Role::user, "hi"}}), ErrorCode::TransportFailure);
    CHECK(calls == 3);
}

TEST_CASE("permanent failures are not retried") {
    int calls = 0;
    LlmClient client(small_config(), std::make_unique<ScriptedBackend>(std::vector<ScriptedBackend::Step>{{"", 2}}, &calls));
    try {
        client.complete({{Role::user, "hi"}});
        FAIL("expected a transport failure");
    } catch (const TransportError& e) {
        CHECK_FALSE(e.transient());
        CHECK(std::string(e.what()) == "TransportFailure: scripted (after 1 attempt)");
    }
    CHECK(calls == 1);
}

TEST_CASE("config validation") {
    LlmConfig c;
    CHECK_NOTHROW(c.validate());
    c.max_reply_tokens = c.max_context_tokens;
    CHECK_ERROR_CODE(c.validate(), ErrorCode::ConfigError);
    c = {};
    c.temperature = -0.5;
    CHECK_ERROR_CODE(c.validate(), ErrorCode::ConfigError);
    c = {};
    c.backend = BackendType::http_api;
    CHECK_ERROR_CODE(c.validate(), ErrorCode::ConfigError);
    c = {};
    c.backend = BackendType::replay;
    CHECK_ERROR_CODE(c.validate(), ErrorCode::ConfigError);
    c = {};
    c.requests_per_minute = 0;
    CHECK_ERROR_CODE(c.validate(), ErrorCode::ConfigError);
}

TEST_CASE("record then replay is byte-identical and offline") {
    testing::TempDir tmp;
    auto rec = small_config();
    rec.max_context_tokens = 4096;
    rec.record_path = tmp / "session.jsonl";
    std::vector<std::vector<ChatMessage>> requests = {question("system(cmd);", "CWE-78, CWE-121"),
                                                      question("puts(\"x\");", "CWE-134")};
    std::vector<std::string> replies;
    {
        auto client = LlmClient::from_config(rec);
        for (auto& r : requests) replies.push_back(client->complete(r));
    }
    auto rep = rec;
    rep.record_path.clear();
    rep.backend = BackendType::replay;
    rep.replay_path = tmp / "session.jsonl";
    for (int round = 0; round < 2; ++round) {
        auto client = LlmClient::from_config(rep);
        for (std::size_t i = 0; i < requests.size(); ++i) CHECK(client->complete(requests[i]) == replies[i]);
        CHECK_ERROR_CODE(client->complete(question("abort();", "CWE-78")), ErrorCode::ReplayMiss);
    }
    CHECK_FALSE(ReplayBackend(tmp / "session.jsonl").uses_network());
    CHECK(ReplayBackend(tmp / "session.jsonl").size() == 2);
}

TEST_CASE("malformed recordings name the line") {
    testing::TempDir tmp;
    text::write_file(tmp / "bad.jsonl", "{\"request_hash\":\"a\",\"reply\":\"b\"}\nnot json\n");
    try {
        ReplayBackend backend(tmp / "bad.jsonl");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("bad.jsonl:2") != std::string::npos);
    }
}

TEST_CASE("rate limiter never exceeds the per-minute quota") {
    using clock = std::chrono::steady_clock;
    auto now = clock::time_point{} + std::chrono::hours(1);
    std::vector<clock::time_point> granted;
    RateLimiter limiter(3, [&] { return now; }, [&](clock::duration d) { now += d; });
    for (int i = 0; i < 10; ++i) {
        limiter.acquire();
        granted.push_back(now);
        now += std::chrono::seconds(1);
    }
    for (std::size_t i = 0; i < granted.size(); ++i) {
        int in_window = 0;
        for (auto t : granted) in_window += (t >= granted[i] && t < granted[i] + std::chrono::seconds(60));
        CHECK(in_window <= 3);
    }
    CHECK(granted[3] - granted[0] >= std::chrono::seconds(60));
}

TEST_CASE("mock backend is a pure function of the messages") {
    MockBackend m;
    LlmConfig cfg;
    auto q = question("void f(char *p)\n{\n  char b[8];\n  strcpy(b,p);\n}\n", "CWE-121, CWE-78");
    auto a = m.send(q, cfg);
    CHECK(a == m.send(q, cfg));
    auto block = p::last_fenced_block(a);
    REQUIRE(block);
    CHECK(block->find("CWE-121:\nANSWER: yes") != std::string::npos);
    CHECK(block->find("CWE-78:\nANSWER: no") != std::string::npos);
    CHECK(block->find("unbounded copy") != std::string::npos);
}

TEST_CASE("mock backend fail marker") {
    MockBackend m;
    try {
        m.send(question("puts(\"VULBIN_MOCK_FAIL\");", "CWE-78"), {});
        FAIL("expected failure");
    } catch (const TransportError& e) {
        CHECK_FALSE(e.transient());
    }
}

TEST_CASE("mock client is safe under concurrent callers") {
    LlmConfig cfg;
    auto client = LlmClient::from_config(cfg);
    auto q = question("system(x);", "CWE-78");
    auto expected = client->complete(q);
    std::vector<std::thread> pool;
    std::atomic<int> mismatches{0};
    for (int t = 0; t < 4; ++t) {
        pool.emplace_back([&] {
            for (int i = 0; i < 50; ++i) mismatches += client->complete(q) != expected;
        });
    }
    for (auto& th : pool) th.join();
    CHECK(mismatches == 0);
    CHECK(client->requests_sent() == 201);
}

TEST_CASE("fenced block helpers") {
    std::string reply = "prose\n```c\nint a;\n```\nmore ``` inline\n```\nsecond\n```";
    auto blocks = p::fenced_blocks(reply);
    REQUIRE(blocks.size() == 2);
    CHECK(blocks[0] == "int a;\n");
    CHECK(blocks[1] == "second\n");
    CHECK(p::last_fenced_block("no fences")== std::nullopt);
    CHECK(p::fence("x") == "```\nx\n```");
    CHECK(p::fence("x\n", "c") == "```c\nx\n```");
    CHECK(p::task_of("TASK: rename-variables\nmore") == "rename-variables");
    CHECK_FALSE(p::task_of("hello"));
}

TEST_CASE("http backend speaks the chat-completion format") {
    httplib::Server server;
    std::atomic<int> hits{0};
    std::string seen_auth;
    nlohmann::json seen_body;
    std::mutex mu;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        int n = ++hits;
        {
            std::lock_guard lock(mu);
            seen_auth = req.get_header_value("Authorization");
            seen_body = nlohmann::json::parse(req.body);
        }
        auto last = seen_body["messages"].back()["content"].get<std::string>();
        if (last == "flaky" && n == 1) {
            res.status = 503;
            return;
        }
        if (last == "reject") {
            res.status = 400;
            return;
        }
        if (last == "garbage") {
            res.set_content("{\"nope\":1}", "application/json");
            return;
        }
        nlohmann::json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo " + last}}}}}}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    LlmConfig cfg;
    cfg.backend = BackendType::http_api;
    cfg.endpoint_url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.model_tag = "test-model";
    cfg.api_key_env = "VULBIN_TEST_KEY";
    cfg.retry_base_delay_ms = 1;
    ::setenv("VULBIN_TEST_KEY", "sekret", 1);
    auto client = LlmClient::from_config(cfg);

    CHECK(client->complete({{Role::system, "s"}, {Role::user, "hello"}}) == "echo hello");
    {
        std::lock_guard lock(mu);
        CHECK(seen_auth == "Bearer sekret");
        CHECK(seen_body["model"] == "test-model");
        CHECK(seen_body["temperature"] == 0.0);
        CHECK(seen_body["messages"].size() == 2);
        CHECK(seen_body["messages"][0]["role"] == "system");
    }
    hits = 0;
    CHECK(client->complete({{Role::user, "flaky"}}) == "echo flaky");
    CHECK(hits == 2);
    hits = 0;
    CHECK_ERROR_CODE(client->complete({{Role::user, "reject"}}), ErrorCode::TransportFailure);
    CHECK(hits == 1);
    CHECK_ERROR_CODE(client->complete({{Role::user, "garbage"}}), ErrorCode::TransportFailure);
    ::unsetenv("VULBIN_TEST_KEY");

    server.stop();
    th.join();

    // Nothing listening: transient, retried, then exhausted.
    cfg.max_retries = 1;
    auto dead = LlmClient::from_config(cfg);
    CHECK_ERROR_CODE(dead->complete({{Role::user, "x"}}), ErrorCode::TransportFailure);
}
