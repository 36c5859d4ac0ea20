#include "vulbin/decomp/adapter.hpp"

#include "vulbin/common/error.hpp"
#include "vulbin/common/text.hpp"
#include "vulbin/llm/tokens.hpp"

#include <json.hpp>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>
#include <fcntl.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <thread>

namespace vulbin::decomp {

namespace fs = std::filesystem;
using nlohmann::json;

void CallGraph::add_node(const std::string& id) { nodes_.insert(id); }

void CallGraph::add_edge(const std::string& caller, const std::string& callee) {
    if (!nodes_.contains(caller) || !nodes_.contains(callee)) {
        throw Error(ErrorCode::UnknownFunction, "edge endpoint not in graph: " + caller + " -> " + callee);
    }
    edges_.emplace(caller, callee);
    out_[caller].insert(callee);
}

std::vector<std::string> CallGraph::callees(const std::string& id) const {
    auto it = out_.find(id);
    if (it == out_.end()) return {};
    return {it->second.begin(), it->second.end()};
}

void DecompilerBackendConfig::validate() const {
    if (timeout_seconds == 0) throw Error(ErrorCode::ConfigError, "decompiler.timeout_seconds must be positive");
    switch (kind) {
    case BackendKind::external_tool:
        if (command_template.empty()) throw Error(ErrorCode::ConfigError, "external_tool needs command_template");
        if (!fixture_dir.empty()) throw Error(ErrorCode::ConfigError, "external_tool must not set fixture_dir");
        break;
    case BackendKind::fixture:
        if (fixture_dir.empty()) throw Error(ErrorCode::ConfigError, "fixture backend needs fixture_dir");
        if (!command_template.empty()) throw Error(ErrorCode::ConfigError, "fixture backend must not set command_template");
        break;
    }
}

std::string make_function_id(std::string_view content_hash, std::uint64_t address) {
    return std::string(content_hash) + ":" + text::hex_address(address);
}

std::uint64_t address_of(std::string_view function_id) {
    auto colon = function_id.rfind(':');
    if (colon == std::string_view::npos) throw Error(ErrorCode::ParseError, "malformed function id");
    return text::parse_address(function_id.substr(colon + 1));
}

std::string synthetic_name(std::uint64_t address) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "FUN_%08llx", static_cast<unsigned long long>(address));
    return buf;
}

// ---- normalization ----------------------------------------------------------

namespace {

std::string unify_line_endings(std::string_view in) {
    std::string out;
    out.reserve(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < in.size() && in[i + 1] == '\n') ++i;
        } else {
            out.push_back(in[i]);
        }
    }
    return out;
}

std::string expand_tabs(std::string_view in, std::size_t stop = 4) {
    std::string out;
    out.reserve(in.size());
    std::size_t column = 0;
    for (char c : in) {
        if (c == '\t') {
            std::size_t pad = stop - column % stop;
            out.append(pad, ' ');
            column += pad;
        } else {
            out.push_back(c);
            column = c == '\n' ? 0 : column + 1;
        }
    }
    return out;
}

// Byte offset where the first code line begins.
std::size_t banner_end(std::string_view s) {
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto nl = s.find('\n', pos);
        std::size_t line_end = nl == std::string_view::npos ? s.size() : nl;
        auto line = text::trim(s.substr(pos, line_end - pos));
        std::size_t next = nl == std::string_view::npos ? s.size() : nl + 1;
        if (line.empty() || line.starts_with("//")) {
            pos = next;
            continue;
        }
        if (line.starts_with("/*")) {
            auto open = s.find("/*", pos);
            auto close = s.find("*/", open + 2);
            if (close == std::string_view::npos) return pos;
            auto close_nl = s.find('\n', close);
            std::size_t close_end = close_nl == std::string_view::npos ? s.size() : close_nl;
            if (!text::trim(s.substr(close + 2, close_end - close - 2)).empty()) return pos;
            pos = close_nl == std::string_view::npos ? s.size() : close_nl + 1;
            continue;
        }
        return pos;
    }
    return pos;
}

}  // namespace

std::string normalize_pseudo_code(std::string_view text) {
    std::string s = expand_tabs(unify_line_endings(text));
    return s.substr(banner_end(s));
}

// ---- backend output contract ------------------------------------------------

Decompilation read_backend_output(const fs::path& dir, std::string_view content_hash) {
    struct Meta {
        std::string name;
        std::optional<std::uint64_t> size;
        unsigned indirect = 0;
    };
    std::map<std::uint64_t, Meta> meta;
    if (fs::exists(dir / "functions.json")) {
        try {
            auto j = json::parse(text::read_file(dir / "functions.json"));
            for (const auto& f : j) {
                Meta m;
                m.name = f.value("name", "");
                if (f.contains("size")) m.size = f.at("size").get<std::uint64_t>();
                m.indirect = f.value("indirect_calls", 0u);
                meta[text::parse_address(f.at("address").get<std::string>())] = m;
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::BackendLaunchFailure, "malformed functions.json: " + std::string(e.what()));
        }
    }

    std::map<std::uint64_t, std::string> code;
    if (fs::is_directory(dir)) {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".c") continue;
            std::uint64_t addr;
            try {
                addr = text::parse_address(entry.path().stem().string());
            } catch (const Error&) {
                continue;  // not a per-function file
            }
            code[addr] = normalize_pseudo_code(text::read_file(entry.path()));
        }
    }

    std::vector<std::pair<std::uint64_t, std::uint64_t>> edges;
    if (fs::exists(dir / "edges.json")) {
        try {
            auto j = json::parse(text::read_file(dir / "edges.json"));
            for (const auto& e : j) {
                edges.emplace_back(text::parse_address(e.at(0).get<std::string>()),
                                   text::parse_address(e.at(1).get<std::string>()));
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::BackendLaunchFailure, "malformed edges.json: " + std::string(e.what()));
        }
    }

    Decompilation out;
    for (auto& [addr, pseudo] : code) {
        RawFunction f;
        f.entry_address = addr;
        f.function_id = make_function_id(content_hash, addr);
        auto m = meta.find(addr);
        f.synthetic_name = m != meta.end() && !m->second.name.empty() ? m->second.name : synthetic_name(addr);
        if (m != meta.end()) {
            f.size_bytes = m->second.size;
            f.unresolved_indirect_calls = m->second.indirect;
        }
        f.pseudo_code = std::move(pseudo);
        f.token_estimate = llm::count_tokens(f.pseudo_code);
        bool tiny = f.size_bytes && *f.size_bytes < kMinFunctionBytes;
        if (tiny || text::trim(f.pseudo_code).empty()) f.status = FunctionStatus::skipped;
        out.graph.add_node(f.function_id);
        out.functions.push_back(std::move(f));
    }
    if (out.functions.empty()) {
        throw Error(ErrorCode::EmptyOutput, "backend produced no functions in " + dir.string());
    }

    std::map<std::uint64_t, std::size_t> index;
    for (std::size_t i = 0; i < out.functions.size(); ++i) index[out.functions[i].entry_address] = i;
    for (auto [from, to] : edges) {
        auto caller = index.find(from);
        if (caller == index.end()) continue;
        auto& callees = out.functions[caller->second].callee_addresses;
        callees.push_back(to);
        auto callee = index.find(to);
        if (callee != index.end()) {
            out.graph.add_edge(out.functions[caller->second].function_id, out.functions[callee->second].function_id);
        }
    }
    for (auto& f : out.functions) {
        std::sort(f.callee_addresses.begin(), f.callee_addresses.end());
        f.callee_addresses.erase(std::unique(f.callee_addresses.begin(), f.callee_addresses.end()),
                                 f.callee_addresses.end());
    }
    return out;
}

fs::path resolve_fixture_dir(const fs::path& fixture_dir, const ingest::BinaryArtifact& artifact) {
    std::error_code ec;
    if (fs::is_directory(fixture_dir / artifact.content_hash, ec)) return fixture_dir / artifact.content_hash;
    if (!artifact.path.empty() && fs::is_directory(fixture_dir / artifact.path.stem(), ec)) {
        return fixture_dir / artifact.path.stem();
    }
    return fixture_dir;
}

// ---- external tool ------------------------------------------------------------

namespace {

std::string shell_quote(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out.push_back(c);
    }
    return out + "'";
}

std::string substitute(std::string tmpl, std::string_view key, std::string_view value) {
    for (auto pos = tmpl.find(key); pos != std::string::npos; pos = tmpl.find(key, pos + value.size())) {
        tmpl.replace(pos, key.size(), value);
    }
    return tmpl;
}

void run_tool(const std::string& command, const fs::path& log_path, unsigned timeout_seconds) {
    pid_t pid = fork();
    if (pid < 0) throw Error(ErrorCode::BackendLaunchFailure, "fork failed");
    if (pid == 0) {
        setpgid(0, 0);
        int fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd >= 0) {
            dup2(fd, STDOUT_FILENO);
            dup2(fd, STDERR_FILENO);
            ::close(fd);
        }
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid, pid);
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(timeout_seconds);
    int status = 0;
    for (;;) {
        pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0) throw Error(ErrorCode::BackendLaunchFailure, "waitpid failed");
        if (std::chrono::steady_clock::now() >= deadline) {
            killpg(pid, SIGKILL);
            waitpid(pid, &status, 0);
            throw Error(ErrorCode::BackendTimeout,
                        "decompiler exceeded " + std::to_string(timeout_seconds) + "s: " + command);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    if (!WIFEXITED(status)) throw Error(ErrorCode::BackendLaunchFailure, "decompiler terminated by signal");
    int code = WEXITSTATUS(status);
    if (code == 127) throw Error(ErrorCode::BackendLaunchFailure, "decompiler command not found: " + command);
    if (code != 0) {
        throw Error(ErrorCode::BackendLaunchFailure, "decompiler exited with status " + std::to_string(code));
    }
}

fs::path unique_temp_dir() {
    std::random_device rd;
    auto dir = fs::temp_directory_path() / ("vulbin-decomp-" + std::to_string(getpid()) + "-" + std::to_string(rd()));
    fs::create_directories(dir);
    return dir;
}

}  // namespace

Decompilation decompile(const ingest::BinaryArtifact& artifact, const DecompilerBackendConfig& cfg,
                        const fs::path& work_dir) {
    if (!artifact.supported()) {
        throw Error(ErrorCode::UnsupportedFormat, "refusing to decompile unknown container: " + artifact.path.string());
    }
    if (cfg.kind == BackendKind::fixture) {
        cfg.validate();
        return read_backend_output(resolve_fixture_dir(cfg.fixture_dir, artifact), artifact.content_hash);
    }

    std::string tmpl = cfg.command_template;
    if (const char* env = std::getenv(std::string(kDecompilerEnvVar).c_str()); env && *env) tmpl = env;
    if (tmpl.empty()) throw Error(ErrorCode::ConfigError, "no decompiler command configured");

    bool temporary = work_dir.empty();
    fs::path out_dir = temporary ? unique_temp_dir() : work_dir / artifact.content_hash;
    fs::create_directories(out_dir);
    std::string command = substitute(substitute(tmpl, "{input_path}", shell_quote(fs::absolute(artifact.path).string())),
                                     "{output_dir}", shell_quote(fs::absolute(out_dir).string()));
    try {
        run_tool(command, out_dir / "decompiler.log", cfg.timeout_seconds);
        auto result = read_backend_output(out_dir, artifact.content_hash);
        if (temporary) fs::remove_all(out_dir);
        return result;
    } catch (...) {
        if (temporary) {
            std::error_code ec;
            fs::remove_all(out_dir, ec);
        }
        throw;
    }
}

}  // namespace vulbin::decomp
