#include "vulbin/llm/protocol.hpp"

#include "vulbin/common/text.hpp"

namespace vulbin::llm::protocol {

std::string task_line(std::string_view task) { return std::string(kTaskPrefix) + std::string(task); }

std::optional<std::string> task_of(std::string_view system_message) {
    auto lines = text::split_lines(system_message);
    if (lines.empty() || !lines.front().starts_with(kTaskPrefix)) return std::nullopt;
    return std::string(text::trim(lines.front().substr(kTaskPrefix.size())));
}

std::vector<std::string> fenced_blocks(std::string_view text) {
    std::vector<std::string> blocks;
    std::size_t pos = 0;
    for (;;) {
        auto open = text.find("```", pos);
        while (open != std::string_view::npos && open > 0 && text[open - 1] != '\n') open = text.find("```", open + 3);
        if (open == std::string_view::npos) break;
        auto body_start = text.find('\n', open);
        if (body_start == std::string_view::npos) break;
        ++body_start;
        auto close = text.find("```", body_start);
        if (close == std::string_view::npos) break;
        // Closing fence must start a line.
        while (close != std::string_view::npos && close > 0 && text[close - 1] != '\n') {
            close = text.find("```", close + 3);
        }
        if (close == std::string_view::npos) break;
        blocks.emplace_back(text.substr(body_start, close - body_start));
        auto after = text.find('\n', close);
        pos = after == std::string_view::npos ? text.size() : after + 1;
    }
    return blocks;
}

std::optional<std::string> last_fenced_block(std::string_view text) {
    auto blocks = fenced_blocks(text);
    if (blocks.empty()) return std::nullopt;
    return blocks.back();
}

std::string fence(std::string_view body, std::string_view lang) {
    std::string out = "```" + std::string(lang) + "\n" + std::string(body);
    if (out.back() != '\n') out.push_back('\n');
    return out + "```";
}

}  // namespace vulbin::llm::protocol
