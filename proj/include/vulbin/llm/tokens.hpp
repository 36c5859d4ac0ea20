#pragma once

#include <cstdint>
#include <string_view>

namespace vulbin::llm {

// Byte-based estimate: ceil(bytes / 4). Vendor independent and conservative.
constexpr std::uint64_t count_tokens(std::string_view text) noexcept { return (text.size() + 3) / 4; }

}  // namespace vulbin::llm
