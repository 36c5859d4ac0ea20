#pragma once

#include "vulbin/common/error.hpp"
#include "vulbin/common/text.hpp"

#include <doctest.h>
#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace testing {

inline std::filesystem::path fixtures() { return VULBIN_FIXTURES; }
inline std::filesystem::path kb_dir() { return VULBIN_KB; }

inline const nlohmann::json& oracle() {
    static const nlohmann::json j = nlohmann::json::parse(vulbin::text::read_file(fixtures() / "oracle.json"));
    return j;
}

// Removed with its contents on scope exit.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("vulbin-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing

// Runs `expr` and checks it throws vulbin::Error with the given code.
#define CHECK_ERROR_CODE(expr, expected_code)                                   \
    do {                                                                        \
        bool thrown_ = false;                                                   \
        try {                                                                   \
            (void)(expr);                                                       \
        } catch (const vulbin::Error& e_) {                                     \
            thrown_ = true;                                                     \
            CHECK_MESSAGE(e_.code() == (expected_code), e_.what());             \
        }                                                                       \
        CHECK_MESSAGE(thrown_, "no vulbin::Error from " #expr);                 \
    } while (0)
