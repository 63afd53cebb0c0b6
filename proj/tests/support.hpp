#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

// Shared helpers for the test suites.

namespace testsup {

/// Self-cleaning unique directory under the system temp dir.
class TempDir {
public:
    TempDir() {
        static std::atomic<uint64_t> seq{0};
        auto base = std::filesystem::temp_directory_path();
        path_ = base / ("bioqa-test-" + std::to_string(::getpid()) + "-" +
                        std::to_string(seq.fetch_add(1)));
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

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

inline std::filesystem::path data_dir() { return BIOQA_TEST_DATA_DIR; }

} // namespace testsup
