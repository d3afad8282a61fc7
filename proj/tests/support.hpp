#pragma once

#include "tutorloop/text_util.hpp"

#include <filesystem>
#include <string>

namespace tutorloop::testing {

inline std::filesystem::path data_dir() { return TUTORLOOP_DATA_DIR; }

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() : path_(std::filesystem::temp_directory_path() / ("tutorloop-test-" + random_token_128())) {
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

}  // namespace tutorloop::testing
