#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <sys/wait.h>

namespace postasr::testing {

inline std::filesystem::path fixture(const std::string &name) {
    return std::filesystem::path{ POSTASR_TEST_DATA } / "fixtures" / name;
}

inline std::filesystem::path golden(const std::string &name) {
    return std::filesystem::path{ POSTASR_TEST_DATA } / "golden" / name;
}

inline std::string read_all(const std::filesystem::path &path) {
    std::ifstream in{ path, std::ios::binary };
    return { std::istreambuf_iterator<char>{ in }, std::istreambuf_iterator<char>{} };
}

inline void write_all(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out{ path, std::ios::binary | std::ios::trunc };
    out << text;
}

/// Runs the CLI through the shell and returns its exit status; output goes to `log` when given.
inline int run_cli(const std::string &args, const std::filesystem::path &log = {}) {
    std::string cmd = std::string{ "\"" } + POSTASR_CLI + "\" " + args;
    cmd += log.empty() ? " >/dev/null 2>&1" : " >\"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Fresh directory under the system temp dir, removed on destruction.
class temp_dir {
  public:
    temp_dir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("postasr-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~temp_dir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    temp_dir(const temp_dir &) = delete;
    temp_dir &operator=(const temp_dir &) = delete;

    const std::filesystem::path &path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

}  // namespace postasr::testing
