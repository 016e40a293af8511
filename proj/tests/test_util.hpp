#pragma once

// shared helpers for the test suites

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace testutil {

// unique scratch directory, removed on destruction
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& prefix = "llmbench_test") {
        const auto stamp =
            std::chrono::steady_clock::now().time_since_epoch().count();
        path = std::filesystem::temp_directory_path() /
               (prefix + "_" + std::to_string(::getpid()) + "_" + std::to_string(stamp));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path);
    f << content;
    return path;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// run a command (already shell-quoted), capture stdout+stderr, return exit code
struct CommandResult {
    int exit_code = -1;
    std::string output;
};

inline CommandResult run_command(const std::string& cmd) {
    CommandResult r;
    FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    size_t n;
    while ((n = ::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
    const int status = ::pclose(pipe);
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    return r;
}

inline std::string mmlu_dataset(size_t n) {
    std::ostringstream os;
    for (size_t i = 0; i < n; ++i) {
        os << R"({"question": "What is )" << i << R"( plus )" << i
           << R"(?", "choices": [")" << 2 * i << R"(", ")" << 2 * i + 1 << R"(", ")" << 2 * i + 2
           << R"(", ")" << 2 * i + 3 << R"("], "answer": "A"})"
           << "\n";
    }
    return os.str();
}

}  // namespace testutil
