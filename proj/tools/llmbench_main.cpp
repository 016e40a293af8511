// llmbench: drive an OpenAI-compatible endpoint through single/batch/server
// scenarios and report latency, throughput, resource, energy, cold-start and
// task-quality metrics.
//
// Subcommands: run, validate, mock-serve, compare, recompute.
// Exit codes: 0 ok, 1 run error, 2 config error, 3 QoS failure (--fail-on-qos).

#include <sys/resource.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "llmbench/config.hpp"
#include "llmbench/mockserver.hpp"
#include "llmbench/report.hpp"
#include "llmbench/runner.hpp"

namespace {

int g_log_level = 1;  // 0 quiet, 1 info, 2 debug

void log_info(const std::string& msg) {
    if (g_log_level >= 1) std::fprintf(stderr, "[llmbench] %s\n", msg.c_str());
}

void raise_fd_limit() {
    struct rlimit rl;
    if (::getrlimit(RLIMIT_NOFILE, &rl) == 0 && rl.rlim_cur < rl.rlim_max) {
        rl.rlim_cur = rl.rlim_max;
        ::setrlimit(RLIMIT_NOFILE, &rl);
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw llmbench::ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// dotted-key overrides: "telemetry.interval_s=0.05" patches the YAML tree
// before validation.
std::string apply_overrides(const std::string& text, const std::vector<std::string>& sets) {
    if (sets.empty()) return text;
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw llmbench::ConfigError("syntax error at line " + std::to_string(e.mark.line + 1) +
                                    ", column " + std::to_string(e.mark.column + 1) + ": " +
                                    e.msg);
    }
    for (const std::string& kv : sets) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw llmbench::ConfigError("--set expects key=value, got: " + kv);
        }
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        std::vector<std::string> parts;
        std::stringstream ks(key);
        std::string part;
        while (std::getline(ks, part, '.')) parts.push_back(part);
        if (parts.empty()) throw llmbench::ConfigError("--set has empty key");
        // walk to the parent node, then assign the scalar
        std::vector<YAML::Node> chain{root};
        for (size_t i = 0; i + 1 < parts.size(); ++i) {
            chain.push_back(chain.back()[parts[i]]);
        }
        chain.back()[parts.back()] = YAML::Load(value);
    }
    YAML::Emitter out;
    out.SetDoublePrecision(17);
    out << root;
    return out.c_str();
}

llmbench::MockServer* g_mock = nullptr;

void handle_sigint(int) {
    if (g_mock) g_mock->stop();
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& sets,
            const std::string& out_dir, std::optional<uint64_t> seed_override,
            bool fail_on_qos) {
    llmbench::BenchmarkConfig config;
    try {
        std::vector<std::string> all_sets = sets;
        if (seed_override) all_sets.push_back("seed=" + std::to_string(*seed_override));
        config = llmbench::parse_config(apply_overrides(read_file(config_path), all_sets));
    } catch (const llmbench::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }

    try {
        llmbench::RunOptions opts;
        opts.out_dir = out_dir;
        opts.fail_on_qos = fail_on_qos;
        log_info("running " + std::string(llmbench::to_string(config.scenario)) +
                 " scenario, task " + llmbench::to_string(config.task));
        const llmbench::RunResult result = llmbench::run_benchmark(config, opts);
        if (!result.message.empty()) std::fprintf(stderr, "%s\n", result.message.c_str());
        log_info("report written to " + result.out_dir);
        std::cout << llmbench::render_summary(result.doc);
        return result.exit_code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "run error: %s\n", e.what());
        return 1;
    }
}

int cmd_validate(const std::string& config_path, const std::vector<std::string>& sets) {
    try {
        const llmbench::BenchmarkConfig config =
            llmbench::parse_config(apply_overrides(read_file(config_path), sets));
        std::cout << llmbench::serialize_config(config);
        return 0;
    } catch (const llmbench::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }
}

int cmd_mock_serve(const std::string& profile_path, int port, const std::string& host) {
    try {
        llmbench::MockProfile profile = profile_path.empty()
                                            ? llmbench::MockProfile{}
                                            : llmbench::MockProfile::load(profile_path);
        llmbench::MockServer server(profile);
        g_mock = &server;
        std::signal(SIGINT, handle_sigint);
        std::signal(SIGTERM, handle_sigint);
        log_info("mock backend on " + host + ":" + std::to_string(port));
        if (!server.serve(host, port)) {
            std::fprintf(stderr, "mock-serve: cannot bind port %d (already in use?)\n", port);
            g_mock = nullptr;
            return 1;
        }
        const llmbench::MockStats stats = server.stats();
        std::printf("mock stats: total_requests=%llu max_in_flight=%llu rejected=%llu\n",
                    static_cast<unsigned long long>(stats.total_requests),
                    static_cast<unsigned long long>(stats.max_in_flight),
                    static_cast<unsigned long long>(stats.rejected));
        g_mock = nullptr;
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "mock-serve error: %s\n", e.what());
        return 1;
    }
}

int cmd_compare(const std::string& base_path, const std::vector<std::string>& variant_paths,
                const std::string& out_path) {
    try {
        const llmbench::LoadedRun base = llmbench::load_run(base_path);
        std::vector<llmbench::LoadedRun> variants;
        for (const auto& p : variant_paths) variants.push_back(llmbench::load_run(p));
        const llmbench::ComparisonResult result = llmbench::compare_runs(base, variants);
        std::cout << result.text;
        if (!out_path.empty()) {
            std::ofstream f(out_path);
            if (!f) throw llmbench::ReportError("cannot write " + out_path);
            f << result.doc.dump(2) << "\n";
        }
        return 0;
    } catch (const llmbench::ReportError& e) {
        std::fprintf(stderr, "compare error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "compare error: %s\n", e.what());
        return 1;
    }
}

int cmd_recompute(const std::string& report_path) {
    try {
        const llmbench::LoadedRun run = llmbench::load_run(report_path);
        const std::vector<std::string> mismatches = llmbench::recompute_check(run);
        if (mismatches.empty()) {
            std::printf("recompute: all aggregates reproduced from raw tables\n");
            return 0;
        }
        for (const auto& m : mismatches) std::fprintf(stderr, "recompute mismatch: %s\n", m.c_str());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "recompute error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    raise_fd_limit();
    ::signal(SIGPIPE, SIG_IGN);

    CLI::App app{"LLM inference benchmark harness for OpenAI-compatible endpoints"};
    app.require_subcommand(1);

    std::string log_level = "info";
    app.add_option("--log-level", log_level, "quiet|info|debug")->capture_default_str();

    // run
    auto* run = app.add_subcommand("run", "execute a benchmark run from a config file");
    std::string run_config, run_out_dir;
    std::vector<std::string> run_sets;
    bool fail_on_qos = false;
    std::optional<uint64_t> seed_override;
    run->add_option("config", run_config, "YAML config file")->required();
    run->add_option("--out-dir", run_out_dir, "output directory (default: ./run-<stamp>-...)");
    run->add_option("--set", run_sets, "dotted-key config override, e.g. --set samples=16");
    run->add_option("--seed", seed_override, "override the config seed");
    run->add_flag("--fail-on-qos", fail_on_qos, "exit 3 when QoS thresholds are violated");

    // validate
    auto* validate = app.add_subcommand("validate", "parse + validate a config, print it normalized");
    std::string val_config;
    std::vector<std::string> val_sets;
    validate->add_option("config", val_config, "YAML config file")->required();
    validate->add_option("--set", val_sets, "dotted-key config override");

    // mock-serve
    auto* mock = app.add_subcommand("mock-serve", "run the deterministic mock backend");
    std::string mock_profile, mock_host = "127.0.0.1";
    int mock_port = 8008;
    mock->add_option("--profile", mock_profile, "mock profile YAML (defaults apply if omitted)");
    mock->add_option("--port", mock_port, "listen port")->capture_default_str();
    mock->add_option("--host", mock_host, "listen host")->capture_default_str();

    // compare
    auto* compare = app.add_subcommand("compare", "baseline-relative deltas across run reports");
    std::string cmp_base, cmp_out;
    std::vector<std::string> cmp_variants;
    compare->add_option("base", cmp_base, "base run (report.json or run directory)")->required();
    compare->add_option("variants", cmp_variants, "variant runs")->expected(-1);
    compare->add_option("--out", cmp_out, "write comparison JSON here");

    // recompute
    auto* recompute =
        app.add_subcommand("recompute", "re-derive every aggregate from the raw tables");
    std::string rc_path;
    recompute->add_option("report", rc_path, "report.json or run directory")->required();

    CLI11_PARSE(app, argc, argv);

    g_log_level = (log_level == "quiet") ? 0 : (log_level == "debug") ? 2 : 1;

    if (*run) return cmd_run(run_config, run_sets, run_out_dir, seed_override, fail_on_qos);
    if (*validate) return cmd_validate(val_config, val_sets);
    if (*mock) return cmd_mock_serve(mock_profile, mock_port, mock_host);
    if (*compare) return cmd_compare(cmp_base, cmp_variants, cmp_out);
    if (*recompute) return cmd_recompute(rc_path);
    return 2;
}
