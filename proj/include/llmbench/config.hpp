#pragma once

// Benchmark run configuration: YAML parsing, validation, normalization.
// Unknown keys are hard errors; scenario-dependent fields are validated
// against the scenario actually selected. Parsing is a pure function of the
// document text.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

namespace llmbench {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class BackendKind { tgi, vllm, sglang, lmdeploy, custom };
enum class TaskKind { mmlu, summarization, qa, sql, custom };
enum class Scenario { single, batch, server };

inline const char* to_string(BackendKind b) {
    switch (b) {
        case BackendKind::tgi: return "tgi";
        case BackendKind::vllm: return "vllm";
        case BackendKind::sglang: return "sglang";
        case BackendKind::lmdeploy: return "lmdeploy";
        case BackendKind::custom: return "custom";
    }
    return "?";
}

inline const char* to_string(TaskKind t) {
    switch (t) {
        case TaskKind::mmlu: return "mmlu";
        case TaskKind::summarization: return "summarization";
        case TaskKind::qa: return "qa";
        case TaskKind::sql: return "sql";
        case TaskKind::custom: return "custom";
    }
    return "?";
}

inline const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::single: return "single";
        case Scenario::batch: return "batch";
        case Scenario::server: return "server";
    }
    return "?";
}

struct LaunchSpec {
    std::vector<std::string> command;
    std::map<std::string, std::string> env;
    std::string ready_path = "/health";
    double ready_timeout_s = 120.0;

    bool operator==(const LaunchSpec&) const = default;
};

struct TelemetrySpec {
    std::string provider = "null";  // null | command | replay
    double interval_s = 0.1;
    std::string command;     // command provider: prints "mem_mb,util_pct,power_w"
    std::string mem_unit = "mb";  // mb | mib (mib readings are converted to MB)
    std::string trace_path;  // replay provider

    bool operator==(const TelemetrySpec&) const = default;
};

struct BenchmarkConfig {
    std::string model_id;  // YAML key: hf_model (model_id accepted as alias)
    BackendKind backend = BackendKind::custom;
    std::optional<LaunchSpec> backend_launch;
    std::string endpoint_url;
    std::string quantization = "fp16";  // opaque label, recorded only
    TaskKind task = TaskKind::custom;
    std::string dataset_path;
    std::string template_path;  // optional prompt template override
    Scenario scenario = Scenario::single;
    uint32_t samples = 64;
    uint32_t batch_size = 8;
    std::optional<uint32_t> run_time_s;
    std::optional<uint32_t> concurrent_users;
    std::optional<double> requests_per_user_per_min;
    uint32_t max_output_tokens = 512;
    TelemetrySpec telemetry;
    uint64_t seed = 0;
    double qos_ttft_s = 2.0;
    double qos_e2e_s = 6.0;
    double request_timeout_s = 300.0;
    std::string weight_glob = "*";  // files summed by model_size

    bool operator==(const BenchmarkConfig&) const = default;
};

namespace detail {

inline void check_known_keys(const YAML::Node& node, const std::set<std::string>& known,
                             const std::string& scope) {
    for (const auto& kv : node) {
        const std::string key = kv.first.as<std::string>();
        if (!known.count(key)) {
            throw ConfigError("unknown field: " + (scope.empty() ? key : scope + "." + key));
        }
    }
}

inline int64_t get_int(const YAML::Node& n, const std::string& field) {
    try {
        return n.as<int64_t>();
    } catch (const YAML::Exception&) {
        throw ConfigError("field " + field + " must be an integer");
    }
}

inline double get_double(const YAML::Node& n, const std::string& field) {
    try {
        return n.as<double>();
    } catch (const YAML::Exception&) {
        throw ConfigError("field " + field + " must be a number");
    }
}

inline std::string get_str(const YAML::Node& n, const std::string& field) {
    try {
        return n.as<std::string>();
    } catch (const YAML::Exception&) {
        throw ConfigError("field " + field + " must be a string");
    }
}

inline uint32_t get_positive_u32(const YAML::Node& n, const std::string& field) {
    int64_t v = get_int(n, field);
    if (v < 1) {
        throw ConfigError("constraint violation: " + field + " must be a positive integer (got " +
                          std::to_string(v) + ")");
    }
    return static_cast<uint32_t>(v);
}

inline BackendKind parse_backend(const std::string& s) {
    if (s == "tgi") return BackendKind::tgi;
    if (s == "vllm") return BackendKind::vllm;
    if (s == "sglang") return BackendKind::sglang;
    if (s == "lmdeploy") return BackendKind::lmdeploy;
    if (s == "custom") return BackendKind::custom;
    throw ConfigError("field backend has unknown value '" + s +
                      "' (expected tgi|vllm|sglang|lmdeploy|custom)");
}

inline TaskKind parse_task(const std::string& s) {
    if (s == "mmlu") return TaskKind::mmlu;
    if (s == "summarization") return TaskKind::summarization;
    if (s == "qa") return TaskKind::qa;
    if (s == "sql") return TaskKind::sql;
    if (s == "custom") return TaskKind::custom;
    throw ConfigError("field task has unknown value '" + s +
                      "' (expected mmlu|summarization|qa|sql|custom)");
}

inline Scenario parse_scenario(const std::string& s) {
    if (s == "single") return Scenario::single;
    if (s == "batch") return Scenario::batch;
    if (s == "server") return Scenario::server;
    throw ConfigError("field scenario has unknown value '" + s +
                      "' (expected single|batch|server)");
}

inline LaunchSpec parse_launch(const YAML::Node& n) {
    if (!n.IsMap()) throw ConfigError("field backend_launch must be a map");
    check_known_keys(n, {"command", "env", "ready_path", "ready_timeout_s"}, "backend_launch");
    LaunchSpec ls;
    if (!n["command"]) throw ConfigError("backend_launch.command is required");
    if (n["command"].IsSequence()) {
        for (const auto& item : n["command"]) {
            ls.command.push_back(item.as<std::string>());
        }
    } else {
        throw ConfigError("backend_launch.command must be a list of strings");
    }
    if (ls.command.empty()) {
        throw ConfigError("constraint violation: backend_launch.command must be non-empty");
    }
    if (n["env"]) {
        for (const auto& kv : n["env"]) {
            ls.env[kv.first.as<std::string>()] = kv.second.as<std::string>();
        }
    }
    if (n["ready_path"]) ls.ready_path = get_str(n["ready_path"], "backend_launch.ready_path");
    if (n["ready_timeout_s"]) {
        ls.ready_timeout_s = get_double(n["ready_timeout_s"], "backend_launch.ready_timeout_s");
    }
    if (ls.ready_timeout_s <= 0) {
        throw ConfigError("constraint violation: backend_launch.ready_timeout_s must be > 0");
    }
    return ls;
}

inline TelemetrySpec parse_telemetry(const YAML::Node& n) {
    if (!n.IsMap()) throw ConfigError("field telemetry must be a map");
    check_known_keys(n, {"provider", "interval_s", "command", "mem_unit", "trace_path"},
                     "telemetry");
    TelemetrySpec ts;
    if (n["provider"]) {
        // a bare `provider: null` is YAML null, which means the null provider
        ts.provider = n["provider"].IsNull() ? "null" : get_str(n["provider"], "telemetry.provider");
    }
    if (ts.provider != "null" && ts.provider != "command" && ts.provider != "replay") {
        throw ConfigError("telemetry.provider has unknown value '" + ts.provider +
                          "' (expected null|command|replay)");
    }
    if (n["interval_s"]) ts.interval_s = get_double(n["interval_s"], "telemetry.interval_s");
    if (ts.interval_s <= 0) {
        throw ConfigError("constraint violation: telemetry.interval_s must be > 0");
    }
    if (n["command"]) ts.command = get_str(n["command"], "telemetry.command");
    if (n["mem_unit"]) ts.mem_unit = get_str(n["mem_unit"], "telemetry.mem_unit");
    if (ts.mem_unit != "mb" && ts.mem_unit != "mib") {
        throw ConfigError("telemetry.mem_unit must be mb or mib");
    }
    if (n["trace_path"]) ts.trace_path = get_str(n["trace_path"], "telemetry.trace_path");
    if (ts.provider == "command" && ts.command.empty()) {
        throw ConfigError("constraint violation: telemetry.provider=command requires telemetry.command");
    }
    if (ts.provider == "replay" && ts.trace_path.empty()) {
        throw ConfigError("constraint violation: telemetry.provider=replay requires telemetry.trace_path");
    }
    return ts;
}

}  // namespace detail

inline void validate_config(const BenchmarkConfig& c) {
    if (c.model_id.empty()) throw ConfigError("hf_model is required");
    if (c.dataset_path.empty()) throw ConfigError("dataset_path is required");
    if (c.endpoint_url.empty()) {
        throw ConfigError(
            "constraint violation: endpoint_url is required (it must be present whenever "
            "backend_launch is absent, and a launched backend still needs a target URL)");
    }
    if (c.endpoint_url.rfind("http://", 0) != 0 && c.endpoint_url.rfind("https://", 0) != 0) {
        throw ConfigError("endpoint_url must start with http:// or https://");
    }
    if (c.samples < 1) throw ConfigError("constraint violation: samples must be >= 1");
    if (c.max_output_tokens < 1) {
        throw ConfigError("constraint violation: max_output_tokens must be >= 1");
    }
    if (c.qos_ttft_s < 0 || c.qos_e2e_s < 0) {
        throw ConfigError("constraint violation: qos thresholds must be >= 0");
    }
    if (c.scenario == Scenario::batch) {
        if (c.batch_size < 1) {
            throw ConfigError("constraint violation: scenario=batch requires batch_size >= 1");
        }
        if (c.samples < c.batch_size) {
            throw ConfigError("constraint violation: scenario=batch requires samples >= batch_size");
        }
    }
    if (c.scenario == Scenario::server) {
        if (!c.run_time_s || *c.run_time_s < 1) {
            throw ConfigError("constraint violation: scenario=server requires run_time_s >= 1");
        }
        if (!c.concurrent_users || *c.concurrent_users < 1) {
            throw ConfigError(
                "constraint violation: scenario=server requires concurrent_users >= 1");
        }
        if (!c.requests_per_user_per_min || *c.requests_per_user_per_min <= 0) {
            throw ConfigError(
                "constraint violation: scenario=server requires requests_per_user_per_min > 0");
        }
    }
}

inline BenchmarkConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("syntax error at line " + std::to_string(e.mark.line + 1) + ", column " +
                          std::to_string(e.mark.column + 1) + ": " + e.msg);
    }
    if (!root.IsMap()) throw ConfigError("configuration document must be a YAML map");

    static const std::set<std::string> known = {
        "hf_model",     "model_id",        "backend",
        "backend_launch", "endpoint_url",  "quantization",
        "task",         "dataset_path",    "template_path",
        "scenario",     "samples",         "batch_size",
        "run_time_s",   "concurrent_users", "requests_per_user_per_min",
        "max_output_tokens", "telemetry",  "seed",
        "qos_ttft_s",   "qos_e2e_s",       "request_timeout_s",
        "weight_glob"};
    detail::check_known_keys(root, known, "");

    BenchmarkConfig c;
    if (root["hf_model"] && root["model_id"]) {
        throw ConfigError("hf_model and model_id are aliases; give only one");
    }
    if (root["hf_model"]) c.model_id = detail::get_str(root["hf_model"], "hf_model");
    if (root["model_id"]) c.model_id = detail::get_str(root["model_id"], "model_id");
    if (root["backend"]) {
        c.backend = detail::parse_backend(detail::get_str(root["backend"], "backend"));
    }
    if (root["backend_launch"]) c.backend_launch = detail::parse_launch(root["backend_launch"]);
    if (root["endpoint_url"]) c.endpoint_url = detail::get_str(root["endpoint_url"], "endpoint_url");
    if (root["quantization"]) {
        c.quantization = detail::get_str(root["quantization"], "quantization");
    }
    if (root["task"]) c.task = detail::parse_task(detail::get_str(root["task"], "task"));
    else throw ConfigError("task is required");
    if (root["dataset_path"]) c.dataset_path = detail::get_str(root["dataset_path"], "dataset_path");
    if (root["template_path"]) {
        c.template_path = detail::get_str(root["template_path"], "template_path");
    }
    if (root["scenario"]) {
        c.scenario = detail::parse_scenario(detail::get_str(root["scenario"], "scenario"));
    } else {
        throw ConfigError("scenario is required");
    }
    if (root["samples"]) c.samples = detail::get_positive_u32(root["samples"], "samples");
    if (root["batch_size"]) c.batch_size = detail::get_positive_u32(root["batch_size"], "batch_size");
    if (root["run_time_s"]) c.run_time_s = detail::get_positive_u32(root["run_time_s"], "run_time_s");
    if (root["concurrent_users"]) {
        c.concurrent_users = detail::get_positive_u32(root["concurrent_users"], "concurrent_users");
    }
    if (root["requests_per_user_per_min"]) {
        double v = detail::get_double(root["requests_per_user_per_min"],
                                      "requests_per_user_per_min");
        if (v <= 0) {
            throw ConfigError(
                "constraint violation: requests_per_user_per_min must be > 0");
        }
        c.requests_per_user_per_min = v;
    }
    if (root["max_output_tokens"]) {
        c.max_output_tokens = detail::get_positive_u32(root["max_output_tokens"],
                                                       "max_output_tokens");
    }
    if (root["telemetry"]) c.telemetry = detail::parse_telemetry(root["telemetry"]);
    if (root["seed"]) {
        int64_t s = detail::get_int(root["seed"], "seed");
        if (s < 0) throw ConfigError("constraint violation: seed must be non-negative");
        c.seed = static_cast<uint64_t>(s);
    }
    if (root["qos_ttft_s"]) c.qos_ttft_s = detail::get_double(root["qos_ttft_s"], "qos_ttft_s");
    if (root["qos_e2e_s"]) c.qos_e2e_s = detail::get_double(root["qos_e2e_s"], "qos_e2e_s");
    if (root["request_timeout_s"]) {
        c.request_timeout_s = detail::get_double(root["request_timeout_s"], "request_timeout_s");
        if (c.request_timeout_s <= 0) {
            throw ConfigError("constraint violation: request_timeout_s must be > 0");
        }
    }
    if (root["weight_glob"]) c.weight_glob = detail::get_str(root["weight_glob"], "weight_glob");

    validate_config(c);
    return c;
}

inline std::string serialize_config(const BenchmarkConfig& c) {
    YAML::Emitter out;
    out.SetDoublePrecision(17);  // round-trip exactness
    out << YAML::BeginMap;
    out << YAML::Key << "hf_model" << YAML::Value << c.model_id;
    out << YAML::Key << "backend" << YAML::Value << to_string(c.backend);
    if (c.backend_launch) {
        out << YAML::Key << "backend_launch" << YAML::Value << YAML::BeginMap;
        out << YAML::Key << "command" << YAML::Value << YAML::Flow << c.backend_launch->command;
        if (!c.backend_launch->env.empty()) {
            out << YAML::Key << "env" << YAML::Value << YAML::BeginMap;
            for (const auto& [k, v] : c.backend_launch->env) {
                out << YAML::Key << k << YAML::Value << v;
            }
            out << YAML::EndMap;
        }
        out << YAML::Key << "ready_path" << YAML::Value << c.backend_launch->ready_path;
        out << YAML::Key << "ready_timeout_s" << YAML::Value << c.backend_launch->ready_timeout_s;
        out << YAML::EndMap;
    }
    out << YAML::Key << "endpoint_url" << YAML::Value << c.endpoint_url;
    out << YAML::Key << "quantization" << YAML::Value << c.quantization;
    out << YAML::Key << "task" << YAML::Value << to_string(c.task);
    out << YAML::Key << "dataset_path" << YAML::Value << c.dataset_path;
    if (!c.template_path.empty()) {
        out << YAML::Key << "template_path" << YAML::Value << c.template_path;
    }
    out << YAML::Key << "scenario" << YAML::Value << to_string(c.scenario);
    out << YAML::Key << "samples" << YAML::Value << c.samples;
    out << YAML::Key << "batch_size" << YAML::Value << c.batch_size;
    if (c.run_time_s) out << YAML::Key << "run_time_s" << YAML::Value << *c.run_time_s;
    if (c.concurrent_users) {
        out << YAML::Key << "concurrent_users" << YAML::Value << *c.concurrent_users;
    }
    if (c.requests_per_user_per_min) {
        out << YAML::Key << "requests_per_user_per_min" << YAML::Value
            << *c.requests_per_user_per_min;
    }
    out << YAML::Key << "max_output_tokens" << YAML::Value << c.max_output_tokens;
    out << YAML::Key << "telemetry" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "provider" << YAML::Value << c.telemetry.provider;
    out << YAML::Key << "interval_s" << YAML::Value << c.telemetry.interval_s;
    if (!c.telemetry.command.empty()) {
        out << YAML::Key << "command" << YAML::Value << c.telemetry.command;
    }
    if (c.telemetry.mem_unit != "mb") {
        out << YAML::Key << "mem_unit" << YAML::Value << c.telemetry.mem_unit;
    }
    if (!c.telemetry.trace_path.empty()) {
        out << YAML::Key << "trace_path" << YAML::Value << c.telemetry.trace_path;
    }
    out << YAML::EndMap;
    out << YAML::Key << "seed" << YAML::Value << c.seed;
    out << YAML::Key << "qos_ttft_s" << YAML::Value << c.qos_ttft_s;
    out << YAML::Key << "qos_e2e_s" << YAML::Value << c.qos_e2e_s;
    out << YAML::Key << "request_timeout_s" << YAML::Value << c.request_timeout_s;
    out << YAML::Key << "weight_glob" << YAML::Value << c.weight_glob;
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

}  // namespace llmbench
