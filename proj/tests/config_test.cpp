#include <gtest/gtest.h>

#include <string>

#include "llmbench/config.hpp"

using namespace llmbench;

namespace {

// builds a config doc from the common stem plus extra lines
std::string doc_with(const std::string& scenario_lines, const std::string& extra = "") {
    return "hf_model: test/model\n"
           "task: mmlu\n"
           "dataset_path: data/mmlu.jsonl\n"
           "endpoint_url: http://127.0.0.1:8000\n" +
           scenario_lines + extra;
}

TEST(Config, MinimalSingleAppliesDefaults) {
    const BenchmarkConfig c = parse_config(doc_with("scenario: single\nsamples: 64\n"));
    EXPECT_EQ(c.model_id, "test/model");
    EXPECT_EQ(c.task, TaskKind::mmlu);
    EXPECT_EQ(c.scenario, Scenario::single);
    EXPECT_EQ(c.samples, 64u);
    // documented defaults
    EXPECT_DOUBLE_EQ(c.telemetry.interval_s, 0.1);
    EXPECT_DOUBLE_EQ(c.qos_ttft_s, 2.0);
    EXPECT_DOUBLE_EQ(c.qos_e2e_s, 6.0);
    EXPECT_EQ(c.max_output_tokens, 512u);
    // batch fields defaulted and unused
    EXPECT_EQ(c.batch_size, 8u);
    EXPECT_FALSE(c.run_time_s.has_value());
}

TEST(Config, ServerScenarioAccepted) {
    const BenchmarkConfig c = parse_config(doc_with(
        "scenario: server\nconcurrent_users: 32\nrequests_per_user_per_min: 12\nrun_time_s: 600\n"));
    EXPECT_EQ(c.scenario, Scenario::server);
    EXPECT_EQ(*c.concurrent_users, 32u);
    EXPECT_DOUBLE_EQ(*c.requests_per_user_per_min, 12.0);
    EXPECT_EQ(*c.run_time_s, 600u);
}

TEST(Config, BatchSizeZeroNamesField) {
    try {
        parse_config(doc_with("scenario: batch\nsamples: 16\nbatch_size: 0\n"));
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("batch_size"), std::string::npos);
    }
}

TEST(Config, BatchRequiresSamplesAtLeastBatchSize) {
    try {
        parse_config(doc_with("scenario: batch\nsamples: 64\nbatch_size: 128\n"));
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("samples >= batch_size"), std::string::npos);
    }
}

TEST(Config, UnknownKeyIsHardErrorNamingKey) {
    try {
        parse_config(doc_with("scenario: single\n", "batchsize: 4\n"));
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("batchsize"), std::string::npos);
    }
}

TEST(Config, ServerMissingRunTimeNamesInvariant) {
    try {
        parse_config(doc_with("scenario: server\nconcurrent_users: 4\nrequests_per_user_per_min: 6\n"));
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("run_time_s"), std::string::npos);
    }
}

TEST(Config, SyntaxErrorIsPositionAnnotated) {
    try {
        parse_config("task: [unclosed\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
    }
}

TEST(Config, EndpointRequired) {
    EXPECT_THROW(parse_config("hf_model: m\ntask: qa\ndataset_path: d\nscenario: single\n"),
                 ConfigError);
}

TEST(Config, ModelIdAliasAccepted) {
    const std::string doc =
        "model_id: test/model\ntask: qa\ndataset_path: d.jsonl\n"
        "endpoint_url: http://localhost:1\nscenario: single\n";
    EXPECT_EQ(parse_config(doc).model_id, "test/model");
    EXPECT_THROW(parse_config(doc + "hf_model: other\n"), ConfigError);
}

TEST(Config, RoundTripIdentity) {
    const std::string doc = doc_with("scenario: single\nsamples: 32\n", R"(
backend: vllm
quantization: awq
backend_launch:
  command: [./serve, --port, "8000"]
  env: {CUDA_VISIBLE_DEVICES: "0"}
  ready_timeout_s: 60
telemetry:
  provider: command
  command: "nvidia-smi --query-gpu=memory.used,utilization.gpu,power.draw --format=csv,noheader,nounits"
  mem_unit: mib
  interval_s: 0.25
seed: 42
)");
    const BenchmarkConfig a = parse_config(doc);
    const BenchmarkConfig b = parse_config(serialize_config(a));
    EXPECT_TRUE(a == b);
    EXPECT_EQ(serialize_config(a), serialize_config(b));
}

TEST(Config, TwoParsesIdentical) {
    const std::string doc = doc_with("scenario: single\n");
    EXPECT_TRUE(parse_config(doc) == parse_config(doc));
}

TEST(Config, LaunchSpecConstraints) {
    EXPECT_THROW(parse_config(doc_with("scenario: single\n", "backend_launch:\n  command: []\n")),
                 ConfigError);
    EXPECT_THROW(parse_config(doc_with("scenario: single\n",
                                       "backend_launch:\n  command: [x]\n  ready_timeout_s: 0\n")),
                 ConfigError);
}

TEST(Config, QuantizationIsFreeFormLabel) {
    const BenchmarkConfig c =
        parse_config(doc_with("scenario: single\n", "quantization: q4_k_m-experimental\n"));
    EXPECT_EQ(c.quantization, "q4_k_m-experimental");
}

TEST(Config, NegativeSamplesRejected) {
    EXPECT_THROW(parse_config(doc_with("scenario: single\nsamples: -3\n")), ConfigError);
}

TEST(Config, TelemetryProviderConstraints) {
    EXPECT_THROW(parse_config(doc_with("scenario: single\n", "telemetry:\n  provider: command\n")),
                 ConfigError);
    EXPECT_THROW(parse_config(doc_with("scenario: single\n",
                                       "telemetry:\n  provider: null\n  interval_s: 0\n")),
                 ConfigError);
}

}  // namespace
