#pragma once

// End-to-end run pipeline: prompts -> (launch|attach) -> sampler -> scenario
// -> teardown -> report emission. Partial results are persisted when a
// scenario aborts mid-run.

#include <ctime>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "llmbench/backend.hpp"
#include "llmbench/config.hpp"
#include "llmbench/mockserver.hpp"
#include "llmbench/report.hpp"
#include "llmbench/scoring.hpp"
#include "llmbench/task.hpp"
#include "llmbench/telemetry.hpp"
#include "llmbench/workload.hpp"

namespace llmbench {

struct RunOptions {
    std::string out_dir;
    bool fail_on_qos = false;
};

struct RunResult {
    int exit_code = 0;  // 0 ok, 1 run error, 3 QoS failure (with fail_on_qos)
    std::string out_dir;
    nlohmann::json doc;
    std::string message;
};

inline std::string make_run_id(const BenchmarkConfig& c) {
    char stamp[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc;
    gmtime_r(&now, &tm_utc);
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm_utc);
    return std::string("run-") + stamp + "-" + to_string(c.task) + "-" + to_string(c.scenario);
}

inline std::shared_ptr<TelemetryProvider> make_provider(const TelemetrySpec& spec) {
    if (spec.provider == "command") {
        return std::make_shared<CommandProvider>(spec.command, spec.mem_unit);
    }
    if (spec.provider == "replay") {
        return std::make_shared<ReplayProvider>(ReplayProvider::from_file(spec.trace_path));
    }
    return std::make_shared<NullProvider>();
}

inline RunResult run_benchmark(const BenchmarkConfig& config, const RunOptions& opts) {
    RunResult result;
    result.out_dir = opts.out_dir.empty() ? make_run_id(config) : opts.out_dir;
    std::filesystem::create_directories(result.out_dir);

    ReportInputs inputs;
    inputs.config = config;
    inputs.run_id = std::filesystem::path(result.out_dir).filename().string();

    PromptSet prompts = generate_prompts(config.task, config.dataset_path, config.samples,
                                         config.seed, config.template_path);
    inputs.warnings = prompts.warnings;

    RequestParams params;
    params.model = config.model_id;
    params.max_tokens = config.max_output_tokens;
    params.timeout_s = config.request_timeout_s;
    ChatClient client(config.endpoint_url, params);

    // launch or attach; cold start measured either way
    std::unique_ptr<ChildProcess> backend_proc;
    ColdStartReport cold;
    if (config.backend_launch) {
        LaunchSpec launch = *config.backend_launch;
        launch.env["LLMBENCH_QUANTIZATION"] = config.quantization;
        LaunchResult lr = launch_and_probe(launch, client, result.out_dir + "/backend.log");
        cold = lr.cold_start;
        backend_proc = std::move(lr.process);
    } else {
        cold = attach_and_probe(client);
    }
    inputs.cold_start = cold;

    {
        std::optional<pid_t> pid;
        if (backend_proc) pid = backend_proc->pid();
        Sampler sampler(make_provider(config.telemetry), config.telemetry.interval_s, pid);

        switch (config.scenario) {
            case Scenario::single:
                inputs.outcome = run_single_stream(prompts.instances, client);
                break;
            case Scenario::batch:
                inputs.outcome = run_batch(prompts.instances, config.batch_size, client);
                break;
            case Scenario::server: {
                const ArrivalPlan plan =
                    plan_arrivals(*config.concurrent_users, *config.requests_per_user_per_min,
                                  static_cast<double>(*config.run_time_s), config.seed);
                dump_arrivals(plan, result.out_dir + "/arrivals.csv");
                inputs.outcome = run_server(prompts.instances, plan, client);
                break;
            }
        }
        inputs.series = sampler.stop();
    }

    if (backend_proc) backend_proc->terminate();

    // quality scoring over records that produced output
    OutputList outputs;
    size_t usage_count = 0, chunk_count = 0;
    for (const auto& rec : inputs.outcome.records) {
        if (rec.status == RequestStatus::ok || rec.status == RequestStatus::empty_output) {
            outputs.emplace_back(rec.instance_id, rec.output_text);
        }
        if (rec.status == RequestStatus::ok) {
            if (rec.token_count_source == "usage") usage_count++;
            else if (rec.token_count_source == "chunks") chunk_count++;
        }
    }
    if (!outputs.empty()) {
        inputs.quality = score_task(config.task, outputs, prompts.instances);
    }
    inputs.token_count_source = (usage_count && chunk_count) ? "mixed"
                                : usage_count                ? "usage"
                                : chunk_count                ? "chunks"
                                                             : "none";

    RunReport report = build_report(inputs);
    emit_report(report, result.out_dir);
    result.doc = report.doc;

    if (inputs.outcome.aborted) {
        result.exit_code = 1;
        result.message = "scenario aborted: " + inputs.outcome.abort_reason +
                         " (partial results in " + result.out_dir + ")";
        return result;
    }
    if (opts.fail_on_qos && config.scenario == Scenario::server &&
        !result.doc["server"].is_null()) {
        const auto& qos = result.doc["server"]["qos"];
        if (qos["ttft_violation_rate"].get<double>() > 0 ||
            qos["e2e_violation_rate"].get<double>() > 0) {
            result.exit_code = 3;
            result.message = "QoS thresholds violated";
            return result;
        }
    }
    return result;
}

}  // namespace llmbench
