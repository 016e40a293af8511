#pragma once

// Run reports: assemble aggregates, persist raw records + telemetry + a
// machine-readable report + a text summary, verify self-consistency
// (recompute), and compare runs (percentage deltas, Pareto frontiers).
//
// Every timestamp that goes into a CSV is first normalized to the printed
// precision, and every aggregate is computed from the normalized values, so
// a reader of the emitted files can reproduce each aggregate bit-for-bit.

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmbench/backend.hpp"
#include "llmbench/config.hpp"
#include "llmbench/metrics.hpp"
#include "llmbench/task.hpp"
#include "llmbench/telemetry.hpp"
#include "llmbench/workload.hpp"

namespace llmbench {

inline constexpr const char* kReportSchemaVersion = "1";

struct ReportError : std::runtime_error {
    explicit ReportError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::optional<double> delta_pct(double base, double variant) {
    if (base == 0.0) return std::nullopt;
    return 100.0 * (variant - base) / base;
}

struct ParetoPoint {
    double quality = 0;  // higher is better
    double cost = 0;     // lower is better
};

// Indices of the non-dominated subset. p is dominated iff some q has
// quality >= and cost <= with at least one strict; exact ties are kept.
inline std::vector<size_t> pareto_frontier(const std::vector<ParetoPoint>& points) {
    std::vector<size_t> order(points.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return points[a].cost < points[b].cost;
    });
    std::vector<size_t> kept;
    double best_quality = -std::numeric_limits<double>::infinity();
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        double group_max = -std::numeric_limits<double>::infinity();
        while (j < order.size() && points[order[j]].cost == points[order[i]].cost) {
            group_max = std::max(group_max, points[order[j]].quality);
            j++;
        }
        if (group_max > best_quality) {
            for (size_t k = i; k < j; ++k) {
                if (points[order[k]].quality == group_max) kept.push_back(order[k]);
            }
            best_quality = group_max;
        }
        i = j;
    }
    std::sort(kept.begin(), kept.end());
    return kept;
}

// ---------------------------------------------------------------------------
// rows (the flat table) and normalization

struct RecordRow {
    uint64_t seq = 0;
    std::string instance_id;
    double arrival_s = 0, dispatch_s = 0;
    std::optional<double> first_token_s, completion_s;
    uint64_t n_tokens = 0, n_sentences = 0;
    RequestStatus status = RequestStatus::ok;
    std::optional<double> ttft_s, tpot_s, gl_s;
};

namespace report_detail {

inline double normalize9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    return std::strtod(buf, nullptr);
}

inline double normalize6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::strtod(buf, nullptr);
}

inline std::string fmt9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    return buf;
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

inline nlohmann::json agg_to_json(const AggregateStat& a) {
    nlohmann::json j = {{"mean", a.mean}, {"n", a.n},     {"p50", a.p50},
                        {"p95", a.p95},   {"min", a.min}, {"max", a.max}};
    j["ci95"] = a.ci95_half_width ? nlohmann::json(*a.ci95_half_width) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json opt_to_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json field_stats_to_json(const FieldStats& f) {
    return {{"avg", opt_to_json(f.avg)}, {"peak", opt_to_json(f.peak)}, {"n", f.n}};
}

inline nlohmann::json config_to_json(const BenchmarkConfig& c) {
    nlohmann::json j;
    j["hf_model"] = c.model_id;
    j["backend"] = to_string(c.backend);
    j["endpoint_url"] = c.endpoint_url;
    j["quantization"] = c.quantization;
    j["task"] = to_string(c.task);
    j["dataset_path"] = c.dataset_path;
    j["scenario"] = to_string(c.scenario);
    j["samples"] = c.samples;
    j["batch_size"] = c.batch_size;
    if (c.run_time_s) j["run_time_s"] = *c.run_time_s;
    if (c.concurrent_users) j["concurrent_users"] = *c.concurrent_users;
    if (c.requests_per_user_per_min) j["requests_per_user_per_min"] = *c.requests_per_user_per_min;
    j["max_output_tokens"] = c.max_output_tokens;
    j["seed"] = c.seed;
    j["qos_ttft_s"] = c.qos_ttft_s;
    j["qos_e2e_s"] = c.qos_e2e_s;
    j["telemetry"] = {{"provider", c.telemetry.provider}, {"interval_s", c.telemetry.interval_s}};
    if (c.backend_launch) {
        j["backend_launch"] = {{"command", c.backend_launch->command},
                               {"ready_path", c.backend_launch->ready_path},
                               {"ready_timeout_s", c.backend_launch->ready_timeout_s}};
    }
    return j;
}

}  // namespace report_detail

// Convert measured records to scenario-relative rows at CSV precision.
inline std::vector<RecordRow> make_rows(const std::vector<RequestRecord>& records,
                                        double scenario_start) {
    using report_detail::normalize9;
    std::vector<RecordRow> rows;
    rows.reserve(records.size());
    for (const auto& rec : records) {
        RecordRow row;
        row.seq = rec.seq;
        row.instance_id = rec.instance_id;
        row.arrival_s = normalize9(rec.arrival_time - scenario_start);
        row.dispatch_s = normalize9(rec.dispatch_time - scenario_start);
        if (rec.first_token_time > 0) {
            row.first_token_s = normalize9(rec.first_token_time - scenario_start);
        }
        if (rec.completion_time > 0) {
            row.completion_s = normalize9(rec.completion_time - scenario_start);
        }
        row.n_tokens = rec.completion_tokens;
        row.n_sentences = rec.sentence_count;
        row.status = rec.status;
        if (rec.status == RequestStatus::ok && row.first_token_s && row.completion_s) {
            row.ttft_s = *row.first_token_s - row.dispatch_s;
            const double t_gen = *row.completion_s - *row.first_token_s;
            row.tpot_s = t_gen / static_cast<double>(row.n_tokens);
            row.gl_s = t_gen;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// report assembly

struct ReportInputs {
    BenchmarkConfig config;
    ScenarioOutcome outcome;
    TelemetrySeries series;
    std::optional<ColdStartReport> cold_start;
    std::vector<QualityScore> quality;
    std::vector<std::string> warnings;
    std::string run_id;
    std::string token_count_source;  // usage | chunks | mixed | none
};

struct RunReport {
    nlohmann::json doc;
    std::vector<RecordRow> rows;
    std::vector<TelemetrySample> telemetry_rows;  // relative, normalized
};

inline RunReport build_report(const ReportInputs& in) {
    using namespace report_detail;
    RunReport rep;
    rep.rows = make_rows(in.outcome.records, in.outcome.start_time);

    rep.telemetry_rows.reserve(in.series.samples.size());
    for (const auto& s : in.series.samples) {
        TelemetrySample r = s;
        r.t = normalize9(s.t - in.outcome.start_time);
        auto norm = [](std::optional<double>& v) {
            if (v) v = normalize6(*v);
        };
        norm(r.gpu_mem_mb);
        norm(r.gpu_util_pct);
        norm(r.power_w);
        norm(r.cpu_pct);
        norm(r.ram_mb);
        rep.telemetry_rows.push_back(r);
    }

    nlohmann::json& doc = rep.doc;
    doc["schema_version"] = kReportSchemaVersion;
    doc["run_id"] = in.run_id;

    char host[256] = "unknown";
    ::gethostname(host, sizeof(host) - 1);
    doc["environment"] = {{"hostname", host},
                          {"telemetry_provider", in.series.provider},
                          {"clock", "monotonic"},
                          {"scheduler_tick_s", kSchedulerTickS}};
    doc["config"] = config_to_json(in.config);
    doc["scenario"] = {{"name", to_string(in.config.scenario)},
                       {"wall_time_s", normalize9(in.outcome.scenario_wall_time_s)},
                       {"aborted", in.outcome.aborted},
                       {"abort_reason", in.outcome.abort_reason},
                       {"warnings", in.outcome.warnings}};

    // counts
    size_t n_ok = 0, n_http = 0, n_stream = 0, n_empty = 0;
    for (const auto& row : rep.rows) {
        switch (row.status) {
            case RequestStatus::ok: n_ok++; break;
            case RequestStatus::http_error: n_http++; break;
            case RequestStatus::stream_error: n_stream++; break;
            case RequestStatus::empty_output: n_empty++; break;
        }
    }
    doc["counts"] = {{"requests", rep.rows.size()},
                     {"ok", n_ok},
                     {"http_error", n_http},
                     {"stream_error", n_stream},
                     {"empty_output", n_empty},
                     {"token_count_source", in.token_count_source}};

    std::vector<std::string> warnings = in.warnings;
    if (n_ok == 0) warnings.push_back("no successful requests; aggregates are empty");

    // latency + throughput from the normalized rows
    std::vector<double> ttft, tpot, gl, per_req_tps;
    uint64_t total_tokens = 0, total_sentences = 0;
    for (const auto& row : rep.rows) {
        if (row.status != RequestStatus::ok || !row.ttft_s) continue;
        ttft.push_back(*row.ttft_s);
        tpot.push_back(*row.tpot_s);
        gl.push_back(*row.gl_s);
        total_tokens += row.n_tokens;
        total_sentences += row.n_sentences;
        if (*row.gl_s > 0) per_req_tps.push_back(static_cast<double>(row.n_tokens) / *row.gl_s);
    }
    doc["latency"] = nlohmann::json::object();
    if (!ttft.empty()) {
        doc["latency"]["ttft_s"] = agg_to_json(aggregate(ttft));
        doc["latency"]["tpot_s"] = agg_to_json(aggregate(tpot));
        doc["latency"]["gl_s"] = agg_to_json(aggregate(gl));
    }
    const double wall = normalize9(in.outcome.scenario_wall_time_s);
    doc["throughput"] = {{"tps", wall > 0 ? total_tokens / wall : 0.0},
                         {"sps", wall > 0 ? total_sentences / wall : 0.0}};
    doc["throughput"]["per_request_tps"] =
        (in.config.scenario == Scenario::single && !per_req_tps.empty())
            ? agg_to_json(aggregate(per_req_tps))
            : nlohmann::json(nullptr);
    doc["totals"] = {{"tokens", total_tokens}, {"sentences", total_sentences}};

    // resources over the scenario window
    TelemetrySeries rel_series;
    rel_series.samples = rep.telemetry_rows;
    rel_series.provider = in.series.provider;
    rel_series.interval_s = in.series.interval_s;
    const ResourceStats res = resource_stats(rel_series);
    doc["resources"] = {{"gpu_mem_mb", field_stats_to_json(res.mem_mb)},
                        {"gpu_util_pct", field_stats_to_json(res.util_pct)},
                        {"power_w", field_stats_to_json(res.power_w)},
                        {"cpu_pct", field_stats_to_json(res.cpu_pct)},
                        {"ram_mb", field_stats_to_json(res.ram_mb)}};

    // energy over [first dispatch, last completion]
    doc["energy"] = nlohmann::json(nullptr);
    if (!rep.rows.empty()) {
        double t0 = std::numeric_limits<double>::infinity(), t1 = 0;
        for (const auto& row : rep.rows) {
            t0 = std::min(t0, row.dispatch_s);
            if (row.completion_s) t1 = std::max(t1, *row.completion_s);
        }
        if (t1 > t0) {
            const TelemetrySeries win = window(rel_series, t0, t1);
            const ResourceStats win_res = resource_stats(win);
            nlohmann::json e = {{"window_t0_s", t0}, {"window_t1_s", t1}, {"t_gen_s", t1 - t0}};
            if (win_res.power_w.avg) {
                const EnergyMetrics em =
                    energy(*win_res.power_w.avg, t1 - t0, total_tokens, total_sentences);
                e["power_avg_w"] = *win_res.power_w.avg;
                e["e_wh"] = em.e_wh;
                e["e_j"] = em.e_j;
                e["e_token_j"] = opt_to_json(em.e_token_j);
                e["e_sentence_j"] = opt_to_json(em.e_sentence_j);
                e["e_j_integrated"] = opt_to_json(trapezoid_energy_j(win));  // non-paper extra
            } else {
                warnings.push_back("no power telemetry in the generation window; energy unavailable");
            }
            doc["energy"] = e;
        }
    }

    // model size + overhead
    std::optional<double> size_mb =
        model_size_mb(in.config.model_id, in.config.weight_glob, &warnings);
    nlohmann::json model = {{"size_mb", opt_to_json(size_mb)}};
    if (res.mem_mb.avg) {
        if (size_mb) {
            model["overhead_mb"] = overhead_mb(*res.mem_mb.avg, *size_mb);
        } else {
            model["overhead_mb"] = *res.mem_mb.avg;
            warnings.push_back("model size unavailable; overhead equals mean GPU memory");
        }
    } else {
        model["overhead_mb"] = nlohmann::json(nullptr);
    }
    doc["model"] = model;

    // cold start
    doc["cold_start"] = nlohmann::json(nullptr);
    if (in.cold_start) {
        doc["cold_start"] = {{"startup_s", in.cold_start->startup_s},
                             {"load_s", in.cold_start->load_s},
                             {"probe_ttft_s", in.cold_start->probe_ttft_s},
                             {"cold_s", in.cold_start->cold_s},
                             {"attach_mode", in.cold_start->attach_mode}};
    }

    // server scenario latency decomposition + QoS
    doc["server"] = nlohmann::json(nullptr);
    if (in.config.scenario == Scenario::server && n_ok > 0) {
        std::vector<RequestRecord> rel_records;
        rel_records.reserve(rep.rows.size());
        for (const auto& row : rep.rows) {
            if (row.status != RequestStatus::ok || !row.first_token_s || !row.completion_s) continue;
            RequestRecord r;
            r.status = RequestStatus::ok;
            r.arrival_time = row.arrival_s;
            r.dispatch_time = row.dispatch_s;
            r.first_token_time = *row.first_token_s;
            r.completion_time = *row.completion_s;
            rel_records.push_back(r);
        }
        const ServerLatencyMetrics slm =
            server_latency(rel_records, in.config.qos_ttft_s, in.config.qos_e2e_s);
        doc["server"] = {{"queue_s", agg_to_json(slm.queue_s)},
                         {"e2e_s", agg_to_json(slm.e2e_s)},
                         {"ttft_from_arrival_s", agg_to_json(slm.ttft_from_arrival_s)},
                         {"qos",
                          {{"ttft_threshold_s", in.config.qos_ttft_s},
                           {"e2e_threshold_s", in.config.qos_e2e_s},
                           {"ttft_violation_rate", slm.ttft_violation_rate},
                           {"e2e_violation_rate", slm.e2e_violation_rate}}}};
    }

    // quality
    doc["quality"] = nlohmann::json::array();
    for (const auto& q : in.quality) {
        nlohmann::json per = nlohmann::json::array();
        for (const auto& [id, v] : q.per_instance) per.push_back({id, v});
        doc["quality"].push_back(
            {{"metric", q.metric_name}, {"value", q.value}, {"per_instance", per}});
    }

    doc["files"] = {{"records", "records.csv"}, {"telemetry", "telemetry.csv"}};
    doc["notes"] = {
        {"queue_time", "dispatch - arrival: harness-side dispatch delay"},
        {"wait_time",
         "reported as ttft_s (TTFT from dispatch); backend-internal queueing is not visible "
         "to a black-box client"},
        {"qos_ttft", "measured from arrival (user-perceived first token)"},
        {"tpot_denominator", "all N_t tokens"},
        {"energy_formula", "mean window power * window duration; window = first dispatch to "
                           "last completion. e_j_integrated is the trapezoidal integral of the "
                           "power series over the same window."},
        {"size_convention", "MB = 1e6 bytes"},
        {"batch_submission", "one wave of batch_size concurrent single-prompt requests"}};
    doc["warnings"] = warnings;
    return rep;
}

// ---------------------------------------------------------------------------
// emission

inline std::string render_summary(const nlohmann::json& doc);

inline void emit_report(const RunReport& rep, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ReportError("cannot create output directory " + out_dir + ": " + ec.message());

    auto open = [&](const std::string& name) {
        std::ofstream f(out_dir + "/" + name);
        if (!f) throw ReportError("cannot write " + out_dir + "/" + name);
        return f;
    };

    {
        std::ofstream f = open("records.csv");
        f << "# schema_version: " << kReportSchemaVersion << "\n";
        f << "seq,instance_id,arrival_s,dispatch_s,first_token_s,completion_s,"
             "n_tokens,n_sentences,status,ttft_s,tpot_s,gl_s\n";
        using report_detail::csv_quote;
        using report_detail::fmt9;
        auto opt9 = [](const std::optional<double>& v) { return v ? fmt9(*v) : std::string(); };
        for (const auto& r : rep.rows) {
            f << r.seq << ',' << csv_quote(r.instance_id) << ',' << fmt9(r.arrival_s) << ','
              << fmt9(r.dispatch_s) << ',' << opt9(r.first_token_s) << ','
              << opt9(r.completion_s) << ',' << r.n_tokens << ',' << r.n_sentences << ','
              << to_string(r.status) << ',' << opt9(r.ttft_s) << ',' << opt9(r.tpot_s) << ','
              << opt9(r.gl_s) << '\n';
        }
    }

    {
        std::ofstream f = open("telemetry.csv");
        f << "# schema_version: " << kReportSchemaVersion << "\n";
        f << "t_s,mem_mb,util_pct,power_w,cpu_pct,ram_mb\n";
        auto cell = [](const std::optional<double>& v) {
            if (!v) return std::string();
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.6f", *v);
            return std::string(buf);
        };
        for (const auto& s : rep.telemetry_rows) {
            f << report_detail::fmt9(s.t) << ',' << cell(s.gpu_mem_mb) << ','
              << cell(s.gpu_util_pct) << ',' << cell(s.power_w) << ',' << cell(s.cpu_pct) << ','
              << cell(s.ram_mb) << '\n';
        }
    }

    {
        std::ofstream f = open("report.json");
        f << rep.doc.dump(2) << "\n";
    }

    {
        std::ofstream f = open("summary.txt");
        f << render_summary(rep.doc);
    }
}

inline std::string render_summary(const nlohmann::json& doc) {
    std::ostringstream os;
    const auto& cfg = doc["config"];
    os << "benchmark summary (schema " << doc["schema_version"].get<std::string>() << ")\n";
    os << "run: " << doc["run_id"].get<std::string>() << "\n";
    os << "model=" << cfg["hf_model"].get<std::string>()
       << " backend=" << cfg["backend"].get<std::string>()
       << " quantization=" << cfg["quantization"].get<std::string>()
       << " task=" << cfg["task"].get<std::string>()
       << " scenario=" << cfg["scenario"].get<std::string>() << "\n";
    const auto& counts = doc["counts"];
    os << "requests: " << counts["requests"].get<size_t>() << " total, "
       << counts["ok"].get<size_t>() << " ok"
       << "  wall: " << doc["scenario"]["wall_time_s"].get<double>() << " s\n";

    auto agg_line = [&](const char* label, const nlohmann::json& a, double scale,
                        const char* unit) {
        os << "  " << label << ": mean " << a["mean"].get<double>() * scale;
        if (!a["ci95"].is_null()) os << " +/- " << a["ci95"].get<double>() * scale;
        os << " " << unit << "  (p50 " << a["p50"].get<double>() * scale << ", p95 "
           << a["p95"].get<double>() * scale << ", n " << a["n"].get<size_t>() << ")\n";
    };
    if (doc["latency"].contains("ttft_s")) {
        os << "latency:\n";
        agg_line("TTFT", doc["latency"]["ttft_s"], 1e3, "ms");
        agg_line("TPOT", doc["latency"]["tpot_s"], 1e3, "ms/token");
        agg_line("GL", doc["latency"]["gl_s"], 1.0, "s");
    }
    os << "throughput: " << doc["throughput"]["tps"].get<double>() << " tokens/s, "
       << doc["throughput"]["sps"].get<double>() << " sentences/s\n";
    if (!doc["energy"].is_null() && doc["energy"].contains("e_j")) {
        const auto& e = doc["energy"];
        os << "energy: " << e["e_wh"].get<double>() << " Wh (" << e["e_j"].get<double>()
           << " J)";
        if (!e["e_token_j"].is_null()) os << ", " << e["e_token_j"].get<double>() << " J/token";
        if (!e["e_sentence_j"].is_null()) {
            os << ", " << e["e_sentence_j"].get<double>() << " J/sentence";
        }
        os << "  [mean power x generation time]\n";
    }
    const auto& res = doc["resources"];
    auto res_line = [&](const char* label, const nlohmann::json& f, const char* unit) {
        if (f["avg"].is_null()) return;
        os << "  " << label << ": avg " << f["avg"].get<double>() << " " << unit << ", peak "
           << f["peak"].get<double>() << " " << unit << "\n";
    };
    os << "resources:\n";
    res_line("GPU mem", res["gpu_mem_mb"], "MB");
    res_line("GPU util", res["gpu_util_pct"], "%");
    res_line("power", res["power_w"], "W");
    res_line("CPU", res["cpu_pct"], "%");
    res_line("RAM", res["ram_mb"], "MB");
    if (!doc["model"]["size_mb"].is_null()) {
        os << "model size: " << doc["model"]["size_mb"].get<double>() << " MB";
        if (!doc["model"]["overhead_mb"].is_null()) {
            os << ", overhead: " << doc["model"]["overhead_mb"].get<double>() << " MB";
        }
        os << "\n";
    }
    if (!doc["cold_start"].is_null()) {
        const auto& c = doc["cold_start"];
        os << "cold start: startup " << c["startup_s"].get<double>() << " s + load "
           << c["load_s"].get<double>() << " s + ttft " << c["probe_ttft_s"].get<double>()
           << " s = " << c["cold_s"].get<double>() << " s"
           << (c["attach_mode"].get<bool>() ? " (attach mode)" : "") << "\n";
    }
    if (!doc["server"].is_null()) {
        const auto& s = doc["server"];
        os << "server latency:\n";
        agg_line("queue", s["queue_s"], 1e3, "ms");
        agg_line("e2e", s["e2e_s"], 1.0, "s");
        agg_line("ttft(arrival)", s["ttft_from_arrival_s"], 1.0, "s");
        os << "  QoS violations: ttft "
           << s["qos"]["ttft_violation_rate"].get<double>() * 100.0 << "%, e2e "
           << s["qos"]["e2e_violation_rate"].get<double>() * 100.0 << "%\n";
    }
    for (const auto& q : doc["quality"]) {
        os << "quality: " << q["metric"].get<std::string>() << " = "
           << q["value"].get<double>() << "\n";
    }
    for (const auto& w : doc["warnings"]) {
        os << "warning: " << w.get<std::string>() << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// loading emitted artifacts

struct LoadedRun {
    nlohmann::json doc;
    std::vector<RecordRow> rows;
    std::vector<TelemetrySample> telemetry;
    std::string dir;
};

namespace report_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                i++;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

inline std::optional<double> parse_opt(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::strtod(s.c_str(), nullptr);
}

}  // namespace report_detail

inline LoadedRun load_run(const std::string& report_path_or_dir) {
    namespace fs = std::filesystem;
    LoadedRun run;
    fs::path p(report_path_or_dir);
    if (fs::is_directory(p)) p /= "report.json";
    run.dir = p.parent_path().string();
    if (run.dir.empty()) run.dir = ".";

    std::ifstream jf(p);
    if (!jf) throw ReportError("cannot open report: " + p.string());
    run.doc = nlohmann::json::parse(jf, nullptr, true, true);

    const std::string records_path =
        run.dir + "/" + run.doc["files"]["records"].get<std::string>();
    std::ifstream rf(records_path);
    if (!rf) throw ReportError("cannot open records table: " + records_path);
    std::string line;
    bool header_seen = false;
    while (std::getline(rf, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        const auto cells = report_detail::split_csv_line(line);
        if (cells.size() != 12) throw ReportError("records table row has wrong cell count");
        RecordRow r;
        r.seq = std::stoull(cells[0]);
        r.instance_id = cells[1];
        r.arrival_s = std::strtod(cells[2].c_str(), nullptr);
        r.dispatch_s = std::strtod(cells[3].c_str(), nullptr);
        r.first_token_s = report_detail::parse_opt(cells[4]);
        r.completion_s = report_detail::parse_opt(cells[5]);
        r.n_tokens = std::stoull(cells[6]);
        r.n_sentences = std::stoull(cells[7]);
        const auto st = request_status_from_string(cells[8]);
        if (!st) throw ReportError("records table has unknown status: " + cells[8]);
        r.status = *st;
        r.ttft_s = report_detail::parse_opt(cells[9]);
        r.tpot_s = report_detail::parse_opt(cells[10]);
        r.gl_s = report_detail::parse_opt(cells[11]);
        run.rows.push_back(std::move(r));
    }

    const std::string telemetry_path =
        run.dir + "/" + run.doc["files"]["telemetry"].get<std::string>();
    std::ifstream tf(telemetry_path);
    if (tf) {
        header_seen = false;
        while (std::getline(tf, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (!header_seen) {
                header_seen = true;
                continue;
            }
            const auto cells = report_detail::split_csv_line(line);
            if (cells.size() != 6) throw ReportError("telemetry row has wrong cell count");
            TelemetrySample s;
            s.t = std::strtod(cells[0].c_str(), nullptr);
            s.gpu_mem_mb = report_detail::parse_opt(cells[1]);
            s.gpu_util_pct = report_detail::parse_opt(cells[2]);
            s.power_w = report_detail::parse_opt(cells[3]);
            s.cpu_pct = report_detail::parse_opt(cells[4]);
            s.ram_mb = report_detail::parse_opt(cells[5]);
            run.telemetry.push_back(s);
        }
    }
    return run;
}

// ---------------------------------------------------------------------------
// recompute: verify every reported aggregate against the raw tables

namespace report_detail {

inline bool close_rel(double a, double b, double tol = 1e-9) {
    const double diff = std::fabs(a - b);
    if (diff == 0) return true;
    const double scale = std::max(std::fabs(a), std::fabs(b));
    return diff <= tol * std::max(scale, 1e-300);
}

inline void check_agg(const std::string& label, const nlohmann::json& stored,
                      const AggregateStat& fresh, std::vector<std::string>& mismatches) {
    auto bad = [&](const std::string& field, double s, double f) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s.%s: stored %.17g recomputed %.17g", label.c_str(),
                      field.c_str(), s, f);
        mismatches.push_back(buf);
    };
    if (!close_rel(stored["mean"].get<double>(), fresh.mean)) {
        bad("mean", stored["mean"].get<double>(), fresh.mean);
    }
    if (stored["n"].get<size_t>() != fresh.n) {
        bad("n", static_cast<double>(stored["n"].get<size_t>()), static_cast<double>(fresh.n));
    }
    if (!close_rel(stored["p50"].get<double>(), fresh.p50)) {
        bad("p50", stored["p50"].get<double>(), fresh.p50);
    }
    if (!close_rel(stored["p95"].get<double>(), fresh.p95)) {
        bad("p95", stored["p95"].get<double>(), fresh.p95);
    }
    if (!close_rel(stored["min"].get<double>(), fresh.min)) {
        bad("min", stored["min"].get<double>(), fresh.min);
    }
    if (!close_rel(stored["max"].get<double>(), fresh.max)) {
        bad("max", stored["max"].get<double>(), fresh.max);
    }
    const bool stored_ci = !stored["ci95"].is_null();
    if (stored_ci != fresh.ci95_half_width.has_value()) {
        mismatches.push_back(label + ".ci95: presence mismatch");
    } else if (stored_ci && !close_rel(stored["ci95"].get<double>(), *fresh.ci95_half_width)) {
        bad("ci95", stored["ci95"].get<double>(), *fresh.ci95_half_width);
    }
}

}  // namespace report_detail

inline std::vector<std::string> recompute_check(const LoadedRun& run) {
    using report_detail::check_agg;
    using report_detail::close_rel;
    std::vector<std::string> mismatches;
    const nlohmann::json& doc = run.doc;

    // latency aggregates
    std::vector<double> ttft, tpot, gl, per_req_tps;
    uint64_t total_tokens = 0, total_sentences = 0;
    size_t n_ok = 0;
    for (const auto& row : run.rows) {
        if (row.status != RequestStatus::ok) continue;
        n_ok++;
        if (!row.first_token_s || !row.completion_s) continue;
        const double t = *row.first_token_s - row.dispatch_s;
        const double g = *row.completion_s - *row.first_token_s;
        ttft.push_back(t);
        gl.push_back(g);
        tpot.push_back(g / static_cast<double>(row.n_tokens));
        total_tokens += row.n_tokens;
        total_sentences += row.n_sentences;
        if (g > 0) per_req_tps.push_back(static_cast<double>(row.n_tokens) / g);
    }
    if (doc["latency"].contains("ttft_s")) {
        check_agg("latency.ttft_s", doc["latency"]["ttft_s"], aggregate(ttft), mismatches);
        check_agg("latency.tpot_s", doc["latency"]["tpot_s"], aggregate(tpot), mismatches);
        check_agg("latency.gl_s", doc["latency"]["gl_s"], aggregate(gl), mismatches);
    } else if (!ttft.empty()) {
        mismatches.push_back("latency aggregates missing despite ok records");
    }

    if (doc["counts"]["ok"].get<size_t>() != n_ok) {
        mismatches.push_back("counts.ok does not match records table");
    }
    if (doc["counts"]["requests"].get<size_t>() != run.rows.size()) {
        mismatches.push_back("counts.requests does not match records table");
    }

    const double wall = doc["scenario"]["wall_time_s"].get<double>();
    const double tps = wall > 0 ? total_tokens / wall : 0.0;
    const double sps = wall > 0 ? total_sentences / wall : 0.0;
    if (!close_rel(doc["throughput"]["tps"].get<double>(), tps)) {
        mismatches.push_back("throughput.tps mismatch");
    }
    if (!close_rel(doc["throughput"]["sps"].get<double>(), sps)) {
        mismatches.push_back("throughput.sps mismatch");
    }
    if (!doc["throughput"]["per_request_tps"].is_null()) {
        check_agg("throughput.per_request_tps", doc["throughput"]["per_request_tps"],
                  aggregate(per_req_tps), mismatches);
    }

    // resources over the full emitted series
    TelemetrySeries series;
    series.samples = run.telemetry;
    const ResourceStats res = resource_stats(series);
    auto check_field = [&](const char* name, const FieldStats& f) {
        const nlohmann::json& stored = doc["resources"][name];
        const bool stored_has = !stored["avg"].is_null();
        if (stored_has != f.avg.has_value()) {
            mismatches.push_back(std::string("resources.") + name + ": presence mismatch");
            return;
        }
        if (stored_has) {
            if (!close_rel(stored["avg"].get<double>(), *f.avg) ||
                !close_rel(stored["peak"].get<double>(), *f.peak)) {
                mismatches.push_back(std::string("resources.") + name + ": value mismatch");
            }
        }
    };
    check_field("gpu_mem_mb", res.mem_mb);
    check_field("gpu_util_pct", res.util_pct);
    check_field("power_w", res.power_w);
    check_field("cpu_pct", res.cpu_pct);
    check_field("ram_mb", res.ram_mb);

    // energy chain
    if (!doc["energy"].is_null() && doc["energy"].contains("e_j")) {
        const auto& e = doc["energy"];
        const double t0 = e["window_t0_s"].get<double>();
        const double t1 = e["window_t1_s"].get<double>();
        const TelemetrySeries win = window(series, t0, t1);
        const ResourceStats wres = resource_stats(win);
        if (!wres.power_w.avg) {
            mismatches.push_back("energy present but window has no power samples");
        } else {
            const EnergyMetrics em = energy(*wres.power_w.avg, t1 - t0, total_tokens,
                                            total_sentences);
            if (!close_rel(e["e_wh"].get<double>(), em.e_wh)) mismatches.push_back("energy.e_wh");
            if (!close_rel(e["e_j"].get<double>(), em.e_j)) mismatches.push_back("energy.e_j");
            if (!close_rel(e["e_j"].get<double>(), e["e_wh"].get<double>() * 3600.0)) {
                mismatches.push_back("energy.e_j != 3600 * e_wh");
            }
            if (!e["e_token_j"].is_null() != em.e_token_j.has_value()) {
                mismatches.push_back("energy.e_token_j presence");
            } else if (em.e_token_j &&
                       !close_rel(e["e_token_j"].get<double>(), *em.e_token_j)) {
                mismatches.push_back("energy.e_token_j");
            }
            if (em.e_sentence_j && !e["e_sentence_j"].is_null() &&
                !close_rel(e["e_sentence_j"].get<double>(), *em.e_sentence_j)) {
                mismatches.push_back("energy.e_sentence_j");
            }
        }
    }

    // overhead clamp
    if (!doc["model"]["overhead_mb"].is_null() && !doc["model"]["size_mb"].is_null() &&
        res.mem_mb.avg) {
        const double fresh = overhead_mb(*res.mem_mb.avg, doc["model"]["size_mb"].get<double>());
        if (!close_rel(doc["model"]["overhead_mb"].get<double>(), fresh)) {
            mismatches.push_back("model.overhead_mb mismatch");
        }
    }

    // cold start identity
    if (!doc["cold_start"].is_null()) {
        const auto& c = doc["cold_start"];
        const double sum = c["startup_s"].get<double>() + c["load_s"].get<double>() +
                           c["probe_ttft_s"].get<double>();
        if (c["cold_s"].get<double>() != sum) {
            mismatches.push_back("cold_start.cold_s is not the exact component sum");
        }
    }

    // server section
    if (!doc["server"].is_null()) {
        std::vector<RequestRecord> rel;
        for (const auto& row : run.rows) {
            if (row.status != RequestStatus::ok || !row.first_token_s || !row.completion_s) {
                continue;
            }
            RequestRecord r;
            r.status = RequestStatus::ok;
            r.arrival_time = row.arrival_s;
            r.dispatch_time = row.dispatch_s;
            r.first_token_time = *row.first_token_s;
            r.completion_time = *row.completion_s;
            rel.push_back(r);
        }
        const auto& s = doc["server"];
        const ServerLatencyMetrics slm =
            server_latency(rel, s["qos"]["ttft_threshold_s"].get<double>(),
                           s["qos"]["e2e_threshold_s"].get<double>());
        check_agg("server.queue_s", s["queue_s"], slm.queue_s, mismatches);
        check_agg("server.e2e_s", s["e2e_s"], slm.e2e_s, mismatches);
        check_agg("server.ttft_from_arrival_s", s["ttft_from_arrival_s"],
                  slm.ttft_from_arrival_s, mismatches);
        if (!close_rel(s["qos"]["ttft_violation_rate"].get<double>(), slm.ttft_violation_rate) ||
            !close_rel(s["qos"]["e2e_violation_rate"].get<double>(), slm.e2e_violation_rate)) {
            mismatches.push_back("server.qos violation rates mismatch");
        }
    }

    // quality means
    for (const auto& q : doc["quality"]) {
        double sum = 0;
        size_t n = 0;
        for (const auto& pair : q["per_instance"]) {
            sum += pair[1].get<double>();
            n++;
        }
        const double mean = n ? sum / static_cast<double>(n) : 0.0;
        if (!close_rel(q["value"].get<double>(), mean)) {
            mismatches.push_back("quality." + q["metric"].get<std::string>() +
                                 ": value is not the mean of per_instance");
        }
    }

    return mismatches;
}

// ---------------------------------------------------------------------------
// cross-run comparison

struct ComparisonResult {
    std::string text;
    nlohmann::json doc;
};

inline ComparisonResult compare_runs(const LoadedRun& base,
                                     const std::vector<LoadedRun>& variants) {
    auto schema_of = [](const LoadedRun& r) {
        return r.doc["schema_version"].get<std::string>();
    };
    auto task_of = [](const LoadedRun& r) { return r.doc["config"]["task"].get<std::string>(); };
    for (const auto& v : variants) {
        if (schema_of(v) != schema_of(base)) {
            throw ReportError("schema_version mismatch between runs");
        }
        if (task_of(v) != task_of(base)) {
            throw ReportError("task mismatch: base is " + task_of(base) + ", variant is " +
                              task_of(v));
        }
    }

    struct Cell {
        std::string run_id;
        std::optional<double> quality, tpot_ms, e_token_j;
    };
    auto extract = [](const LoadedRun& r) {
        Cell c;
        c.run_id = r.doc["run_id"].get<std::string>();
        if (!r.doc["quality"].empty()) c.quality = r.doc["quality"][0]["value"].get<double>();
        if (r.doc["latency"].contains("tpot_s")) {
            c.tpot_ms = r.doc["latency"]["tpot_s"]["mean"].get<double>() * 1e3;
        }
        if (!r.doc["energy"].is_null() && r.doc["energy"].contains("e_token_j") &&
            !r.doc["energy"]["e_token_j"].is_null()) {
            c.e_token_j = r.doc["energy"]["e_token_j"].get<double>();
        }
        return c;
    };

    const Cell base_cell = extract(base);
    std::vector<Cell> cells{base_cell};
    for (const auto& v : variants) cells.push_back(extract(v));

    std::string metric_name = "quality";
    if (!base.doc["quality"].empty()) {
        metric_name = base.doc["quality"][0]["metric"].get<std::string>();
    }

    ComparisonResult out;
    out.doc["schema_version"] = kReportSchemaVersion;
    out.doc["task"] = task_of(base);
    out.doc["quality_metric"] = metric_name;
    out.doc["base_run_id"] = base_cell.run_id;
    out.doc["runs"] = nlohmann::json::array();

    std::ostringstream os;
    os << "task=" << task_of(base) << "  quality_metric=" << metric_name
       << "  base=" << base_cell.run_id << "\n";
    char header[256];
    std::snprintf(header, sizeof(header), "%-28s %10s %9s %12s %10s %12s %9s\n", "run",
                  metric_name.c_str(), "dQ(%)", "TPOT(ms)", "dTPOT(%)", "J/token", "dE(%)");
    os << header;

    auto fmt_opt = [](const std::optional<double>& v, const char* fmt) {
        char buf[64];
        if (!v) return std::string("n/a");
        std::snprintf(buf, sizeof(buf), fmt, *v);
        return std::string(buf);
    };

    std::vector<ParetoPoint> tpot_points, energy_points;
    std::vector<size_t> tpot_idx, energy_idx;
    for (size_t i = 0; i < cells.size(); ++i) {
        const Cell& c = cells[i];
        std::optional<double> dq, dtpot, de;
        if (c.quality && base_cell.quality) dq = delta_pct(*base_cell.quality, *c.quality);
        if (c.tpot_ms && base_cell.tpot_ms) dtpot = delta_pct(*base_cell.tpot_ms, *c.tpot_ms);
        if (c.e_token_j && base_cell.e_token_j) {
            de = delta_pct(*base_cell.e_token_j, *c.e_token_j);
        }
        char line[512];
        std::snprintf(line, sizeof(line), "%-28s %10s %9s %12s %10s %12s %9s\n",
                      c.run_id.c_str(), fmt_opt(c.quality, "%.4f").c_str(),
                      fmt_opt(dq, "%.3f").c_str(), fmt_opt(c.tpot_ms, "%.3f").c_str(),
                      fmt_opt(dtpot, "%.3f").c_str(), fmt_opt(c.e_token_j, "%.4f").c_str(),
                      fmt_opt(de, "%.3f").c_str());
        os << line;
        nlohmann::json jrun = {{"run_id", c.run_id},
                               {"quality", report_detail::opt_to_json(c.quality)},
                               {"tpot_ms", report_detail::opt_to_json(c.tpot_ms)},
                               {"e_token_j", report_detail::opt_to_json(c.e_token_j)},
                               {"dq_pct", report_detail::opt_to_json(dq)},
                               {"dtpot_pct", report_detail::opt_to_json(dtpot)},
                               {"de_pct", report_detail::opt_to_json(de)}};
        out.doc["runs"].push_back(jrun);

        if (c.quality && c.tpot_ms) {
            tpot_points.push_back({*c.quality, *c.tpot_ms});
            tpot_idx.push_back(i);
        }
        if (c.quality && c.e_token_j) {
            energy_points.push_back({*c.quality, *c.e_token_j});
            energy_idx.push_back(i);
        }
    }

    auto frontier_ids = [&](const std::vector<ParetoPoint>& pts,
                            const std::vector<size_t>& idx) {
        nlohmann::json ids = nlohmann::json::array();
        for (size_t k : pareto_frontier(pts)) ids.push_back(cells[idx[k]].run_id);
        return ids;
    };
    out.doc["pareto_quality_vs_tpot"] = frontier_ids(tpot_points, tpot_idx);
    out.doc["pareto_quality_vs_energy"] = frontier_ids(energy_points, energy_idx);
    os << "pareto (quality max vs TPOT min): ";
    for (const auto& id : out.doc["pareto_quality_vs_tpot"]) os << id.get<std::string>() << " ";
    os << "\npareto (quality max vs J/token min): ";
    for (const auto& id : out.doc["pareto_quality_vs_energy"]) os << id.get<std::string>() << " ";
    os << "\n";
    out.text = os.str();
    return out;
}

}  // namespace llmbench
