#pragma once

// Metric computation over request records and telemetry windows.
//
//   TTFT = first_token - dispatch          TPOT = T_gen / N_t
//   GL   = TPOT * N_t = T_gen              TPS  = sum(N_t) / wall
//   SPS  = sum(N_s) / wall                 E_Wh = mean_power * T_gen / 3600
//   E_J  = E_Wh * 3600                     E/token = E_J / sum(N_t)
//   overhead = max(mean_mem - model_size, 0)
//
// TPOT divides by all N_t tokens. Energy uses mean power times generation
// time; a trapezoidal integral of the power series is reported separately
// as energy_j_integrated for anyone who wants the integrated value.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "llmbench/backend.hpp"
#include "llmbench/telemetry.hpp"

namespace llmbench {

struct AggregateStat {
    double mean = 0;
    std::optional<double> ci95_half_width;  // absent for n = 1
    size_t n = 0;
    double p50 = 0, p95 = 0;
    double min = 0, max = 0;
};

// Mean, 1.96 * s / sqrt(n) half-width, nearest-rank percentiles.
inline AggregateStat aggregate(std::vector<double> values) {
    AggregateStat a;
    a.n = values.size();
    if (a.n == 0) return a;
    std::sort(values.begin(), values.end());
    a.min = values.front();
    a.max = values.back();
    const double sum = std::accumulate(values.begin(), values.end(), 0.0);
    a.mean = sum / static_cast<double>(a.n);
    auto nearest_rank = [&](double pct) {
        const size_t rank = static_cast<size_t>(
            std::ceil(pct / 100.0 * static_cast<double>(a.n)));
        return values[std::max<size_t>(rank, 1) - 1];
    };
    a.p50 = nearest_rank(50.0);
    a.p95 = nearest_rank(95.0);
    if (a.n >= 2) {
        double ss = 0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        const double stddev = std::sqrt(ss / static_cast<double>(a.n - 1));
        a.ci95_half_width = 1.96 * stddev / std::sqrt(static_cast<double>(a.n));
    }
    return a;
}

struct LatencyTriple {
    double ttft_s = 0;
    double tpot_s = 0;
    double gl_s = 0;
};

inline LatencyTriple per_request_latency(const RequestRecord& rec) {
    LatencyTriple l;
    l.ttft_s = rec.first_token_time - rec.dispatch_time;
    const double t_gen = rec.completion_time - rec.first_token_time;
    l.tpot_s = t_gen / static_cast<double>(rec.completion_tokens);
    l.gl_s = t_gen;
    return l;
}

struct ThroughputMetrics {
    double tps = 0;
    double sps = 0;
};

inline ThroughputMetrics throughput(const std::vector<RequestRecord>& records,
                                    double wall_time_s) {
    ThroughputMetrics t;
    if (wall_time_s <= 0) return t;
    uint64_t tokens = 0, sentences = 0;
    for (const auto& r : records) {
        if (r.status != RequestStatus::ok) continue;
        tokens += r.completion_tokens;
        sentences += r.sentence_count;
    }
    t.tps = static_cast<double>(tokens) / wall_time_s;
    t.sps = static_cast<double>(sentences) / wall_time_s;
    return t;
}

struct FieldStats {
    std::optional<double> avg;
    std::optional<double> peak;
    size_t n = 0;
};

struct ResourceStats {
    FieldStats mem_mb, util_pct, power_w, cpu_pct, ram_mb;
};

inline ResourceStats resource_stats(const TelemetrySeries& series) {
    ResourceStats out;
    auto fold = [&](FieldStats& fs, auto getter) {
        double sum = 0, peak = 0;
        size_t n = 0;
        for (const auto& s : series.samples) {
            const std::optional<double>& v = getter(s);
            if (!v) continue;
            sum += *v;
            peak = (n == 0) ? *v : std::max(peak, *v);
            n++;
        }
        fs.n = n;
        if (n > 0) {
            fs.avg = sum / static_cast<double>(n);
            fs.peak = peak;
        }
    };
    fold(out.mem_mb, [](const TelemetrySample& s) { return s.gpu_mem_mb; });
    fold(out.util_pct, [](const TelemetrySample& s) { return s.gpu_util_pct; });
    fold(out.power_w, [](const TelemetrySample& s) { return s.power_w; });
    fold(out.cpu_pct, [](const TelemetrySample& s) { return s.cpu_pct; });
    fold(out.ram_mb, [](const TelemetrySample& s) { return s.ram_mb; });
    return out;
}

struct EnergyMetrics {
    double e_wh = 0;
    double e_j = 0;
    std::optional<double> e_token_j;     // absent when no tokens
    std::optional<double> e_sentence_j;  // absent when no sentences
};

inline EnergyMetrics energy(double mean_power_w, double t_gen_s, uint64_t total_tokens,
                            uint64_t total_sentences) {
    EnergyMetrics e;
    e.e_wh = mean_power_w * t_gen_s / 3600.0;
    e.e_j = e.e_wh * 3600.0;
    if (total_tokens > 0) e.e_token_j = e.e_j / static_cast<double>(total_tokens);
    if (total_sentences > 0) e.e_sentence_j = e.e_j / static_cast<double>(total_sentences);
    return e;
}

// Trapezoidal integral of the (t, power) series, in joules. Reported next to
// the mean-power energy under a distinct name.
inline std::optional<double> trapezoid_energy_j(const TelemetrySeries& series) {
    std::optional<double> prev_t, prev_p;
    double acc = 0;
    size_t segments = 0;
    for (const auto& s : series.samples) {
        if (!s.power_w) continue;
        if (prev_t) {
            acc += 0.5 * (*prev_p + *s.power_w) * (s.t - *prev_t);
            segments++;
        }
        prev_t = s.t;
        prev_p = s.power_w;
    }
    if (segments == 0) return std::nullopt;
    return acc;
}

inline double overhead_mb(double mem_avg_mb, double model_size_mb) {
    return std::max(mem_avg_mb - model_size_mb, 0.0);
}

struct ServerLatencyMetrics {
    AggregateStat queue_s;              // dispatch - arrival (harness-side delay)
    AggregateStat e2e_s;                // completion - arrival
    AggregateStat ttft_from_arrival_s;  // first_token - arrival (user-perceived)
    double ttft_violation_rate = 0;     // fraction of ok records over qos_ttft_s
    double e2e_violation_rate = 0;
};

inline ServerLatencyMetrics server_latency(const std::vector<RequestRecord>& records,
                                           double qos_ttft_s, double qos_e2e_s) {
    ServerLatencyMetrics m;
    std::vector<double> queue, e2e, ttft_arr;
    size_t ttft_viol = 0, e2e_viol = 0, n_ok = 0;
    for (const auto& r : records) {
        if (r.status != RequestStatus::ok) continue;
        n_ok++;
        queue.push_back(r.dispatch_time - r.arrival_time);
        const double end_to_end = r.completion_time - r.arrival_time;
        const double first_from_arrival = r.first_token_time - r.arrival_time;
        e2e.push_back(end_to_end);
        ttft_arr.push_back(first_from_arrival);
        if (first_from_arrival > qos_ttft_s) ttft_viol++;
        if (end_to_end > qos_e2e_s) e2e_viol++;
    }
    if (n_ok > 0) {
        m.queue_s = aggregate(queue);
        m.e2e_s = aggregate(e2e);
        m.ttft_from_arrival_s = aggregate(ttft_arr);
        m.ttft_violation_rate = static_cast<double>(ttft_viol) / static_cast<double>(n_ok);
        m.e2e_violation_rate = static_cast<double>(e2e_viol) / static_cast<double>(n_ok);
    }
    return m;
}

// Sum of weight-file sizes at `path` in MB (10^6 bytes). `file_glob` filters
// basenames; "*" sums every regular file. A single-file path is its own size.
inline std::optional<double> model_size_mb(const std::string& path,
                                           const std::string& file_glob,
                                           std::vector<std::string>* warnings) {
    namespace fs = std::filesystem;
    std::error_code ec;
    const fs::file_status st = fs::status(path, ec);
    if (ec || st.type() == fs::file_type::not_found) {
        if (warnings) warnings->push_back("model path not found, size unavailable: " + path);
        return std::nullopt;
    }
    auto glob_match = [](const std::string& pattern, const std::string& name) {
        // minimal glob: '*' wildcards, everything else literal
        std::function<bool(size_t, size_t)> match = [&](size_t p, size_t n) -> bool {
            while (p < pattern.size()) {
                if (pattern[p] == '*') {
                    for (size_t k = n; k <= name.size(); ++k) {
                        if (match(p + 1, k)) return true;
                    }
                    return false;
                }
                if (n >= name.size() || pattern[p] != name[n]) return false;
                p++;
                n++;
            }
            return n == name.size();
        };
        return match(0, 0);
    };
    uint64_t total = 0;
    if (fs::is_regular_file(st)) {
        total = fs::file_size(path, ec);
    } else if (fs::is_directory(st)) {
        size_t matched = 0;
        for (const auto& entry : fs::recursive_directory_iterator(path, ec)) {
            if (!entry.is_regular_file()) continue;
            if (!glob_match(file_glob, entry.path().filename().string())) continue;
            total += entry.file_size(ec);
            matched++;
        }
        if (matched == 0 && warnings) {
            warnings->push_back("model directory has no files matching '" + file_glob +
                                "': " + path);
        }
    }
    return static_cast<double>(total) / 1e6;
}

}  // namespace llmbench
