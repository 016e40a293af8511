#pragma once

// Workload controller: the three serving scenarios.
//
//   single  strictly sequential, request i+1 only after i completes
//   batch   consecutive waves of exactly batch_size concurrent requests
//           (last wave may be smaller); next wave after the whole wave done
//   server  open loop: pre-planned Poisson arrivals dispatched at their
//           offsets regardless of backlog, in-flight unbounded
//
// Sequence numbers and instance assignment are fixed by the plan before any
// request runs, so two runs with the same seed produce the same table layout
// no matter how the threads interleave.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <latch>
#include <string>
#include <thread>
#include <vector>

#include "llmbench/backend.hpp"
#include "llmbench/clock.hpp"
#include "llmbench/rng.hpp"
#include "llmbench/task.hpp"

namespace llmbench {

constexpr double kSchedulerTickS = 0.010;

struct ArrivalPlan {
    std::vector<std::vector<double>> per_user_arrivals;  // strictly increasing offsets
    double horizon_s = 0;

    size_t total_arrivals() const {
        size_t n = 0;
        for (const auto& u : per_user_arrivals) n += u.size();
        return n;
    }
};

struct ScenarioOutcome {
    std::vector<RequestRecord> records;  // ordered by seq
    double start_time = 0;               // scenario start on the shared clock
    double scenario_wall_time_s = 0;
    bool aborted = false;
    std::string abort_reason;
    std::vector<std::string> warnings;
};

// Independent Poisson processes, one per user: i.i.d. Exponential(rate) gaps,
// truncated at the horizon. Fully determined by (seed, users, rate, horizon).
inline ArrivalPlan plan_arrivals(uint32_t users, double rate_rpm, double horizon_s,
                                 uint64_t seed) {
    ArrivalPlan plan;
    plan.horizon_s = horizon_s;
    const double rate_per_s = rate_rpm / 60.0;
    Rng root(seed);
    plan.per_user_arrivals.resize(users);
    for (uint32_t u = 0; u < users; ++u) {
        Rng rng = root.fork(u);
        std::vector<double>& offsets = plan.per_user_arrivals[u];
        double t = 0;
        for (;;) {
            t += -std::log(rng.uniform01()) / rate_per_s;
            if (t >= horizon_s) break;
            offsets.push_back(t);
        }
    }
    return plan;
}

// Diagnostic dump: one line per arrival.
inline void dump_arrivals(const ArrivalPlan& plan, const std::string& path) {
    std::ofstream out(path);
    out << "user_id,offset_s\n";
    char buf[64];
    for (size_t u = 0; u < plan.per_user_arrivals.size(); ++u) {
        for (double offset : plan.per_user_arrivals[u]) {
            std::snprintf(buf, sizeof(buf), "%zu,%.9f\n", u, offset);
            out << buf;
        }
    }
}

namespace workload_detail {

inline RequestRecord execute(const ChatClient& client, const TaskInstance& inst, uint64_t seq) {
    RequestRecord rec = client.stream_completion(inst.prompt);
    rec.seq = seq;
    rec.instance_id = inst.id;
    return rec;
}

inline bool is_backend_failure(const RequestRecord& rec) {
    return rec.status == RequestStatus::http_error || rec.status == RequestStatus::stream_error;
}

}  // namespace workload_detail

inline ScenarioOutcome run_single_stream(const std::vector<TaskInstance>& instances,
                                         const ChatClient& client) {
    ScenarioOutcome out;
    out.start_time = mono_now();
    for (size_t i = 0; i < instances.size(); ++i) {
        RequestRecord rec = workload_detail::execute(client, instances[i], i);
        const bool failed = workload_detail::is_backend_failure(rec);
        out.records.push_back(std::move(rec));
        if (failed) {
            out.aborted = true;
            out.abort_reason = "backend failure at request " + std::to_string(i) + ": " +
                               out.records.back().error;
            break;
        }
    }
    out.scenario_wall_time_s = mono_now() - out.start_time;
    return out;
}

inline ScenarioOutcome run_batch(const std::vector<TaskInstance>& instances, uint32_t batch_size,
                                 const ChatClient& client) {
    ScenarioOutcome out;
    out.start_time = mono_now();
    if (batch_size < 1) {
        out.aborted = true;
        out.abort_reason = "batch_size must be >= 1";
        return out;
    }
    size_t next = 0;
    while (next < instances.size() && !out.aborted) {
        const size_t wave_size = std::min<size_t>(batch_size, instances.size() - next);
        std::vector<RequestRecord> wave(wave_size);
        std::latch go(1);
        std::vector<std::thread> threads;
        threads.reserve(wave_size);
        for (size_t k = 0; k < wave_size; ++k) {
            threads.emplace_back([&, k, seq = next + k] {
                go.wait();  // minimizes intra-wave dispatch skew
                wave[k] = workload_detail::execute(client, instances[seq], seq);
            });
        }
        go.count_down();
        for (auto& t : threads) t.join();
        for (auto& rec : wave) {
            if (workload_detail::is_backend_failure(rec) && !out.aborted) {
                out.aborted = true;
                out.abort_reason = "backend failure at request " + std::to_string(rec.seq) +
                                   ": " + rec.error;
            }
            out.records.push_back(std::move(rec));
        }
        next += wave_size;
    }
    out.scenario_wall_time_s = mono_now() - out.start_time;
    return out;
}

// Open-loop server scenario. Prompts cycle round-robin through the instance
// list; each arrival is dispatched at its planned offset. A dispatcher that
// falls more than 10 ticks behind records a harness-saturation warning but
// keeps going.
inline ScenarioOutcome run_server(const std::vector<TaskInstance>& instances,
                                  const ArrivalPlan& plan, const ChatClient& client) {
    ScenarioOutcome out;

    struct Arrival {
        double offset;
        size_t user;
    };
    std::vector<Arrival> arrivals;
    arrivals.reserve(plan.total_arrivals());
    for (size_t u = 0; u < plan.per_user_arrivals.size(); ++u) {
        for (double offset : plan.per_user_arrivals[u]) arrivals.push_back({offset, u});
    }
    std::sort(arrivals.begin(), arrivals.end(), [](const Arrival& a, const Arrival& b) {
        return a.offset != b.offset ? a.offset < b.offset : a.user < b.user;
    });

    if (instances.empty() && !arrivals.empty()) {
        out.aborted = true;
        out.abort_reason = "server scenario has arrivals but no instances";
        return out;
    }

    out.records.resize(arrivals.size());
    out.start_time = mono_now();
    const double start = out.start_time;

    std::vector<std::thread> executors;
    executors.reserve(arrivals.size());
    double max_lag = 0;
    size_t late_dispatches = 0;

    for (size_t seq = 0; seq < arrivals.size(); ++seq) {
        const double due = start + arrivals[seq].offset;
        sleep_until_mono(due);
        const double lag = mono_now() - due;
        if (lag > 10 * kSchedulerTickS) {
            late_dispatches++;
            max_lag = std::max(max_lag, lag);
        }
        executors.emplace_back([&client, &instances, &out, seq, due] {
            const TaskInstance& inst = instances[seq % instances.size()];
            RequestRecord rec = workload_detail::execute(client, inst, seq);
            rec.arrival_time = due;  // planned arrival instant
            out.records[seq] = std::move(rec);
        });
    }
    sleep_until_mono(start + plan.horizon_s);
    for (auto& t : executors) t.join();

    if (late_dispatches > 0) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "harness saturation: %zu dispatches more than 10 ticks late (max lag %.3f s)",
                      late_dispatches, max_lag);
        out.warnings.emplace_back(buf);
    }

    double last_completion = start + plan.horizon_s;
    for (const auto& rec : out.records) {
        last_completion = std::max(last_completion, rec.completion_time);
    }
    out.scenario_wall_time_s = last_completion - start;
    return out;
}

}  // namespace llmbench
