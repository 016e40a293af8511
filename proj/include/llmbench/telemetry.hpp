#pragma once

// Resource telemetry: a background sampler polls a pluggable provider at a
// fixed interval and appends to an in-memory series. Providers fill whatever
// fields they know; everything else stays invalid (empty optional). The
// series schema is identical across providers.

#include <sys/types.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <dirent.h>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "llmbench/clock.hpp"

namespace llmbench {

struct TelemetrySample {
    double t = 0;  // shared monotonic clock
    std::optional<double> gpu_mem_mb;
    std::optional<double> gpu_util_pct;
    std::optional<double> power_w;
    std::optional<double> cpu_pct;
    std::optional<double> ram_mb;
};

struct TelemetrySeries {
    std::vector<TelemetrySample> samples;
    double interval_s = 0.1;
    std::string provider = "null";
};

class TelemetryProvider {
public:
    virtual ~TelemetryProvider() = default;
    virtual void sample(TelemetrySample& out) = 0;  // fill known fields
    virtual std::string name() const = 0;
};

class NullProvider : public TelemetryProvider {
public:
    void sample(TelemetrySample&) override {}
    std::string name() const override { return "null"; }
};

// Runs an external command per sample; the command prints one CSV line
// "mem_mb,util_pct,power_w". mem_unit=mib converts MiB readings to MB.
class CommandProvider : public TelemetryProvider {
public:
    explicit CommandProvider(std::string command, std::string mem_unit = "mb")
        : command_(std::move(command)), mib_(mem_unit == "mib") {}

    void sample(TelemetrySample& out) override {
        FILE* pipe = ::popen((command_ + " 2>/dev/null").c_str(), "r");
        if (!pipe) return;
        char line[512] = {0};
        const bool got = ::fgets(line, sizeof(line), pipe) != nullptr;
        ::pclose(pipe);
        if (!got) return;
        double mem = 0, util = 0, power = 0;
        if (std::sscanf(line, " %lf , %lf , %lf", &mem, &util, &power) == 3) {
            out.gpu_mem_mb = mib_ ? mem * 1.048576 : mem;
            out.gpu_util_pct = util;
            out.power_w = power;
        }
    }

    std::string name() const override { return "command"; }

private:
    std::string command_;
    bool mib_;
};

// Replays a recorded trace row by row, one row per sampler tick; when the
// trace is exhausted the remaining samples are invalid.
class ReplayProvider : public TelemetryProvider {
public:
    explicit ReplayProvider(std::vector<TelemetrySample> rows) : rows_(std::move(rows)) {}

    static ReplayProvider from_file(const std::string& path) {
        return ReplayProvider(load_trace(path).samples);
    }

    void sample(TelemetrySample& out) override {
        if (index_ >= rows_.size()) return;
        const TelemetrySample& row = rows_[index_++];
        out.gpu_mem_mb = row.gpu_mem_mb;
        out.gpu_util_pct = row.gpu_util_pct;
        out.power_w = row.power_w;
        out.cpu_pct = row.cpu_pct;
        out.ram_mb = row.ram_mb;
    }

    std::string name() const override { return "replay"; }

    // Trace CSV: header t_s,mem_mb,util_pct,power_w,cpu_pct,ram_mb; empty
    // cells are invalid fields.
    static TelemetrySeries load_trace(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("telemetry trace not found: " + path);
        TelemetrySeries series;
        series.provider = "replay";
        std::string line;
        bool header = true;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (header) {
                header = false;
                continue;
            }
            std::stringstream ss(line);
            std::string cell;
            TelemetrySample s;
            int col = 0;
            while (std::getline(ss, cell, ',')) {
                std::optional<double> v;
                if (cell.find_first_not_of(" \t\r") != std::string::npos) v = std::stod(cell);
                switch (col++) {
                    case 0: s.t = v.value_or(0); break;
                    case 1: s.gpu_mem_mb = v; break;
                    case 2: s.gpu_util_pct = v; break;
                    case 3: s.power_w = v; break;
                    case 4: s.cpu_pct = v; break;
                    case 5: s.ram_mb = v; break;
                    default: break;
                }
            }
            series.samples.push_back(s);
        }
        return series;
    }

private:
    std::vector<TelemetrySample> rows_;
    size_t index_ = 0;
};

// CPU%/RSS for a locally launched backend's process tree (Linux /proc).
class ProcessTreeProbe {
public:
    explicit ProcessTreeProbe(pid_t root) : root_(root) {}

    void sample(TelemetrySample& out) {
        std::vector<pid_t> pids = collect_tree();
        if (pids.empty()) return;
        uint64_t jiffies = 0;
        double rss_mb = 0;
        for (pid_t pid : pids) {
            uint64_t j = 0;
            double r = 0;
            if (read_proc(pid, j, r)) {
                jiffies += j;
                rss_mb += r;
            }
        }
        out.ram_mb = rss_mb;
        const double now = mono_now();
        if (prev_t_ > 0 && now > prev_t_) {
            const double hz = static_cast<double>(::sysconf(_SC_CLK_TCK));
            const double dj = jiffies >= prev_jiffies_
                                  ? static_cast<double>(jiffies - prev_jiffies_)
                                  : 0.0;
            out.cpu_pct = dj / hz / (now - prev_t_) * 100.0;
        }
        prev_jiffies_ = jiffies;
        prev_t_ = now;
    }

private:
    std::vector<pid_t> collect_tree() {
        std::vector<std::pair<pid_t, pid_t>> all;  // (pid, ppid)
        DIR* d = ::opendir("/proc");
        if (!d) return {};
        while (struct dirent* e = ::readdir(d)) {
            char* end = nullptr;
            const long pid = std::strtol(e->d_name, &end, 10);
            if (!end || *end != '\0' || pid <= 0) continue;
            std::ifstream stat("/proc/" + std::to_string(pid) + "/stat");
            std::string content;
            std::getline(stat, content);
            const size_t close = content.rfind(')');
            if (close == std::string::npos) continue;
            std::stringstream ss(content.substr(close + 2));
            std::string state;
            pid_t ppid = 0;
            ss >> state >> ppid;
            all.emplace_back(static_cast<pid_t>(pid), ppid);
        }
        ::closedir(d);
        std::vector<pid_t> tree{root_};
        bool grew = true;
        while (grew) {
            grew = false;
            for (const auto& [pid, ppid] : all) {
                if (std::find(tree.begin(), tree.end(), pid) != tree.end()) continue;
                if (std::find(tree.begin(), tree.end(), ppid) != tree.end()) {
                    tree.push_back(pid);
                    grew = true;
                }
            }
        }
        return tree;
    }

    static bool read_proc(pid_t pid, uint64_t& jiffies, double& rss_mb) {
        std::ifstream stat("/proc/" + std::to_string(pid) + "/stat");
        if (!stat) return false;
        std::string content;
        std::getline(stat, content);
        const size_t close = content.rfind(')');
        if (close == std::string::npos) return false;
        std::stringstream ss(content.substr(close + 2));
        std::string tok;
        // fields after comm: state(1) ppid(2) ... utime(12) stime(13) ... rss(22)
        uint64_t utime = 0, stime = 0;
        long rss_pages = 0;
        for (int i = 1; ss >> tok; ++i) {
            if (i == 12) utime = std::stoull(tok);
            if (i == 13) stime = std::stoull(tok);
            if (i == 22) {
                rss_pages = std::stol(tok);
                break;
            }
        }
        jiffies = utime + stime;
        rss_mb = static_cast<double>(rss_pages) * ::sysconf(_SC_PAGESIZE) / 1e6;
        return true;
    }

    pid_t root_;
    uint64_t prev_jiffies_ = 0;
    double prev_t_ = 0;
};

// Background sampler. Append-only while running; the series is read after
// stop(), which is idempotent.
class Sampler {
public:
    Sampler(std::shared_ptr<TelemetryProvider> provider, double interval_s,
            std::optional<pid_t> backend_pid = std::nullopt)
        : provider_(std::move(provider)), interval_s_(interval_s) {
        series_.interval_s = interval_s;
        series_.provider = provider_->name();
        if (backend_pid) proc_probe_ = std::make_unique<ProcessTreeProbe>(*backend_pid);
        running_ = true;
        thread_ = std::thread([this] { loop(); });
    }

    ~Sampler() { stop(); }

    const TelemetrySeries& stop() {
        bool was_running = running_.exchange(false);
        if (was_running && thread_.joinable()) thread_.join();
        return series_;
    }

    const TelemetrySeries& series() const { return series_; }  // valid after stop()

private:
    void loop() {
        const double start = mono_now();
        for (uint64_t k = 0; running_; ++k) {
            TelemetrySample s;
            s.t = mono_now();
            provider_->sample(s);
            if (proc_probe_) proc_probe_->sample(s);
            series_.samples.push_back(s);
            sleep_until_mono(start + static_cast<double>(k + 1) * interval_s_);
        }
    }

    std::shared_ptr<TelemetryProvider> provider_;
    double interval_s_;
    std::unique_ptr<ProcessTreeProbe> proc_probe_;
    TelemetrySeries series_;
    std::thread thread_;
    std::atomic<bool> running_{false};
};

// Samples with t in the closed interval [t0, t1].
inline TelemetrySeries window(const TelemetrySeries& series, double t0, double t1) {
    TelemetrySeries out;
    out.interval_s = series.interval_s;
    out.provider = series.provider;
    for (const auto& s : series.samples) {
        if (s.t >= t0 && s.t <= t1) out.samples.push_back(s);
    }
    return out;
}

}  // namespace llmbench
