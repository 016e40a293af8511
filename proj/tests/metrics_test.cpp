#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "llmbench/metrics.hpp"
#include "test_util.hpp"

using namespace llmbench;
using testutil::TempDir;

namespace {

RequestRecord ok_record(double dispatch, double first, double completion, uint64_t tokens,
                        uint64_t sentences = 1) {
    RequestRecord r;
    r.status = RequestStatus::ok;
    r.arrival_time = dispatch;
    r.dispatch_time = dispatch;
    r.first_token_time = first;
    r.completion_time = completion;
    r.completion_tokens = tokens;
    r.sentence_count = sentences;
    return r;
}

TelemetrySeries constant_power_series(double watts, size_t n, double t0 = 0,
                                      double interval = 1.0) {
    TelemetrySeries s;
    s.interval_s = interval;
    for (size_t i = 0; i < n; ++i) {
        TelemetrySample ts;
        ts.t = t0 + static_cast<double>(i) * interval;
        ts.power_w = watts;
        s.samples.push_back(ts);
    }
    return s;
}

// --- per-request latency (Eqs. 1-3) ---

TEST(PerRequestLatency, DirectSubstitution) {
    const LatencyTriple l = per_request_latency(ok_record(0.0, 0.35, 5.15, 96));
    EXPECT_NEAR(l.ttft_s, 0.35, 1e-12);
    EXPECT_NEAR(l.tpot_s, 0.05, 1e-12);
    EXPECT_NEAR(l.gl_s, 4.8, 1e-12);
}

TEST(PerRequestLatency, SingleTokenDegenerate) {
    const LatencyTriple l = per_request_latency(ok_record(0.0, 0.1, 0.6, 1));
    EXPECT_DOUBLE_EQ(l.tpot_s, l.gl_s);
}

TEST(PerRequestLatency, ReportedMagnitudes) {
    // TTFT 45 ms, 32 tokens over 3.04 s of generation -> TPOT 95 ms/token
    const LatencyTriple l = per_request_latency(ok_record(0.0, 0.045, 0.045 + 3.04, 32));
    EXPECT_NEAR(l.ttft_s, 0.045, 1e-12);
    EXPECT_NEAR(l.tpot_s, 0.095, 1e-12);
}

TEST(PerRequestLatency, IdentityHoldsOnRandomRecords) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.001, 10.0);
    std::uniform_int_distribution<uint64_t> toks(1, 4096);
    for (int i = 0; i < 10000; ++i) {
        const double d = u(rng);
        const double f = d + u(rng);
        const double c = f + u(rng);
        const RequestRecord r = ok_record(d, f, c, toks(rng));
        const LatencyTriple l = per_request_latency(r);
        const double gl = l.tpot_s * static_cast<double>(r.completion_tokens);
        EXPECT_LE(std::fabs(gl - l.gl_s), 1e-9 * std::max(1.0, std::fabs(l.gl_s)));
        EXPECT_DOUBLE_EQ(l.ttft_s, r.first_token_time - r.dispatch_time);
        EXPECT_DOUBLE_EQ(l.gl_s, r.completion_time - r.first_token_time);
    }
}

// --- throughput (Eqs. 4-5) ---

TEST(Throughput, SpecExample) {
    std::vector<RequestRecord> recs;
    for (int i = 0; i < 10; ++i) recs.push_back(ok_record(0, 1, 2, 96, 4));
    const ThroughputMetrics t = throughput(recs, 12.0);
    EXPECT_DOUBLE_EQ(t.tps, 80.0);
    EXPECT_DOUBLE_EQ(t.sps, 40.0 / 12.0);
}

TEST(Throughput, NoOkRecordsIsZero) {
    std::vector<RequestRecord> recs(3);
    for (auto& r : recs) r.status = RequestStatus::http_error;
    EXPECT_DOUBLE_EQ(throughput(recs, 5.0).tps, 0.0);
}

TEST(Throughput, RecomputeFromRecordTable) {
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<uint64_t> toks(1, 300);
    std::vector<RequestRecord> recs;
    uint64_t total = 0;
    for (int i = 0; i < 128; ++i) {
        const uint64_t n = toks(rng);
        total += n;
        recs.push_back(ok_record(0, 1, 2, n));
    }
    const double wall = 17.25;
    const ThroughputMetrics t = throughput(recs, wall);
    EXPECT_LE(std::fabs(t.tps - static_cast<double>(total) / wall), 1e-9 * t.tps);
}

// --- resource stats (Eqs. 6-11) ---

TEST(ResourceStats, ConstantTrace) {
    const ResourceStats r = resource_stats(constant_power_series(100.0, 10));
    EXPECT_DOUBLE_EQ(*r.power_w.avg, 100.0);
    EXPECT_DOUBLE_EQ(*r.power_w.peak, 100.0);
}

TEST(ResourceStats, TwoPointTrace) {
    TelemetrySeries s;
    TelemetrySample a, b;
    a.t = 0;
    a.power_w = 80;
    b.t = 1;
    b.power_w = 120;
    s.samples = {a, b};
    const ResourceStats r = resource_stats(s);
    EXPECT_DOUBLE_EQ(*r.power_w.avg, 100.0);
    EXPECT_DOUBLE_EQ(*r.power_w.peak, 120.0);
}

TEST(ResourceStats, ValidityFiltering) {
    TelemetrySeries s = constant_power_series(100.0, 4);
    s.samples[1].power_w.reset();  // invalid sample is skipped
    s.samples[2].power_w = 400.0;
    const ResourceStats r = resource_stats(s);
    EXPECT_DOUBLE_EQ(*r.power_w.avg, 200.0);
    EXPECT_EQ(r.power_w.n, 3u);
}

TEST(ResourceStats, EmptyWindowAllAbsent) {
    const ResourceStats r = resource_stats(TelemetrySeries{});
    EXPECT_FALSE(r.power_w.avg.has_value());
    EXPECT_FALSE(r.mem_mb.avg.has_value());
}

TEST(ResourceStats, PeaksNeverBelowMeans) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 500);
    TelemetrySeries s;
    for (int i = 0; i < 200; ++i) {
        TelemetrySample ts;
        ts.t = i;
        ts.power_w = u(rng);
        ts.gpu_mem_mb = u(rng);
        ts.gpu_util_pct = u(rng) / 5.0;
        s.samples.push_back(ts);
    }
    const ResourceStats r = resource_stats(s);
    EXPECT_GE(*r.power_w.peak, *r.power_w.avg);
    EXPECT_GE(*r.mem_mb.peak, *r.mem_mb.avg);
    EXPECT_GE(*r.util_pct.peak, *r.util_pct.avg);
}

// --- energy (Eqs. 12-15) ---

TEST(Energy, ExactArithmetic) {
    const EnergyMetrics e = energy(120.0, 30.0, 360, 12);
    EXPECT_DOUBLE_EQ(e.e_wh, 1.0);
    EXPECT_DOUBLE_EQ(e.e_j, 3600.0);
    EXPECT_DOUBLE_EQ(*e.e_token_j, 10.0);
    EXPECT_DOUBLE_EQ(*e.e_sentence_j, 300.0);
}

TEST(Energy, SecondExample) {
    const EnergyMetrics e = energy(100.0, 10.0, 100, 0);
    EXPECT_DOUBLE_EQ(*e.e_token_j, 10.0);
    EXPECT_FALSE(e.e_sentence_j.has_value());
}

TEST(Energy, ZeroGenerationTime) {
    const EnergyMetrics e = energy(100.0, 0.0, 0, 0);
    EXPECT_DOUBLE_EQ(e.e_wh, 0.0);
    EXPECT_DOUBLE_EQ(e.e_j, 0.0);
    EXPECT_FALSE(e.e_token_j.has_value());
}

TEST(Energy, JouleWattHourIdentity) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.1, 500.0);
    for (int i = 0; i < 1000; ++i) {
        const EnergyMetrics e = energy(u(rng), u(rng), 100, 10);
        EXPECT_DOUBLE_EQ(e.e_j, e.e_wh * 3600.0);
    }
}

TEST(Energy, TrapezoidMatchesConstantTrace) {
    // constant 100 W for 9 one-second segments = 900 J
    const auto e = trapezoid_energy_j(constant_power_series(100.0, 10));
    ASSERT_TRUE(e.has_value());
    EXPECT_NEAR(*e, 900.0, 1e-9);
}

// --- overhead (Eq. 16) ---

TEST(Overhead, SpecExample) {
    EXPECT_DOUBLE_EQ(overhead_mb(18000.0, 14526.0), 3474.0);
}

TEST(Overhead, ClampProperty) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 50000);
    for (int i = 0; i < 10000; ++i) {
        const double mem = u(rng), size = u(rng);
        const double o = overhead_mb(mem, size);
        EXPECT_GE(o, 0.0);
        EXPECT_DOUBLE_EQ(o, std::max(mem - size, 0.0));
    }
    EXPECT_DOUBLE_EQ(overhead_mb(100.0, 100.0), 0.0);
    EXPECT_DOUBLE_EQ(overhead_mb(50.0, 100.0), 0.0);
}

// --- server latency + QoS ---

TEST(ServerLatency, Substitution) {
    RequestRecord r = ok_record(0.004, 1.2, 4.0, 10);
    r.arrival_time = 0.0;
    const ServerLatencyMetrics m = server_latency({r}, 2.0, 6.0);
    EXPECT_NEAR(m.queue_s.mean, 0.004, 1e-12);
    EXPECT_NEAR(m.e2e_s.mean, 4.0, 1e-12);
    EXPECT_DOUBLE_EQ(m.ttft_violation_rate, 0.0);
    EXPECT_DOUBLE_EQ(m.e2e_violation_rate, 0.0);
}

TEST(ServerLatency, E2eViolation) {
    RequestRecord r = ok_record(0.0, 1.0, 7.0, 10);
    const ServerLatencyMetrics m = server_latency({r}, 2.0, 6.0);
    EXPECT_DOUBLE_EQ(m.e2e_violation_rate, 1.0);
    EXPECT_DOUBLE_EQ(m.ttft_violation_rate, 0.0);
}

TEST(ServerLatency, InstantRecordsNoViolations) {
    std::vector<RequestRecord> recs;
    for (int i = 0; i < 5; ++i) recs.push_back(ok_record(i, i + 0.01, i + 0.02, 4));
    const ServerLatencyMetrics m = server_latency(recs, 2.0, 6.0);
    EXPECT_DOUBLE_EQ(m.ttft_violation_rate, 0.0);
    EXPECT_DOUBLE_EQ(m.e2e_violation_rate, 0.0);
}

TEST(ServerLatency, TtftQosMeasuredFromArrival) {
    RequestRecord r = ok_record(1.5, 2.7, 3.0, 4);  // dispatch 1.5 s after arrival
    r.arrival_time = 0.0;
    // from dispatch TTFT is 1.2 s (< 2), from arrival it is 2.7 s (> 2)
    const ServerLatencyMetrics m = server_latency({r}, 2.0, 6.0);
    EXPECT_DOUBLE_EQ(m.ttft_violation_rate, 1.0);
}

// --- aggregate ---

TEST(Aggregate, SpecExample) {
    const AggregateStat a = aggregate({1, 2, 3, 4, 5});
    EXPECT_DOUBLE_EQ(a.mean, 3.0);
    ASSERT_TRUE(a.ci95_half_width.has_value());
    // 1.96 * stddev(1.5811) / sqrt(5)
    EXPECT_NEAR(*a.ci95_half_width, 1.3859, 1e-3);
    EXPECT_DOUBLE_EQ(a.p50, 3.0);
    EXPECT_DOUBLE_EQ(a.p95, 5.0);
    EXPECT_DOUBLE_EQ(a.min, 1.0);
    EXPECT_DOUBLE_EQ(a.max, 5.0);
}

TEST(Aggregate, SingleValueNoCi) {
    const AggregateStat a = aggregate({7.5});
    EXPECT_DOUBLE_EQ(a.mean, 7.5);
    EXPECT_FALSE(a.ci95_half_width.has_value());
}

TEST(Aggregate, ConstantListZeroCi) {
    const AggregateStat a = aggregate({2, 2, 2, 2});
    EXPECT_DOUBLE_EQ(*a.ci95_half_width, 0.0);
}

TEST(Aggregate, CiShrinksAsRootN) {
    // iid uniform data: ci(n) / ci(4n) ~ 2 within 10%
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> small, large;
    for (int i = 0; i < 10000; ++i) small.push_back(u(rng));
    for (int i = 0; i < 40000; ++i) large.push_back(u(rng));
    const double ratio = *aggregate(small).ci95_half_width / *aggregate(large).ci95_half_width;
    EXPECT_NEAR(ratio, 2.0, 0.2);
}

TEST(Aggregate, NearestRankPercentiles) {
    std::vector<double> v;
    for (int i = 1; i <= 100; ++i) v.push_back(i);
    const AggregateStat a = aggregate(v);
    EXPECT_DOUBLE_EQ(a.p50, 50.0);
    EXPECT_DOUBLE_EQ(a.p95, 95.0);
}

// --- model size ---

TEST(ModelSize, SumsFileSizes) {
    TempDir dir;
    testutil::write_file(dir.file("a.safetensors"), std::string(1000000, 'x'));
    testutil::write_file(dir.file("b.safetensors"), std::string(2000000, 'y'));
    std::vector<std::string> warnings;
    const auto size = model_size_mb(dir.path.string(), "*", &warnings);
    ASSERT_TRUE(size.has_value());
    EXPECT_DOUBLE_EQ(*size, 3.0);
    EXPECT_TRUE(warnings.empty());
}

TEST(ModelSize, GlobFilters) {
    TempDir dir;
    testutil::write_file(dir.file("w.safetensors"), std::string(1000000, 'x'));
    testutil::write_file(dir.file("readme.md"), std::string(500000, 'y'));
    std::vector<std::string> warnings;
    const auto size = model_size_mb(dir.path.string(), "*.safetensors", &warnings);
    EXPECT_DOUBLE_EQ(*size, 1.0);
}

TEST(ModelSize, EmptyDirectoryZeroWithWarning) {
    TempDir dir;
    std::vector<std::string> warnings;
    const auto size = model_size_mb(dir.path.string(), "*", &warnings);
    ASSERT_TRUE(size.has_value());
    EXPECT_DOUBLE_EQ(*size, 0.0);
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(ModelSize, MissingPathAbsentWithWarning) {
    std::vector<std::string> warnings;
    const auto size = model_size_mb("/nonexistent/model", "*", &warnings);
    EXPECT_FALSE(size.has_value());
    EXPECT_EQ(warnings.size(), 1u);
}

// --- telemetry window ---

TEST(Window, ClosedIntervalBoundary) {
    const TelemetrySeries s = constant_power_series(100.0, 10);  // t = 0..9
    EXPECT_EQ(window(s, 0, 9).samples.size(), 10u);   // identity
    EXPECT_EQ(window(s, 100, 200).samples.size(), 0u);  // none
    EXPECT_EQ(window(s, 2, 5).samples.size(), 4u);    // both endpoints included
}

TEST(Window, ConstantTraceMeanIsExact) {
    const TelemetrySeries s = constant_power_series(100.0, 50);
    const ResourceStats r = resource_stats(window(s, 10, 20));
    EXPECT_DOUBLE_EQ(*r.power_w.avg, 100.0);
}

}  // namespace
