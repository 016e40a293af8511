#pragma once

// Deterministic RNG used for arrival planning and dataset subsampling.
// splitmix64 with hand-rolled double / bounded-int / exponential conversions,
// so the same seed yields bit-identical streams on every platform and
// standard library (std::*_distribution is implementation-defined).

#include <cstdint>
#include <vector>

namespace llmbench {

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in the open interval (0, 1); never returns 0 or 1, so
    // -log(u) is always finite and positive.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    uint64_t bounded(uint64_t n) {
        if (n <= 1) return 0;
        const uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Derive an independent stream (per-user arrival processes).
    Rng fork(uint64_t stream_id) {
        Rng mixer(state_ ^ (0xd1b54a32d192ed03ULL * (stream_id + 1)));
        mixer.next_u64();
        return Rng(mixer.next_u64());
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

}  // namespace llmbench
