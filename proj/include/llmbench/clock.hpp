#pragma once

// One process-wide monotonic clock. Every timestamp in the harness (request
// records, telemetry samples, cold-start components) is a double in seconds
// relative to the same steady_clock origin, so differences are meaningful
// across threads and modules.

#include <chrono>
#include <thread>

namespace llmbench {

namespace detail {
inline std::chrono::steady_clock::time_point clock_origin() {
    static const auto origin = std::chrono::steady_clock::now();
    return origin;
}
}  // namespace detail

inline double mono_now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         detail::clock_origin())
        .count();
}

inline void sleep_until_mono(double t) {
    std::this_thread::sleep_until(
        detail::clock_origin() +
        std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(t)));
}

inline void sleep_for_s(double s) {
    if (s > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(s));
    }
}

}  // namespace llmbench
