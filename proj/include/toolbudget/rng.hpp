#pragma once
// Labeled, replayable RNG streams.
//
// Every run derives its streams from the task seed by label ("policy",
// "env", "oracle"), so concurrent tasks never share generator state and a
// replay with the same seed is bit-identical. Raw draws come from
// std::mt19937_64 (bit-exact across platforms); the distribution helpers
// below avoid <random> distributions, whose output is implementation
// defined.

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace toolbudget {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
    std::uint64_t h = base;
    for (char c : label) h = splitmix64(h ^ static_cast<std::uint8_t>(c));
    return splitmix64(h);
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}
    RngStream(std::uint64_t base, std::string_view label) : gen_(derive_seed(base, label)) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform double in [0, 1)
    double next_unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // uniform integer in [lo, hi], inclusive
    std::uint64_t next_in(std::uint64_t lo, std::uint64_t hi) {
        const std::uint64_t span = hi - lo + 1;
        // rejection sampling keeps the draw unbiased
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return lo + x % span;
    }

    bool bernoulli(double p) { return next_unit() < p; }

private:
    std::mt19937_64 gen_;
};

}  // namespace toolbudget
