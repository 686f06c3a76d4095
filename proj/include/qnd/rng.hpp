// rng.hpp - deterministic counter-based random numbers.
//
// Draw n of stream k under seed s is the pure function
//     out(s, k, n) = mix(key(s, k) + (n + 1) * GOLDEN)
//     key(s, k)    = mix(s + (2 * k + 1) * GOLDEN)
// where mix is the SplitMix64 finalizer and GOLDEN = 0x9E3779B97F4A7C15.
// Stream k is reserved for trajectory index k; auxiliary consumers use
// streams at kAuxStreamBase and above. The mapping is frozen; golden values
// are pinned in tests so any change is a contract break.
#pragma once

#include <cstdint>
#include <vector>

#include "qnd/errors.hpp"

namespace qnd {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
inline constexpr std::uint64_t kAuxStreamBase = 1ull << 48;

inline std::uint64_t splitmix_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(splitmix_mix(seed + (2 * stream + 1) * kGolden)), counter_(0) {}

    std::uint64_t next_u64() { return splitmix_mix(key_ + (++counter_) * kGolden); }

    // Uniform in [0, 1), 53 significant bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

// Index into a probability vector by inverse CDF on one uniform draw.
inline int sample_categorical(CounterRng& rng, const std::vector<double>& probs) {
    if (probs.empty()) throw Error("sample_categorical: empty probability vector");
    double u = rng.next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

}  // namespace qnd
