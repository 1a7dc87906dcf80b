#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace refina::rng {

// All randomness in the library flows through std::mt19937_64 plus the
// samplers below. The engine's output sequence is fixed by the C++
// standard, and we deliberately avoid <random> distributions (their
// algorithms are implementation-defined), so identical seeds replay
// identical experiments on any platform/toolchain.
using Engine = std::mt19937_64;

// splitmix64 finalizer; used to derive independent substreams from one
// user-facing seed (e.g. permutation vs. noise vs. init streams).
inline std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

// Unbiased uniform integer in [0, bound) via rejection.
inline std::uint64_t below(Engine& eng, std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        std::uint64_t x = eng();
        if (x >= threshold) return x % bound;
    }
}

inline int below_int(Engine& eng, int bound) {
    return static_cast<int>(below(eng, static_cast<std::uint64_t>(bound)));
}

// Fisher-Yates; std::shuffle is not specified bit-exactly, this is.
template <typename T>
void shuffle(std::vector<T>& values, Engine& eng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(below(eng, i));
        std::swap(values[i - 1], values[j]);
    }
}

} // namespace refina::rng
