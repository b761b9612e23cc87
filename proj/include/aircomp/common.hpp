#ifndef AIRCOMP_COMMON_HPP
#define AIRCOMP_COMMON_HPP

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace aircomp {

using cplx = std::complex<double>;
using BitBlock = std::vector<uint8_t>;   // entries in {0,1}
using SumWord = std::vector<uint8_t>;    // entries in {0..M}

/// Deterministic RNG used throughout; one instance per independent trial.
using Rng = std::mt19937_64;

/// Mixes (seed, stream ids) into an independent sub-seed so that parallel
/// trials never share a generator state.
inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    // splitmix64 over the concatenated words
    uint64_t z = seed;
    for (uint64_t w : {a, b}) {
        z += 0x9e3779b97f4a7c15ULL + w;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z = z ^ (z >> 31);
    }
    return z;
}

inline BitBlock random_bits(size_t n, Rng& rng) {
    BitBlock b(n);
    for (auto& x : b) x = static_cast<uint8_t>(rng() & 1u);
    return b;
}

inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string to_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

constexpr const char* kToolVersion = "aircomp 0.1.0";

}  // namespace aircomp

#endif
