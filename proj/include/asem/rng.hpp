#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

namespace asem {

// 64-bit FNV-1a; used to derive per-tensor init streams from tensor names.
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// mt19937 with a hand-rolled uniform mapping. std::uniform_real_distribution
// and std::shuffle are not pinned down by the standard, so reproducibility
// across toolchains requires doing the mapping ourselves.
class Rng {
  public:
    explicit Rng(uint64_t seed)
        : gen_(static_cast<uint32_t>(splitmix64(seed) >> 16)) {}

    uint32_t next_u32() { return gen_(); }

    // [0, 1)
    double uniform() { return next_u32() * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Fisher-Yates
    template <typename V>
    void shuffle(V& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = next_u32() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937 gen_;
};

// Stable sub-seed for a named stream (tensor init, per-epoch shuffles,
// per-step dropout). Order-independent: depends only on (seed, tag, index).
inline uint64_t substream_seed(uint64_t master, std::string_view tag, uint64_t index = 0) {
    return splitmix64(master ^ splitmix64(fnv1a64(tag) + index));
}

}  // namespace asem
