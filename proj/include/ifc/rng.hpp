#pragma once

#include <cstdint>
#include <random>

namespace ifc {

// Seeded generator whose derived draws are identical on every platform
// (the std distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : g_(seed) {}

    std::uint64_t next() { return g_(); }

    // Uniform in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = g_();
        } while (x >= limit);
        return x % n;
    }

    // Uniform in [lo, hi].
    std::int64_t range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    bool chance(std::uint64_t num, std::uint64_t den) { return below(den) < num; }

    template <class C>
    const auto& pick(const C& c) {
        return c[below(c.size())];
    }

private:
    std::mt19937_64 g_;
};

// Derives the seed of case i of a campaign.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t i) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (i + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace ifc
