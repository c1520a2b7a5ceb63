#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace stitchnet {

// Deterministic random source. All sampling goes through the explicit helpers
// below rather than std:: distributions, so that streams are identical across
// platforms and standard library versions.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), engine_(mix(seed, 0x9e3779b97f4a7c15ull)) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double u01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), rejection sampled.
    uint64_t below(uint64_t n)
    {
        if (n <= 1)
            return 0;
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Uniform integer in [lo, hi], inclusive.
    int64_t int_range(int64_t lo, int64_t hi)
    {
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return u01() < p; }

    // Box-Muller; consumes two uniform draws per call.
    double normal(double mean = 0.0, double stddev = 1.0)
    {
        double u1 = u01();
        double u2 = u01();
        if (u1 <= 0.0)
            u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }

    // Fisher-Yates.
    template <typename T> void shuffle(std::vector<T> &v)
    {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent stream, e.g. one per individual loop.
    Rng fork(uint64_t stream) const { return Rng(mix(seed_, stream + 0x2545f4914f6cdd1dull)); }

    uint64_t seed() const { return seed_; }

  private:
    static uint64_t mix(uint64_t a, uint64_t b)
    {
        uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return x;
    }

    uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace stitchnet
