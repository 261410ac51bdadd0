#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "nbf/error.hpp"

namespace nbf {

// Seeded random source. mt19937_64 output is pinned by the standard; the
// standard *distributions* are not, so sampling is hand-rolled here to keep
// seeded runs reproducible across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform in [0, n)
    std::uint64_t index(std::uint64_t n) {
        require(n > 0, "Rng::index needs n > 0");
        // rejection sampling over the top multiple of n
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(index(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    // k distinct indices from [0, n), order not specified beyond determinism
    std::vector<std::uint64_t> sample_without_replacement(std::uint64_t n, std::uint64_t k) {
        require(k <= n, "sample_without_replacement: k > n");
        std::vector<std::uint64_t> pool(n);
        for (std::uint64_t i = 0; i < n; ++i) pool[i] = i;
        for (std::uint64_t i = 0; i < k; ++i) {
            std::uint64_t j = i + index(n - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace nbf
