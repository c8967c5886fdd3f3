#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mmr {

// Seeded RNG with hand-rolled distributions. std::mt19937_64 has a
// standard-mandated sequence, but the std distributions do not, so every
// draw that must reproduce byte-identically goes through this class.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Unbiased integer in [0, bound). bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound);

    // Uniform in [0, 1) with 53 random bits.
    double next_unit();

    // Standard normal via Box-Muller.
    double next_normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_below(i)]);
        }
    }

    // k distinct indices drawn uniformly from [0, pool), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t pool, std::size_t k);

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mmr
