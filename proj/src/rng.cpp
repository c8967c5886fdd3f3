#include "mmr/rng.hpp"

#include <cmath>
#include <numbers>

namespace mmr {

std::uint64_t Rng::next_below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const auto full = static_cast<unsigned __int128>(1) << 64;
    const std::uint64_t limit =
        static_cast<std::uint64_t>(full / bound * bound - 1);
    std::uint64_t x = gen_();
    while (x > limit) x = gen_();
    return x % bound;
}

double Rng::next_unit() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = next_unit();
    while (u1 <= 0.0) u1 = next_unit();
    const double u2 = next_unit();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    spare_ = mag * std::sin(ang);
    have_spare_ = true;
    return mag * std::cos(ang);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t pool, std::size_t k) {
    if (k > pool) k = pool;
    std::vector<std::size_t> idx(pool);
    for (std::size_t i = 0; i < pool; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(next_below(pool - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace mmr
