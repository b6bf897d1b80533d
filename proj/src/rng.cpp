#include "robtree/rng.hpp"

#include <cmath>
#include <numbers>

namespace robtree {

std::uint64_t CounterRng::uniform_index(std::uint64_t n) noexcept
{
    // Rejection sampling keeps the draw unbiased for any n.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

double CounterRng::normal() noexcept
{
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace robtree
