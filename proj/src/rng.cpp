#include "mgua/rng.hpp"

#include <cmath>

namespace mgua {

double Rng::log_uniform(double lo, double hi) {
    if (lo == hi) return lo;
    return std::exp(uniform_real(std::log(lo), std::log(hi)));
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull + (b << 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace mgua
