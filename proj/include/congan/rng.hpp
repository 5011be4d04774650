#pragma once

#include <cstdint>
#include <random>

#include "congan/math.hpp"

namespace congan {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic generator with explicitly specified uniform/normal mappings,
// so identical seeds give bit-identical streams regardless of the standard
// library's distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // strictly inside (0,1)
    double uniform() {
        std::uint64_t bits = eng_();
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() { return inv_normal_cdf(uniform()); }

    std::uint64_t raw() { return eng_(); }

  private:
    std::mt19937_64 eng_;
};

// Independent substream of a master seed. Streams with distinct ids are
// decorrelated through splitmix64 whitening.
inline Rng substream(std::uint64_t master_seed, std::uint64_t stream_id) {
    std::uint64_t s = master_seed;
    std::uint64_t a = splitmix64(s);
    s = master_seed ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1));
    std::uint64_t b = splitmix64(s);
    return Rng(a ^ (b * 0xda942042e4dd58b5ULL));
}

}  // namespace congan
