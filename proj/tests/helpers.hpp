#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ndeq/moments.hpp"
#include "ndeq/population.hpp"

namespace test {

// Deterministic splitmix64-based generator so expected values never move
// between runs or platforms.
struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed * 0x9e3779b97f4a7c15ull + 1) {}
    std::uint64_t next_u64() {
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    double uniform() { return (double)(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

inline ndeq::PopulationGrid random_pop(int nx, int ny, ndeq::Species s, Rng& rng,
                                       double lo = 0.0, double hi = 1.0) {
    ndeq::PopulationGrid p(nx, ny, s);
    for (double& v : p.v) v = rng.uniform(lo, hi);
    return p;
}

// Random state inside the lattice-valid region (all Psi factors positive).
// Psi_{+-1} > 0 bounds |u| by (1 - sqrt(1-4T))/2 when T < 1/4; Psi_0 > 0
// bounds u^2 < 1 - T.
inline double valid_umax(double T) {
    double lim = std::sqrt(std::max(0.0, 0.95 - T));
    if (T < 0.25) lim = std::min(lim, 0.5 * (1.0 - std::sqrt(1.0 - 4.0 * T)));
    return 0.9 * lim;
}

inline ndeq::MacroState random_state(Rng& rng, const ndeq::GasParams& gas) {
    ndeq::MacroState s;
    s.rho = rng.uniform(0.1, 3.0);
    s.T = rng.uniform(0.05, 0.6);
    const double umax = valid_umax(s.T);
    s.ux = rng.uniform(-umax, umax);
    s.uy = rng.uniform(-umax, umax);
    s.E = gas.Cv() * s.T + 0.5 * (s.ux * s.ux + s.uy * s.uy);
    return s;
}

} // namespace test
