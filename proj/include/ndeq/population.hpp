#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ndeq/errors.hpp"
#include "ndeq/lattice.hpp"

namespace ndeq {

enum class Species : uint8_t { F = 'f', G = 'g' };

// Per-cell vector of Q=9 population values for one species on a rectangular
// lattice. Layout: value(x, y, i) = v[(y*nx + x)*9 + i], row-major in y.
struct PopulationGrid {
    int nx = 0, ny = 0;
    Species species = Species::F;
    std::vector<double> v;

    PopulationGrid() = default;
    PopulationGrid(int nx_, int ny_, Species s)
        : nx(nx_), ny(ny_), species(s), v((size_t)nx_ * ny_ * kQ, 0.0) {}

    double& at(int x, int y, int i) { return v[((size_t)y * nx + x) * kQ + i]; }
    double at(int x, int y, int i) const { return v[((size_t)y * nx + x) * kQ + i]; }

    double* cell(int x, int y) { return &v[((size_t)y * nx + x) * kQ]; }
    const double* cell(int x, int y) const { return &v[((size_t)y * nx + x) * kQ]; }

    size_t cells() const { return (size_t)nx * ny; }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    // Divergence monitor: non-finite values or magnitudes beyond any
    // physically meaningful range count as a diverged run.
    static constexpr double kMagnitudeLimit = 1e30;
    bool within_range() const {
        for (double x : v)
            if (!std::isfinite(x) || std::abs(x) > kMagnitudeLimit) return false;
        return true;
    }

    double total() const {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
};

} // namespace ndeq
