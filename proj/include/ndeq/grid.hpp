#pragma once

#include <cstdint>
#include <vector>

#include "ndeq/errors.hpp"

namespace ndeq {

enum class EdgeKind : uint8_t {
    Periodic,
    Dirichlet,   // edge cells overwritten with inlet equilibrium populations
    Neumann1,    // first-order: copy the adjacent interior column/row
    FreeStream,  // copy from the interior along the wall-normal direction
};

// Rectangular lattice with one boundary kind per edge and an optional solid
// mask (bounce-back obstacles). Immutable after construction.
struct Grid {
    int nx = 0, ny = 0;
    EdgeKind xmin = EdgeKind::Periodic, xmax = EdgeKind::Periodic;
    EdgeKind ymin = EdgeKind::Periodic, ymax = EdgeKind::Periodic;
    std::vector<uint8_t> solid;  // nx*ny, 1 = solid (bounce-back) cell; may be empty

    Grid() = default;
    Grid(int nx_, int ny_, EdgeKind xlo, EdgeKind xhi, EdgeKind ylo, EdgeKind yhi)
        : nx(nx_), ny(ny_), xmin(xlo), xmax(xhi), ymin(ylo), ymax(yhi) {
        if (nx <= 0 || ny <= 0)
            throw ConfigError("grid dimensions must be positive");
        // Periodicity is an axis property: both ends or neither.
        if ((xmin == EdgeKind::Periodic) != (xmax == EdgeKind::Periodic))
            throw ConfigError("x edges disagree on periodicity");
        if ((ymin == EdgeKind::Periodic) != (ymax == EdgeKind::Periodic))
            throw ConfigError("y edges disagree on periodicity");
    }

    static Grid periodic(int nx, int ny) {
        return Grid(nx, ny, EdgeKind::Periodic, EdgeKind::Periodic,
                    EdgeKind::Periodic, EdgeKind::Periodic);
    }

    void set_solid(std::vector<uint8_t> mask) {
        if ((int)mask.size() != nx * ny)
            throw ConfigError("solid mask shape does not match grid");
        solid = std::move(mask);
    }

    bool has_solid() const { return !solid.empty(); }
    bool is_solid(int x, int y) const {
        return has_solid() && solid[(size_t)y * nx + x] != 0;
    }
    size_t cell(int x, int y) const { return (size_t)y * nx + x; }
    size_t cells() const { return (size_t)nx * ny; }
};

} // namespace ndeq
