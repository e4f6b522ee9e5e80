#include "ndeq/stream.hpp"

#include "ndeq/lattice.hpp"

namespace ndeq {

namespace {

// Resolve the pull source for (x,y,i) under periodic wrap; returns false when
// the source lies outside a non-periodic edge.
inline bool pull_source(const Grid& g, int x, int y, int i, int& sx, int& sy) {
    sx = x - LatticeD2Q9::cx(i);
    sy = y - LatticeD2Q9::cy(i);
    if (sx < 0 || sx >= g.nx) {
        if (g.xmin != EdgeKind::Periodic) return false;
        sx = (sx + g.nx) % g.nx;
    }
    if (sy < 0 || sy >= g.ny) {
        if (g.ymin != EdgeKind::Periodic) return false;
        sy = (sy + g.ny) % g.ny;
    }
    return true;
}

} // namespace

PopulationGrid stream(const PopulationGrid& pop, const Grid& grid) {
    PopulationGrid out(pop.nx, pop.ny, pop.species);
    for (int y = 0; y < grid.ny; ++y)
        for (int x = 0; x < grid.nx; ++x)
            for (int i = 0; i < kQ; ++i) {
                int sx, sy;
                if (pull_source(grid, x, y, i, sx, sy))
                    out.at(x, y, i) = pop.at(sx, sy, i);
                else
                    out.at(x, y, i) = pop.at(x, y, i);
            }
    return out;
}

PopulationGrid apply_bounce_back(const PopulationGrid& pop, const Grid& grid) {
    if (!grid.has_solid()) return pop;
    PopulationGrid out = pop;
    for (int y = 0; y < grid.ny; ++y)
        for (int x = 0; x < grid.nx; ++x) {
            if (grid.is_solid(x, y)) continue;
            for (int i = 0; i < kQ; ++i) {
                int tx = x + LatticeD2Q9::cx(i);
                int ty = y + LatticeD2Q9::cy(i);
                if (grid.xmin == EdgeKind::Periodic) tx = (tx + grid.nx) % grid.nx;
                if (grid.ymin == EdgeKind::Periodic) ty = (ty + grid.ny) % grid.ny;
                if (tx < 0 || tx >= grid.nx || ty < 0 || ty >= grid.ny) continue;
                if (grid.is_solid(tx, ty))
                    out.at(tx, ty, LatticeD2Q9::opposite[i]) = pop.at(x, y, i);
            }
        }
    return out;
}

PopulationGrid apply_open_boundaries(const PopulationGrid& pop, const Grid& grid,
                                     const double* inlet_eq) {
    PopulationGrid out = pop;
    auto fill = [&](int x, int y, EdgeKind kind, int ix, int iy) {
        switch (kind) {
        case EdgeKind::Periodic:
            break;
        case EdgeKind::Dirichlet:
            if (!inlet_eq) throw ConfigError("Dirichlet edge without inlet state");
            for (int i = 0; i < kQ; ++i) out.at(x, y, i) = inlet_eq[i];
            break;
        case EdgeKind::Neumann1:
        case EdgeKind::FreeStream:
            for (int i = 0; i < kQ; ++i) out.at(x, y, i) = pop.at(ix, iy, i);
            break;
        }
    };
    // y edges first, then x edges: x kinds win at corners (inlet/outlet
    // columns stay intact where they meet free-stream rows).
    if (grid.ymin != EdgeKind::Periodic)
        for (int x = 0; x < grid.nx; ++x) fill(x, 0, grid.ymin, x, 1);
    if (grid.ymax != EdgeKind::Periodic)
        for (int x = 0; x < grid.nx; ++x) fill(x, grid.ny - 1, grid.ymax, x, grid.ny - 2);
    if (grid.xmin != EdgeKind::Periodic)
        for (int y = 0; y < grid.ny; ++y) fill(0, y, grid.xmin, 1, y);
    if (grid.xmax != EdgeKind::Periodic)
        for (int y = 0; y < grid.ny; ++y) fill(grid.nx - 1, y, grid.xmax, grid.nx - 2, y);
    return out;
}

StreamRouter::StreamRouter(const Grid& grid, const double* dirichlet_eq_f,
                           const double* dirichlet_eq_g) {
    const bool needs_dirichlet =
        grid.xmin == EdgeKind::Dirichlet || grid.xmax == EdgeKind::Dirichlet ||
        grid.ymin == EdgeKind::Dirichlet || grid.ymax == EdgeKind::Dirichlet;
    if (needs_dirichlet && (!dirichlet_eq_f || !dirichlet_eq_g))
        throw ConfigError("Dirichlet edge requires inlet equilibrium populations");

    const size_t n = grid.cells() * kQ;
    src_.assign(n, -1);
    const_f_.assign(n, 0.0);
    const_g_.assign(n, 0.0);

    auto flat = [&](int x, int y, int i) { return (grid.cell(x, y)) * kQ + i; };

    // Streamed source of (x,y,i), including halfway bounce-back off solids.
    auto stream_src = [&](int x, int y, int i) -> int64_t {
        int sx, sy;
        if (!pull_source(grid, x, y, i, sx, sy)) return flat(x, y, i);
        if (grid.is_solid(sx, sy)) return flat(x, y, LatticeD2Q9::opposite[i]);
        return flat(sx, sy, i);
    };

    for (int y = 0; y < grid.ny; ++y)
        for (int x = 0; x < grid.nx; ++x) {
            if (grid.is_solid(x, y)) continue;  // stays constant zero
            for (int i = 0; i < kQ; ++i) src_[flat(x, y, i)] = stream_src(x, y, i);
        }

    // Boundary overrides compose on top of the streamed field, so copies
    // resolve through the interior cell's own streamed source.
    auto override_edge = [&](int x, int y, EdgeKind kind, int ix, int iy) {
        for (int i = 0; i < kQ; ++i) {
            const size_t slot = flat(x, y, i);
            switch (kind) {
            case EdgeKind::Periodic:
                break;
            case EdgeKind::Dirichlet:
                src_[slot] = -1;
                const_f_[slot] = dirichlet_eq_f[i];
                const_g_[slot] = dirichlet_eq_g[i];
                break;
            case EdgeKind::Neumann1:
            case EdgeKind::FreeStream:
                src_[slot] = stream_src(ix, iy, i);
                break;
            }
        }
    };
    if (grid.ymin != EdgeKind::Periodic)
        for (int x = 0; x < grid.nx; ++x) override_edge(x, 0, grid.ymin, x, 1);
    if (grid.ymax != EdgeKind::Periodic)
        for (int x = 0; x < grid.nx; ++x)
            override_edge(x, grid.ny - 1, grid.ymax, x, grid.ny - 2);
    if (grid.xmin != EdgeKind::Periodic)
        for (int y = 0; y < grid.ny; ++y) override_edge(0, y, grid.xmin, 1, y);
    if (grid.xmax != EdgeKind::Periodic)
        for (int y = 0; y < grid.ny; ++y)
            override_edge(grid.nx - 1, y, grid.xmax, grid.nx - 2, y);
}

void StreamRouter::apply(const double* in, double* out, Species s) const {
    const std::vector<double>& cst = (s == Species::F) ? const_f_ : const_g_;
    const size_t n = src_.size();
    for (size_t k = 0; k < n; ++k) {
        const int64_t j = src_[k];
        out[k] = (j >= 0) ? in[j] : cst[k];
    }
}

void StreamRouter::apply(const PopulationGrid& in, PopulationGrid& out) const {
    apply(in.v.data(), out.v.data(), in.species);
}

void StreamRouter::backward(const double* adj_out, double* adj_in) const {
    const size_t n = src_.size();
    for (size_t k = 0; k < n; ++k) {
        const int64_t j = src_[k];
        if (j >= 0) adj_in[j] += adj_out[k];
    }
}

} // namespace ndeq
