#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ndeq/grid.hpp"
#include "ndeq/population.hpp"

namespace ndeq {

// Exact streaming (pull scheme): out(x)[i] = in(x - c_i)[i] with wrap-around
// on periodic axes. On non-periodic edges, channels whose source lies outside
// the domain keep the cell's pre-stream value; the boundary operators
// overwrite those cells afterwards.
PopulationGrid stream(const PopulationGrid& pop, const Grid& grid);

// Halfway bounce-back staging: populations that would stream into a solid
// cell are deposited into the solid cell's opposite channel, so that the
// subsequent stream returns them to the source cell reversed. Solid cells'
// own outgoing values are untouched here (they stream into the solid and are
// cleared after streaming). Identity when the grid has no solid cells.
PopulationGrid apply_bounce_back(const PopulationGrid& pop, const Grid& grid);

// Open boundaries, applied post-stream:
//   Dirichlet   — overwrite edge cells with prescribed equilibrium values,
//   Neumann1    — copy the adjacent interior column/row,
//   FreeStream  — copy from the interior along the wall-normal direction.
// `inlet_eq` supplies the 9 Dirichlet values for this species (required when
// any edge is Dirichlet).
PopulationGrid apply_open_boundaries(const PopulationGrid& pop, const Grid& grid,
                                     const double* inlet_eq);

// Precomputed routing for the composite
//   open_boundaries . stream . bounce_back
// as a single gather. Each output slot either copies one input slot or takes
// a constant (Dirichlet equilibrium / zero inside solids). The adjoint of
// this linear map is the transposed scatter, used by the training path.
class StreamRouter {
public:
    StreamRouter() = default;
    StreamRouter(const Grid& grid, const double* dirichlet_eq_f,
                 const double* dirichlet_eq_g);

    void apply(const PopulationGrid& in, PopulationGrid& out) const;
    void apply(const double* in, double* out, Species s) const;
    // adj_in += A^T adj_out (constants receive no adjoint)
    void backward(const double* adj_out, double* adj_in) const;

    size_t size() const { return src_.size(); }

private:
    std::vector<int64_t> src_;     // flat source slot, -1 for constant
    std::vector<double> const_f_;  // constant value when src < 0 (f species)
    std::vector<double> const_g_;
};

} // namespace ndeq
