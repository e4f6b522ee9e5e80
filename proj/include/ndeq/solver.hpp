#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "ndeq/closures.hpp"
#include "ndeq/grid.hpp"
#include "ndeq/neurde.hpp"
#include "ndeq/population.hpp"
#include "ndeq/stream.hpp"

namespace ndeq {

enum class ClosureKind { Polynomial, Newton, Neural };

struct ClosureSpec {
    ClosureKind kind = ClosureKind::Newton;
    NewtonSettings newton;
    const MlpParams* net = nullptr;  // required for Neural

    static ClosureSpec polynomial() { return {ClosureKind::Polynomial, {}, nullptr}; }
    static ClosureSpec newton_closure(NewtonSettings s = {}) {
        return {ClosureKind::Newton, s, nullptr};
    }
    static ClosureSpec neural(const MlpParams* net) {
        return {ClosureKind::Neural, {}, net};
    }
};

// Full solver state. The update per step is
//   open_boundaries . stream . bounce_back . collide
// applied to both populations; Dirichlet cells are exact at observation time.
struct SolverState {
    Grid grid;
    GasParams gas;
    ClosureSpec closure;
    PopulationGrid f, g;
    long t = 0;

    // Inlet state in the simulation frame (Dirichlet edges).
    std::optional<MacroState> inlet;

    // When false, the lattice-range guards (T in (0,1), positive equilibrium
    // factors) do not abort; the run continues until NaN/Inf or rho/T <= 0.
    // Used to observe the polynomial transonic blow-up the way an unguarded
    // implementation would.
    bool range_checks = true;

    // Warm-start multipliers for the Newton closure, one per cell.
    bool warm_start = true;
    std::vector<LagrangeMultipliers> alpha_cache;
    std::vector<uint8_t> alpha_valid;

    // Lazily built router and cached basis table (rebuilt when closure
    // parameters change).
    std::shared_ptr<const StreamRouter> router;
    std::vector<double> phi_table;

    SolverState(Grid grid_, GasParams gas_, ClosureSpec closure_);

    void invalidate_caches();
};

// Per-cell macroscopic field of a state (throws with cell coordinates on
// invalid density/temperature).
std::vector<MacroState> project_field(const SolverState& s);

// Relaxation of both populations toward their equilibria; writes the
// post-collision populations and, when geq_out is given, the equilibrium
// field used (the per-step training/recording target).
void collide(SolverState& s, PopulationGrid& f_coll, PopulationGrid& g_coll,
             PopulationGrid* geq_out = nullptr);

// One full time step; increments t. Throws DivergenceError on NaN/Inf or
// invalid states, stamped with the last valid time.
void step(SolverState& s);

// Recorder receives the pre-step populations, the equilibrium field used by
// the step, and the projected macroscopic field, all at time t.
using Recorder = std::function<void(long t, const PopulationGrid& f,
                                    const PopulationGrid& g,
                                    const PopulationGrid& geq,
                                    const std::vector<MacroState>& U)>;

// Repeatedly steps until t_end. The recorder, when present, fires once per
// executed step. Divergence aborts with the last valid t.
void run(SolverState& s, long t_end, const Recorder& recorder = nullptr);

// Equilibrium lifting: f = f_eq(U), g = g_eq(U) cell-wise.
void lift(SolverState& s, const std::vector<MacroState>& U);

// Compute the closure's g_eq for a single state (helper shared by lift,
// Dirichlet setup and collide). cell_index >= 0 engages the per-cell Newton
// warm-start cache.
void closure_geq(SolverState& s, const MacroState& U, int cell_index, Vec9& out);

} // namespace ndeq
