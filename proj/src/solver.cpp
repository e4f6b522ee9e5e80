#include "ndeq/solver.hpp"

#include <cmath>

#include "ndeq/errors.hpp"

namespace ndeq {

SolverState::SolverState(Grid grid_, GasParams gas_, ClosureSpec closure_)
    : grid(std::move(grid_)), gas(gas_), closure(closure_),
      f(grid.nx, grid.ny, Species::F), g(grid.nx, grid.ny, Species::G) {
    if (closure.kind == ClosureKind::Neural && closure.net == nullptr)
        throw ConfigError("neural closure requires network parameters");
    alpha_cache.resize(grid.cells());
    alpha_valid.assign(grid.cells(), 0);
}

void SolverState::invalidate_caches() {
    router.reset();
    phi_table.clear();
}

namespace {

MacroState project_checked(const SolverState& s, int x, int y) {
    if (!s.range_checks) return project_raw(s.f.cell(x, y), s.g.cell(x, y), s.gas);
    try {
        return project(s.f.cell(x, y), s.g.cell(x, y), s.gas);
    } catch (const InvalidStateError& e) {
        throw InvalidStateError(e.what(), x, y);
    }
}

void ensure_phi(SolverState& s) {
    if (s.closure.kind == ClosureKind::Neural && s.phi_table.empty())
        eval_phi(*s.closure.net, s.phi_table);
}

void ensure_router(SolverState& s) {
    if (s.router) return;
    const bool dirichlet =
        s.grid.xmin == EdgeKind::Dirichlet || s.grid.xmax == EdgeKind::Dirichlet ||
        s.grid.ymin == EdgeKind::Dirichlet || s.grid.ymax == EdgeKind::Dirichlet;
    if (!dirichlet) {
        s.router = std::make_shared<StreamRouter>(s.grid, nullptr, nullptr);
        return;
    }
    if (!s.inlet) throw ConfigError("Dirichlet edge without inlet state");
    ensure_phi(s);
    Vec9 feq_in, geq_in;
    feq_extended_unchecked(*s.inlet, feq_in);
    SolverState& self = s;
    closure_geq(self, *s.inlet, -1, geq_in);
    s.router = std::make_shared<StreamRouter>(s.grid, feq_in.data(), geq_in.data());
}

} // namespace

void closure_geq(SolverState& s, const MacroState& U, int cell_index, Vec9& out) {
    switch (s.closure.kind) {
    case ClosureKind::Polynomial:
        if (s.range_checks) {
            geq_poly(U, s.gas, out);
        } else {
            Vec9 W;
            for (int i = 0; i < kQ; ++i) {
                auto w1 = [&](int c) { return c == 0 ? 1.0 - U.T : 0.5 * U.T; };
                W[i] = w1(LatticeD2Q9::cx(i)) * w1(LatticeD2Q9::cy(i));
            }
            geq_poly_with_weights(U, s.gas, W, out);
        }
        break;
    case ClosureKind::Newton: {
        const LagrangeMultipliers* warm = nullptr;
        if (s.warm_start && cell_index >= 0 && s.alpha_valid[cell_index])
            warm = &s.alpha_cache[cell_index];
        NewtonResult r = geq_newton(U, s.gas, s.closure.newton, out, warm);
        if (cell_index >= 0) {
            s.alpha_cache[cell_index] = r.alpha;
            s.alpha_valid[cell_index] = 1;
        }
        break;
    }
    case ClosureKind::Neural:
        ensure_phi(s);
        neurde_forward(*s.closure.net, s.phi_table, U, out);
        break;
    }
}

std::vector<MacroState> project_field(const SolverState& s) {
    std::vector<MacroState> U(s.grid.cells());
    for (int y = 0; y < s.grid.ny; ++y)
        for (int x = 0; x < s.grid.nx; ++x) {
            if (s.grid.is_solid(x, y)) continue;
            U[s.grid.cell(x, y)] = project_checked(s, x, y);
        }
    return U;
}

void collide(SolverState& s, PopulationGrid& f_coll, PopulationGrid& g_coll,
             PopulationGrid* geq_out) {
    const Grid& grid = s.grid;
    f_coll = PopulationGrid(grid.nx, grid.ny, Species::F);
    g_coll = PopulationGrid(grid.nx, grid.ny, Species::G);
    if (geq_out) *geq_out = PopulationGrid(grid.nx, grid.ny, Species::G);
    ensure_phi(s);

    for (int y = 0; y < grid.ny; ++y)
        for (int x = 0; x < grid.nx; ++x) {
            if (grid.is_solid(x, y)) continue;
            const size_t ci = grid.cell(x, y);
            const MacroState U = project_checked(s, x, y);
            const RelaxationTimes tau = relaxation_times(U, s.gas);
            const double w1 = 1.0 / tau.tau1, w2 = 1.0 / tau.tau2;

            Vec9 feq, geq, W, gstar;
            try {
                // The production path tolerates equilibria outside the strict
                // positivity window (cold regions under a frame shift sit
                // slightly outside it); divergence is caught via NaN and
                // negative rho/T instead.
                feq_extended_unchecked(U, feq);
                if (s.range_checks) {
                    weights(U.T, W);
                } else {
                    for (int i = 0; i < kQ; ++i) {
                        auto wax = [&](int c) { return c == 0 ? 1.0 - U.T : 0.5 * U.T; };
                        W[i] = wax(LatticeD2Q9::cx(i)) * wax(LatticeD2Q9::cy(i));
                    }
                }
                closure_geq(s, U, (int)ci, geq);
            } catch (const InvalidStateError& e) {
                throw InvalidStateError(e.what(), x, y);
            }

            const double* f = s.f.cell(x, y);
            const double* g = s.g.cell(x, y);
            const Mat2 P = second_moment(f);
            const Mat2 Peq = second_moment(feq.data());
            g_quasi(U, geq, P, Peq, W, gstar);

            double* fo = f_coll.cell(x, y);
            double* go = g_coll.cell(x, y);
            for (int i = 0; i < kQ; ++i) {
                fo[i] = f[i] + w1 * (feq[i] - f[i]);
                go[i] = g[i] + w2 * (geq[i] - g[i]) + (w2 - w1) * (gstar[i] - g[i]);
            }
            if (geq_out)
                for (int i = 0; i < kQ; ++i) geq_out->cell(x, y)[i] = geq[i];
        }
}

void step(SolverState& s) {
    try {
        ensure_router(s);
        PopulationGrid f_coll, g_coll;
        collide(s, f_coll, g_coll);
        PopulationGrid f_new(s.grid.nx, s.grid.ny, Species::F);
        PopulationGrid g_new(s.grid.nx, s.grid.ny, Species::G);
        s.router->apply(f_coll, f_new);
        s.router->apply(g_coll, g_new);
        if (!f_new.within_range() || !g_new.within_range())
            throw InvalidStateError("population out of representable range");
        s.f = std::move(f_new);
        s.g = std::move(g_new);
        s.t += 1;
    } catch (const InvalidStateError& e) {
        throw DivergenceError(e.what(), s.t);
    }
}

void run(SolverState& s, long t_end, const Recorder& recorder) {
    ensure_router(s);
    while (s.t < t_end) {
        if (recorder) {
            PopulationGrid f_coll, g_coll, geq;
            // Record the pre-step state together with the equilibrium the
            // step is about to use, then reuse the collision result.
            try {
                std::vector<MacroState> U = project_field(s);
                collide(s, f_coll, g_coll, &geq);
                recorder(s.t, s.f, s.g, geq, U);
            } catch (const InvalidStateError& e) {
                throw DivergenceError(e.what(), s.t);
            }
            PopulationGrid f_new(s.grid.nx, s.grid.ny, Species::F);
            PopulationGrid g_new(s.grid.nx, s.grid.ny, Species::G);
            s.router->apply(f_coll, f_new);
            s.router->apply(g_coll, g_new);
            if (!f_new.within_range() || !g_new.within_range())
                throw DivergenceError("population out of representable range", s.t);
            s.f = std::move(f_new);
            s.g = std::move(g_new);
            s.t += 1;
        } else {
            step(s);
        }
    }
}

void lift(SolverState& s, const std::vector<MacroState>& U) {
    if (U.size() != s.grid.cells()) throw ConfigError("macroscopic field shape mismatch");
    ensure_phi(s);
    for (int y = 0; y < s.grid.ny; ++y)
        for (int x = 0; x < s.grid.nx; ++x) {
            if (s.grid.is_solid(x, y)) continue;
            const size_t ci = s.grid.cell(x, y);
            Vec9 feq, geq;
            try {
                feq_extended_unchecked(U[ci], feq);
                closure_geq(s, U[ci], (int)ci, geq);
            } catch (const InvalidStateError& e) {
                throw InvalidStateError(e.what(), x, y);
            }
            for (int i = 0; i < kQ; ++i) {
                s.f.cell(x, y)[i] = feq[i];
                s.g.cell(x, y)[i] = geq[i];
            }
        }
}

} // namespace ndeq
