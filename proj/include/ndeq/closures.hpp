#pragma once

#include "ndeq/moments.hpp"

namespace ndeq {

// Extended product-form equilibrium for the momentum population:
// f_eq_i = rho * Psi_x(c_ix) * Psi_y(c_iy) with per-axis factors solving the
// 1D moment system {sum Psi = 1, sum s Psi = u, sum s^2 Psi = u^2 + T}:
//   Psi_{+-1} = (T + u^2 +- u)/2,  Psi_0 = 1 - T - u^2.
// Throws InvalidStateError if any factor is <= 0 (state outside lattice range).
void feq_extended(const MacroState& s, Vec9& out);

// Same, without the positivity guard. Used to reproduce the documented
// polynomial blow-up, where the run must be allowed to leave the valid range
// and die by divergence rather than at the first invalid factor.
void feq_extended_unchecked(const MacroState& s, Vec9& out);

// Polynomial expansion of the energy equilibrium:
// g_eq_i = W_i [ 2 rho E + q_a c_ia / T
//              + (R_ab - 2 rho E T d_ab)(c_ia c_ib - T d_ab) / (2 T^2) ]
// with q, R the Maxwellian moments.
void geq_poly(const MacroState& s, const GasParams& gas, Vec9& out);
// Variant taking precomputed weights and skipping the (0,1) window check
// (blow-up reproduction path).
void geq_poly_with_weights(const MacroState& s, const GasParams& gas,
                           const Vec9& W, Vec9& out);

struct NewtonSettings {
    double tol = 1e-6;  // convergence threshold on max |delta alpha|
    int max_iters = 20;
};

struct LagrangeMultipliers {
    double a1 = 0.0;       // scalar multiplier
    double ax = 0.0, ay = 0.0;  // velocity multipliers
};

struct NewtonResult {
    LagrangeMultipliers alpha;
    int iterations = 0;
    bool converged = false;
};

// Levermore exponential equilibrium g_eq_i = rho W_i exp(a1 + a_c . c_i),
// multipliers fixed by Newton-Raphson on the targets
//   sum g_eq = 2 rho E,   sum c g_eq = q  (Maxwellian heat flux),
// with the analytic 3x3 moment-covariance Jacobian. Initialized at
// (ln 2E, 0, 0) — the exact symmetric solution — or at *warm when given.
// Non-convergence after max_iters returns the last iterate with
// converged=false. A singular Jacobian throws InvalidStateError.
NewtonResult geq_newton(const MacroState& s, const GasParams& gas,
                        const NewtonSettings& settings, Vec9& out,
                        const LagrangeMultipliers* warm = nullptr);

// Quasi-equilibrium g*_i = g_eq_i + (2/T) W_i u_b (P_ab - P_eq_ab) c_ia.
// The correction has zero zeroth moment since sum_i W_i c_i = 0.
void g_quasi(const MacroState& s, const Vec9& geq, const Mat2& P,
             const Mat2& Peq, const Vec9& W, Vec9& out);

// Second moment of a per-cell population vector: P_ab = sum_i c_ia c_ib h_i.
Mat2 second_moment(const double* h);

} // namespace ndeq
