#pragma once

#include <array>
#include <cmath>

#include "ndeq/errors.hpp"
#include "ndeq/lattice.hpp"

namespace ndeq {

// Per-cell macroscopic observables. E = Cv*T + |u|^2/2 by construction.
struct MacroState {
    double rho = 0.0;
    double ux = 0.0, uy = 0.0;
    double T = 0.0;
    double E = 0.0;
};

struct GasParams {
    double gamma = 1.4;   // specific-heat ratio
    double Pr = 0.71;     // Prandtl number
    double R = 1.0;       // gas constant (1 in all experiments)
    double mu = 1e-4;     // dynamic viscosity (lattice units)
    double ushift_x = 0.0, ushift_y = 0.0;  // Galilean frame shift
    double tau_min = 0.0; // optional relaxation floor, 0 disables

    double Cv() const { return R / (gamma - 1.0); }
    double Cp() const { return gamma * Cv(); }
    double kappa() const { return Cp() * mu / Pr; }
};

using Vec9 = std::array<double, kQ>;
using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

// rho = sum f, u = sum(c f)/rho, E = sum(g)/(2 rho), T = (E - |u|^2/2)/Cv.
// Throws InvalidStateError on rho <= 0 or T <= 0; cell coordinates are
// attached by the caller where available.
MacroState project(const double* f, const double* g, const GasParams& gas);

// Unvalidated projection: raw moment arithmetic with no positivity checks.
// Used by the unguarded blow-up reproduction path, where runs continue
// through invalid states until NaN/Inf.
MacroState project_raw(const double* f, const double* g, const GasParams& gas);

// Temperature-dependent lattice weights: W_i = prod_axis w(c_axis) with
// w(+-1) = T/2, w(0) = 1 - T. Valid only for T in (0,1).
void weights(double T, Vec9& W);
// dW_i/dT alongside the weights (used by the differentiable solver).
void weights_grad(double T, Vec9& W, Vec9& dW);

// Closed-form higher-order moments of the Maxwellian:
//   q_a  = 2 rho u_a (E + T)
//   P_ab = rho u_a u_b + rho T d_ab
//   R_ab = 2 rho E (T d_ab + u_a u_b) + 2 rho T (T d_ab + 2 u_a u_b)
struct MaxwellianMoments {
    Vec2 q;
    Mat2 P;
    Mat2 R;
};
MaxwellianMoments maxwellian_higher_moments(const MacroState& s, const GasParams& gas);

// tau1 = mu/(rho T) + 1/2, tau2 = mu/(Pr rho T) + 1/2. An optional floor
// gas.tau_min clamps from below (stabilization knob, off by default).
struct RelaxationTimes {
    double tau1, tau2;
};
RelaxationTimes relaxation_times(const MacroState& s, const GasParams& gas);

// Ma = |u| / sqrt(gamma R T)
double local_mach(const MacroState& s, const GasParams& gas);

} // namespace ndeq
