#include "ndeq/moments.hpp"

namespace ndeq {

MacroState project_raw(const double* f, const double* g, const GasParams& gas) {
    double rho = 0.0, mx = 0.0, my = 0.0, sg = 0.0;
    for (int i = 0; i < kQ; ++i) {
        rho += f[i];
        mx += LatticeD2Q9::cx(i) * f[i];
        my += LatticeD2Q9::cy(i) * f[i];
        sg += g[i];
    }
    MacroState s;
    s.rho = rho;
    s.ux = mx / rho;
    s.uy = my / rho;
    s.E = sg / (2.0 * rho);
    s.T = (s.E - 0.5 * (s.ux * s.ux + s.uy * s.uy)) / gas.Cv();
    return s;
}

MacroState project(const double* f, const double* g, const GasParams& gas) {
    double rho = 0.0;
    for (int i = 0; i < kQ; ++i) rho += f[i];
    if (!(rho > 0.0)) throw InvalidStateError("negative density");
    const MacroState s = project_raw(f, g, gas);
    if (!(s.T > 0.0)) throw InvalidStateError("negative temperature");
    return s;
}

namespace {
inline double w1d(int c, double T) { return c == 0 ? 1.0 - T : 0.5 * T; }
inline double w1d_dT(int c) { return c == 0 ? -1.0 : 0.5; }
} // namespace

void weights(double T, Vec9& W) {
    if (!(T > 0.0 && T < 1.0))
        throw InvalidStateError("temperature outside lattice range (0,1)");
    for (int i = 0; i < kQ; ++i)
        W[i] = w1d(LatticeD2Q9::cx(i), T) * w1d(LatticeD2Q9::cy(i), T);
}

void weights_grad(double T, Vec9& W, Vec9& dW) {
    weights(T, W);
    for (int i = 0; i < kQ; ++i) {
        const int cx = LatticeD2Q9::cx(i), cy = LatticeD2Q9::cy(i);
        dW[i] = w1d_dT(cx) * w1d(cy, T) + w1d(cx, T) * w1d_dT(cy);
    }
}

MaxwellianMoments maxwellian_higher_moments(const MacroState& s, const GasParams&) {
    MaxwellianMoments m;
    const double u[2] = {s.ux, s.uy};
    for (int a = 0; a < 2; ++a) {
        m.q[a] = 2.0 * s.rho * u[a] * (s.E + s.T);
        for (int b = 0; b < 2; ++b) {
            const double d = (a == b) ? 1.0 : 0.0;
            m.P[a][b] = s.rho * u[a] * u[b] + s.rho * s.T * d;
            m.R[a][b] = 2.0 * s.rho * s.E * (s.T * d + u[a] * u[b]) +
                        2.0 * s.rho * s.T * (s.T * d + 2.0 * u[a] * u[b]);
        }
    }
    return m;
}

RelaxationTimes relaxation_times(const MacroState& s, const GasParams& gas) {
    const double rt = s.rho * s.T;
    RelaxationTimes t;
    t.tau1 = gas.mu / rt + 0.5;
    t.tau2 = gas.mu / (gas.Pr * rt) + 0.5;
    if (gas.tau_min > 0.0 && t.tau1 < gas.tau_min) {
        // Raise the effective viscosity to the floor; kappa follows via the
        // Prandtl relation so tau2/tau1 keeps the physical ratio.
        t.tau1 = gas.tau_min;
        t.tau2 = (gas.tau_min - 0.5) / gas.Pr + 0.5;
    }
    return t;
}

double local_mach(const MacroState& s, const GasParams& gas) {
    return std::sqrt(s.ux * s.ux + s.uy * s.uy) / std::sqrt(gas.gamma * gas.R * s.T);
}

} // namespace ndeq
