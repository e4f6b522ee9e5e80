#include "ndeq/closures.hpp"

#include <cmath>

namespace ndeq {

namespace {

inline double psi1d(int c, double u, double T) {
    const double u2 = u * u;
    if (c == 0) return 1.0 - T - u2;
    return 0.5 * (T + u2 + (c > 0 ? u : -u));
}

inline void feq_impl(const MacroState& s, Vec9& out, bool checked) {
    double px[3], py[3];  // index 0,1,2 -> c = 0,+1,-1
    const int cmap[3] = {0, 1, -1};
    for (int k = 0; k < 3; ++k) {
        px[k] = psi1d(cmap[k], s.ux, s.T);
        py[k] = psi1d(cmap[k], s.uy, s.T);
        if (checked && (px[k] <= 0.0 || py[k] <= 0.0))
            throw InvalidStateError("equilibrium factor not positive (u,T outside lattice range)");
    }
    auto slot = [&](int c) { return c == 0 ? 0 : (c > 0 ? 1 : 2); };
    for (int i = 0; i < kQ; ++i)
        out[i] = s.rho * px[slot(LatticeD2Q9::cx(i))] * py[slot(LatticeD2Q9::cy(i))];
}

} // namespace

void feq_extended(const MacroState& s, Vec9& out) { feq_impl(s, out, true); }
void feq_extended_unchecked(const MacroState& s, Vec9& out) { feq_impl(s, out, false); }

void geq_poly_with_weights(const MacroState& s, const GasParams& gas,
                           const Vec9& W, Vec9& out) {
    const MaxwellianMoments m = maxwellian_higher_moments(s, gas);
    const double twoRhoE = 2.0 * s.rho * s.E;
    const double T = s.T;
    for (int i = 0; i < kQ; ++i) {
        const double c[2] = {(double)LatticeD2Q9::cx(i), (double)LatticeD2Q9::cy(i)};
        double val = twoRhoE;
        for (int a = 0; a < 2; ++a) {
            val += m.q[a] * c[a] / T;
            for (int b = 0; b < 2; ++b) {
                const double d = (a == b) ? 1.0 : 0.0;
                val += (m.R[a][b] - twoRhoE * T * d) * (c[a] * c[b] - T * d) / (2.0 * T * T);
            }
        }
        out[i] = W[i] * val;
    }
}

void geq_poly(const MacroState& s, const GasParams& gas, Vec9& out) {
    Vec9 W;
    weights(s.T, W);
    geq_poly_with_weights(s, gas, W, out);
}

NewtonResult geq_newton(const MacroState& s, const GasParams& gas,
                        const NewtonSettings& settings, Vec9& out,
                        const LagrangeMultipliers* warm) {
    Vec9 W;
    weights(s.T, W);
    const MaxwellianMoments m = maxwellian_higher_moments(s, gas);
    const double targets[3] = {2.0 * s.rho * s.E, m.q[0], m.q[1]};

    NewtonResult res;
    double a[3];
    if (warm) {
        a[0] = warm->a1; a[1] = warm->ax; a[2] = warm->ay;
    } else {
        a[0] = std::log(2.0 * s.E); a[1] = 0.0; a[2] = 0.0;
    }

    auto eval = [&](const double* alpha, Vec9& g, double mom[3]) {
        mom[0] = mom[1] = mom[2] = 0.0;
        for (int i = 0; i < kQ; ++i) {
            const double cx = LatticeD2Q9::cx(i), cy = LatticeD2Q9::cy(i);
            g[i] = s.rho * W[i] * std::exp(alpha[0] + alpha[1] * cx + alpha[2] * cy);
            mom[0] += g[i];
            mom[1] += cx * g[i];
            mom[2] += cy * g[i];
        }
    };

    double mom[3];
    for (int it = 1; it <= settings.max_iters; ++it) {
        res.iterations = it;
        eval(a, out, mom);
        // Jacobian J_ab = sum_i phi_a phi_b g_i, phi = (1, cx, cy)
        double J[3][3] = {};
        for (int i = 0; i < kQ; ++i) {
            const double phi[3] = {1.0, (double)LatticeD2Q9::cx(i), (double)LatticeD2Q9::cy(i)};
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) J[r][c] += phi[r] * phi[c] * out[i];
        }
        const double r0 = mom[0] - targets[0];
        const double r1 = mom[1] - targets[1];
        const double r2 = mom[2] - targets[2];

        // Solve J * d = -r (3x3 Cramer).
        const double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                           J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                           J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
        if (!(std::abs(det) > 1e-300))
            throw InvalidStateError("singular Jacobian in energy-closure solve");
        auto det3 = [](double M[3][3]) {
            return M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1]) -
                   M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0]) +
                   M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]);
        };
        double d[3];
        for (int c = 0; c < 3; ++c) {
            double M[3][3];
            for (int r = 0; r < 3; ++r)
                for (int cc = 0; cc < 3; ++cc) M[r][cc] = J[r][cc];
            M[0][c] = -r0; M[1][c] = -r1; M[2][c] = -r2;
            d[c] = det3(M) / det;
        }
        a[0] += d[0]; a[1] += d[1]; a[2] += d[2];
        const double step = std::max({std::abs(d[0]), std::abs(d[1]), std::abs(d[2])});
        if (step < settings.tol) {
            res.converged = true;
            break;
        }
    }
    eval(a, out, mom);
    res.alpha = {a[0], a[1], a[2]};
    return res;
}

void g_quasi(const MacroState& s, const Vec9& geq, const Mat2& P,
             const Mat2& Peq, const Vec9& W, Vec9& out) {
    // D_a = sum_b u_b (P - Peq)_{ab}; correction (2/T) W_i c_i . D
    const double u[2] = {s.ux, s.uy};
    double D[2] = {0.0, 0.0};
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) D[a] += u[b] * (P[a][b] - Peq[a][b]);
    const double invT2 = 2.0 / s.T;
    for (int i = 0; i < kQ; ++i) {
        const double cdotD = LatticeD2Q9::cx(i) * D[0] + LatticeD2Q9::cy(i) * D[1];
        out[i] = geq[i] + invT2 * W[i] * cdotD;
    }
}

Mat2 second_moment(const double* h) {
    Mat2 P{{{0.0, 0.0}, {0.0, 0.0}}};
    for (int i = 0; i < kQ; ++i) {
        const double cx = LatticeD2Q9::cx(i), cy = LatticeD2Q9::cy(i);
        P[0][0] += cx * cx * h[i];
        P[0][1] += cx * cy * h[i];
        P[1][1] += cy * cy * h[i];
    }
    P[1][0] = P[0][1];
    return P;
}

} // namespace ndeq
