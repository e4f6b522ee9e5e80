#include <doctest.h>

#include "helpers.hpp"
#include "ndeq/closures.hpp"

using namespace ndeq;

namespace {

// Independent oracle: solve the per-axis 3-moment linear system
//   sum Psi = 1, sum s Psi = u, sum s^2 Psi = u^2 + T,  s in {0,+1,-1}
// by Gaussian elimination, unknowns ordered (Psi_0, Psi_+1, Psi_-1).
std::array<double, 3> axis_factors_oracle(double u, double T) {
    double A[3][4] = {
        {1, 1, 1, 1},
        {0, 1, -1, u},
        {0, 1, 1, u * u + T},
    };
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        std::swap(A[col], A[piv]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double m = A[r][col] / A[col][col];
            for (int c = col; c < 4; ++c) A[r][c] -= m * A[col][c];
        }
    }
    return {A[0][3] / A[0][0], A[1][3] / A[1][1], A[2][3] / A[2][2]};
}

MacroState make(double rho, double ux, double uy, double T, const GasParams& gas) {
    MacroState s;
    s.rho = rho;
    s.ux = ux;
    s.uy = uy;
    s.T = T;
    s.E = gas.Cv() * T + 0.5 * (ux * ux + uy * uy);
    return s;
}

} // namespace

TEST_CASE("feq at rest, T=1/3 gives the classical D2Q9 weights") {
    GasParams gas;
    gas.gamma = 2.0;
    const auto psi = axis_factors_oracle(0.0, 1.0 / 3.0);
    CHECK(psi[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(psi[1] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(psi[2] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    Vec9 feq;
    feq_extended(make(1.0, 0, 0, 1.0 / 3.0, gas), feq);
    CHECK(feq[0] == doctest::Approx(4.0 / 9.0).epsilon(1e-14));
    for (int i = 1; i <= 4; ++i) CHECK(feq[i] == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    for (int i = 5; i < kQ; ++i) CHECK(feq[i] == doctest::Approx(1.0 / 36.0).epsilon(1e-14));
}

TEST_CASE("feq axis factors solve the 1D moment system") {
    const auto psi = axis_factors_oracle(0.2, 0.4);
    CHECK(psi[0] == doctest::Approx(0.56).epsilon(1e-14));
    CHECK(psi[1] == doctest::Approx(0.32).epsilon(1e-14));
    CHECK(psi[2] == doctest::Approx(0.12).epsilon(1e-14));
    // oracle self-checks
    CHECK(psi[1] - psi[2] == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(psi[1] + psi[2] == doctest::Approx(0.44).epsilon(1e-14));

    GasParams gas;
    gas.gamma = 1.4;
    Vec9 feq;
    feq_extended(make(1.3, 0.2, -0.1, 0.4, gas), feq);
    for (int i = 0; i < kQ; ++i) {
        const auto px = axis_factors_oracle(0.2, 0.4);
        const auto py = axis_factors_oracle(-0.1, 0.4);
        auto slot = [](int c) { return c == 0 ? 0 : (c > 0 ? 1 : 2); };
        const double want = 1.3 * px[slot(LatticeD2Q9::cx(i))] * py[slot(LatticeD2Q9::cy(i))];
        CHECK(feq[i] == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("feq moment identities over random valid states") {
    test::Rng rng(211);
    GasParams gas;
    gas.gamma = 1.4;
    for (int trial = 0; trial < 1000; ++trial) {
        const MacroState s = test::random_state(rng, gas);
        Vec9 feq;
        feq_extended(s, feq);
        double rho = 0, mx = 0, my = 0;
        Mat2 P{{{0, 0}, {0, 0}}};
        for (int i = 0; i < kQ; ++i) {
            const double cx = LatticeD2Q9::cx(i), cy = LatticeD2Q9::cy(i);
            rho += feq[i];
            mx += cx * feq[i];
            my += cy * feq[i];
            P[0][0] += cx * cx * feq[i];
            P[0][1] += cx * cy * feq[i];
            P[1][1] += cy * cy * feq[i];
        }
        CHECK(std::abs(rho - s.rho) <= 1e-12);
        CHECK(std::abs(mx - s.rho * s.ux) <= 1e-12);
        CHECK(std::abs(my - s.rho * s.uy) <= 1e-12);
        CHECK(std::abs(P[0][0] - s.rho * (s.ux * s.ux + s.T)) <= 1e-12);
        CHECK(std::abs(P[0][1] - s.rho * s.ux * s.uy) <= 1e-12);
        CHECK(std::abs(P[1][1] - s.rho * (s.uy * s.uy + s.T)) <= 1e-12);
    }
}

TEST_CASE("feq raises on non-positive factors") {
    GasParams gas;
    gas.gamma = 1.4;
    Vec9 feq;
    CHECK_THROWS_AS(feq_extended(make(1.0, 0.9, 0, 0.5, gas), feq), InvalidStateError);
    CHECK_NOTHROW(feq_extended_unchecked(make(1.0, 0.9, 0, 0.5, gas), feq));
}

TEST_CASE("geq_poly zeroth moment equals 2 rho E") {
    GasParams gas;
    gas.gamma = 2.0;  // Cv = 1

    SUBCASE("rest state") {
        const MacroState s = make(1.4, 0, 0, 0.3, gas);
        Vec9 geq;
        geq_poly(s, gas, geq);
        double sum = 0;
        for (double v : geq) sum += v;
        CHECK(sum == doctest::Approx(2 * s.rho * s.E).epsilon(1e-13));
    }
    SUBCASE("moving state sums to 0.41") {
        const MacroState s = make(1.0, 0.1, 0, 0.2, gas);
        CHECK(2 * s.rho * s.E == doctest::Approx(0.41));
        Vec9 geq;
        geq_poly(s, gas, geq);
        double sum = 0;
        for (double v : geq) sum += v;
        CHECK(sum == doctest::Approx(0.41).epsilon(1e-13));
    }
    SUBCASE("homogeneity in rho") {
        const MacroState s1 = make(0.8, 0.1, -0.15, 0.25, gas);
        const MacroState s2 = make(1.6, 0.1, -0.15, 0.25, gas);
        Vec9 a, b;
        geq_poly(s1, gas, a);
        geq_poly(s2, gas, b);
        for (int i = 0; i < kQ; ++i) CHECK(b[i] == doctest::Approx(2 * a[i]).epsilon(1e-14));
    }
}

TEST_CASE("geq_newton symmetric cases") {
    GasParams gas;
    gas.gamma = 2.0;
    NewtonSettings settings;

    SUBCASE("E=0.5 gives alpha = 0 in at most 2 iterations") {
        const MacroState s = make(1.0, 0, 0, 0.5, gas);  // E = 0.5
        Vec9 geq;
        const NewtonResult r = geq_newton(s, gas, settings, geq);
        CHECK(r.converged);
        CHECK(r.iterations <= 2);
        CHECK(r.alpha.a1 == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(r.alpha.ax == 0.0);
        CHECK(r.alpha.ay == 0.0);
        Vec9 W;
        weights(s.T, W);
        for (int i = 0; i < kQ; ++i) CHECK(geq[i] == doctest::Approx(W[i]).epsilon(1e-12));
    }
    SUBCASE("E=0.75 gives alpha1 = ln 1.5") {
        const MacroState s = make(1.0, 0, 0, 0.75, gas);
        Vec9 geq;
        const NewtonResult r = geq_newton(s, gas, settings, geq);
        CHECK(r.converged);
        CHECK(r.iterations <= 2);
        CHECK(r.alpha.a1 == doctest::Approx(std::log(1.5)).epsilon(1e-12));
        CHECK(r.alpha.ax == 0.0);
    }
}

namespace {

void check_newton_moments(const MacroState& s, const GasParams& gas, const Vec9& geq,
                          double tol) {
    // post-hoc moment check is the oracle
    const MaxwellianMoments m = maxwellian_higher_moments(s, gas);
    double m0 = 0, m1x = 0, m1y = 0;
    for (int i = 0; i < kQ; ++i) {
        m0 += geq[i];
        m1x += LatticeD2Q9::cx(i) * geq[i];
        m1y += LatticeD2Q9::cy(i) * geq[i];
    }
    CHECK(std::abs(m0 - 2 * s.rho * s.E) <= tol * std::max(1.0, std::abs(2 * s.rho * s.E)));
    CHECK(std::abs(m1x - m.q[0]) <= tol * std::max(1.0, std::abs(m.q[0])));
    CHECK(std::abs(m1y - m.q[1]) <= tol * std::max(1.0, std::abs(m.q[1])));
}

} // namespace

TEST_CASE("geq_newton converged moments match targets") {
    GasParams gas;
    gas.gamma = 1.4;
    NewtonSettings settings;
    const MacroState s = make(1.0, 0.1, 0, 0.2, gas);
    Vec9 geq;
    const NewtonResult r = geq_newton(s, gas, settings, geq);
    CHECK(r.converged);
    check_newton_moments(s, gas, geq, 1e-6);
    for (double v : geq) CHECK(v > 0.0);
}

TEST_CASE("geq_newton moment residuals over random states") {
    test::Rng rng(223);
    GasParams gas;
    gas.gamma = 1.4;
    NewtonSettings settings;
    for (int trial = 0; trial < 300; ++trial) {
        const MacroState s = test::random_state(rng, gas);
        Vec9 geq;
        const NewtonResult r = geq_newton(s, gas, settings, geq);
        CHECK(r.converged);
        CHECK(r.iterations <= settings.max_iters);
        check_newton_moments(s, gas, geq, 1e-6);
        for (double v : geq) CHECK(v > 0.0);
    }
}

TEST_CASE("geq_newton warm start does not change converged moments") {
    GasParams gas;
    gas.gamma = 1.4;
    NewtonSettings settings;
    const MacroState s = make(0.9, 0.15, -0.05, 0.3, gas);
    Vec9 cold, warm;
    const NewtonResult rc = geq_newton(s, gas, settings, cold);
    // warm-start from a nearby state's multipliers
    const MacroState s2 = make(0.9, 0.14, -0.05, 0.31, gas);
    Vec9 tmp;
    const NewtonResult r2 = geq_newton(s2, gas, settings, tmp);
    const NewtonResult rw = geq_newton(s, gas, settings, warm, &r2.alpha);
    CHECK(rc.converged);
    CHECK(rw.converged);
    check_newton_moments(s, gas, warm, 1e-6);
    for (int i = 0; i < kQ; ++i)
        CHECK(warm[i] == doctest::Approx(cold[i]).epsilon(1e-9));
}

TEST_CASE("geq_newton non-convergence returns last iterate with flag") {
    GasParams gas;
    gas.gamma = 1.4;
    NewtonSettings hard;
    hard.max_iters = 1;
    hard.tol = 1e-16;
    const MacroState s = make(1.0, 0.3, 0.2, 0.25, gas);
    Vec9 geq;
    const NewtonResult r = geq_newton(s, gas, hard, geq);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 1);
    for (double v : geq) CHECK(std::isfinite(v));
}

TEST_CASE("polynomial and Newton closures share the zeroth moment") {
    GasParams gas;
    gas.gamma = 1.4;
    NewtonSettings settings;
    test::Rng rng(227);
    for (int trial = 0; trial < 50; ++trial) {
        const MacroState s = test::random_state(rng, gas);
        Vec9 a, b;
        geq_poly(s, gas, a);
        geq_newton(s, gas, settings, b);
        double sa = 0, sb = 0;
        for (int i = 0; i < kQ; ++i) {
            sa += a[i];
            sb += b[i];
        }
        CHECK(sa == doctest::Approx(2 * s.rho * s.E).epsilon(1e-12));
        CHECK(sb == doctest::Approx(2 * s.rho * s.E).epsilon(1e-6));
    }
}

TEST_CASE("quasi-equilibrium") {
    GasParams gas;
    gas.gamma = 1.4;
    test::Rng rng(229);
    const MacroState s = make(1.2, 0.12, -0.08, 0.35, gas);
    Vec9 W, geq;
    weights(s.T, W);
    geq_poly(s, gas, geq);

    SUBCASE("P = Peq gives g* = geq exactly") {
        Mat2 P{{{1.0, 0.2}, {0.2, 0.9}}};
        Vec9 gstar;
        g_quasi(s, geq, P, P, W, gstar);
        for (int i = 0; i < kQ; ++i) CHECK(gstar[i] == geq[i]);
    }
    SUBCASE("u = 0 gives g* = geq for any P") {
        const MacroState s0 = make(1.2, 0, 0, 0.35, gas);
        Mat2 P{{{1.3, 0.1}, {0.1, 0.7}}};
        Mat2 Peq{{{1.0, 0.0}, {0.0, 1.0}}};
        Vec9 gstar;
        g_quasi(s0, geq, P, Peq, W, gstar);
        for (int i = 0; i < kQ; ++i) CHECK(gstar[i] == geq[i]);
    }
    SUBCASE("correction carries zero mass") {
        for (int trial = 0; trial < 100; ++trial) {
            Mat2 P, Peq;
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b) {
                    P[a][b] = rng.uniform(-1, 1);
                    Peq[a][b] = rng.uniform(-1, 1);
                }
            P[1][0] = P[0][1];
            Peq[1][0] = Peq[0][1];
            Vec9 gstar;
            g_quasi(s, geq, P, Peq, W, gstar);
            double diff = 0;
            for (int i = 0; i < kQ; ++i) diff += gstar[i] - geq[i];
            CHECK(std::abs(diff) <= 1e-14);
        }
    }
}
