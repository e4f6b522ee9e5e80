#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "helpers.hpp"
#include "ndeq/bench.hpp"
#include "ndeq/tape.hpp"
#include "ndeq/training.hpp"

using namespace ndeq;

TEST_CASE("gelu values and derivative") {
    CHECK(gelu(0.0) == 0.0);
    CHECK(std::abs(gelu(10.0) - 10.0) < 1e-6);
    const double h = 1e-5;
    const double fd = (gelu(0.5 + h) - gelu(0.5 - h)) / (2 * h);
    CHECK(std::abs(gelu_grad(0.5) - fd) < 1e-7);
}

namespace {

MlpParams small_params(int width, int seed, double scale) {
    MlpParams p = init_params(width, 4, seed);
    p.for_each([scale](double& w) { w *= scale; });
    return p;
}

// Straight-line reference evaluation, independent of the library forward.
void naive_forward(const MlpParams& p, const double* U, Vec9& out) {
    auto eval_net = [](const std::vector<MlpLayer>& net, std::vector<double> a) {
        for (size_t l = 0; l < net.size(); ++l) {
            std::vector<double> b(net[l].out, 0.0);
            for (int r = 0; r < net[l].out; ++r) {
                double s = net[l].b[r];
                for (int c = 0; c < net[l].in; ++c)
                    s += net[l].W[(size_t)r * net[l].in + c] * a[c];
                b[r] = (l + 1 < net.size()) ? gelu(s) : s;
            }
            a = b;
        }
        return a;
    };
    const std::vector<double> lam = eval_net(p.lambda_net, {U[0], U[1], U[2], U[3]});
    for (int i = 0; i < kQ; ++i) {
        const std::vector<double> phi = eval_net(
            p.phi_net, {(double)LatticeD2Q9::cx(i), (double)LatticeD2Q9::cy(i)});
        double s = 0;
        for (size_t k = 0; k < lam.size(); ++k) s += lam[k] * phi[k];
        out[i] = std::exp(s);
    }
}

} // namespace

TEST_CASE("zeroed output layers give the all-ones equilibrium") {
    MlpParams p = init_params(16, 4, 3);
    for (double& w : p.lambda_net.back().W) w = 0.0;
    for (double& b : p.lambda_net.back().b) b = 0.0;
    std::vector<double> phi;
    eval_phi(p, phi);
    MacroState U;
    U.rho = 1.3;
    U.ux = 0.05;
    U.uy = -0.02;
    U.T = 0.31;
    Vec9 out;
    neurde_forward(p, phi, U, out);
    for (int i = 0; i < kQ; ++i) CHECK(out[i] == 1.0);
}

TEST_CASE("basis rows depend only on their own velocity") {
    MlpParams p = small_params(16, 5, 0.5);
    std::vector<double> phi;
    eval_phi(p, phi);
    // evaluating the net on (0,0) alone reproduces the rest-channel row
    std::vector<double> a = {0.0, 0.0};
    for (size_t l = 0; l < p.phi_net.size(); ++l) {
        std::vector<double> b(p.phi_net[l].out, 0.0);
        for (int r = 0; r < p.phi_net[l].out; ++r) {
            double s = p.phi_net[l].b[r];
            for (int c = 0; c < p.phi_net[l].in; ++c)
                s += p.phi_net[l].W[(size_t)r * p.phi_net[l].in + c] * a[c];
            b[r] = (l + 1 < p.phi_net.size()) ? gelu(s) : s;
        }
        a = b;
    }
    for (int k = 0; k < p.p(); ++k) CHECK(phi[k] == doctest::Approx(a[k]).epsilon(1e-15));
}

TEST_CASE("forward matches the straight-line reference") {
    test::Rng rng(301);
    for (int trial = 0; trial < 5; ++trial) {
        MlpParams p = small_params(16, 100 + trial, 0.3);
        std::vector<double> phi;
        eval_phi(p, phi);
        const double U[4] = {rng.uniform(0.5, 2), rng.uniform(-0.2, 0.2),
                             rng.uniform(-0.2, 0.2), rng.uniform(0.1, 0.5)};
        MacroState s;
        s.rho = U[0];
        s.ux = U[1];
        s.uy = U[2];
        s.T = U[3];
        Vec9 a, b;
        neurde_forward(p, phi, s, a);
        naive_forward(p, U, b);
        for (int i = 0; i < kQ; ++i) {
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-13));
            CHECK(a[i] > 0.0);
        }
    }
}

TEST_CASE("tape forward agrees with the plain forward") {
    MlpParams p = small_params(12, 7, 0.4);
    MlpGrads grads;
    grads.init(p);
    GasParams gas;
    Tape tape(p, grads, gas);
    const Tape::BufId phi = tape.phi_net();
    const double Urow[4] = {1.1, 0.03, -0.05, 0.22};
    const Tape::BufId U = tape.input(std::span<const double>(Urow, 4));
    const Tape::BufId lam = tape.lambda_net(U, 1);
    const Tape::BufId geq = tape.geq_exp(lam, phi, 1);

    std::vector<double> phi_plain;
    eval_phi(p, phi_plain);
    MacroState s;
    s.rho = Urow[0];
    s.ux = Urow[1];
    s.uy = Urow[2];
    s.T = Urow[3];
    Vec9 plain;
    neurde_forward(p, phi_plain, s, plain);
    for (int i = 0; i < kQ; ++i) CHECK(tape.value(geq)[i] == plain[i]);
}

TEST_CASE("exponent overflow raises instead of clamping") {
    MlpParams p = init_params(8, 4, 9);
    for (double& b : p.lambda_net.back().b) b = 500.0;
    for (double& w : p.phi_net.back().W) w = 0.0;
    for (double& b : p.phi_net.back().b) b = 3.0;
    std::vector<double> phi;
    eval_phi(p, phi);
    MacroState s;
    s.rho = 1.0;
    s.T = 0.2;
    Vec9 out;
    CHECK_THROWS_AS(neurde_forward(p, phi, s, out), InvalidStateError);
}

TEST_CASE("checkpoint round trip preserves every parameter") {
    MlpParams p = init_params(16, 4, 42);
    const std::string path = "ckpt_roundtrip.ndew";
    save_checkpoint(path, p);
    const MlpParams q = load_checkpoint(path);
    REQUIRE(q.lambda_net.size() == p.lambda_net.size());
    REQUIRE(q.phi_net.size() == p.phi_net.size());
    for (size_t l = 0; l < p.lambda_net.size(); ++l) {
        CHECK(q.lambda_net[l].W == p.lambda_net[l].W);
        CHECK(q.lambda_net[l].b == p.lambda_net[l].b);
        CHECK(q.phi_net[l].W == p.phi_net[l].W);
        CHECK(q.phi_net[l].b == p.phi_net[l].b);
    }
    std::remove(path.c_str());
}

TEST_CASE("gradient of sum of outputs at zero parameters") {
    // With zeroed lambda output layer, d(sum_i geq_i)/d(lambda final bias_k)
    // = sum_i phi_k(c_i).
    MlpParams p = init_params(12, 4, 11);
    for (double& w : p.lambda_net.back().W) w = 0.0;
    for (double& b : p.lambda_net.back().b) b = 0.0;
    MlpGrads grads;
    grads.init(p);
    GasParams gas;
    Tape tape(p, grads, gas);
    const Tape::BufId phi = tape.phi_net();
    const double Urow[4] = {1.0, 0.0, 0.0, 0.3};
    const Tape::BufId U = tape.input(std::span<const double>(Urow, 4));
    const Tape::BufId lam = tape.lambda_net(U, 1);
    const Tape::BufId geq = tape.geq_exp(lam, phi, 1);
    for (int i = 0; i < kQ; ++i) tape.adjoint(geq)[i] = 1.0;  // loss = sum geq
    tape.backward();
    const auto& bias_grad = grads.lamB.back();
    const auto phiv = tape.value(phi);
    for (int k = 0; k < p.p(); ++k) {
        double want = 0.0;
        for (int i = 0; i < kQ; ++i) want += phiv[(size_t)i * p.p() + k];
        CHECK(bias_grad[k] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("loss independent of parameters gives zero gradients") {
    MlpParams p = small_params(8, 13, 0.3);
    MlpGrads grads;
    grads.init(p);
    GasParams gas;
    Tape tape(p, grads, gas);
    std::vector<double> data(18, 0.5);
    const Tape::BufId x = tape.input(data);
    std::vector<double> target(18, 0.1);
    tape.mse(x, target, 1.0);
    tape.backward();
    CHECK(grads.norm2() == 0.0);
}

namespace {

// Small synthetic trajectory on a periodic grid. States are chosen so the
// untrained network's O(1) outputs keep the energy moment near 2*rho*E and
// the temperature inside the lattice window for a few steps.
Dataset tiny_dataset(int nx, int ny, int steps, int seed) {
    Dataset d;
    d.grid = Grid::periodic(nx, ny);
    d.gas.gamma = 1.4;  // Cv = 2.5
    d.gas.Pr = 0.71;
    d.gas.mu = 0.2;
    test::Rng rng(seed);
    std::vector<MacroState> U(d.grid.cells());
    for (auto& s : U) {
        s.rho = rng.uniform(8.5, 9.5);
        s.ux = rng.uniform(-0.05, 0.05);
        s.uy = rng.uniform(-0.05, 0.05);
        s.T = rng.uniform(0.18, 0.26);
        s.E = d.gas.Cv() * s.T + 0.5 * (s.ux * s.ux + s.uy * s.uy);
    }
    SolverState st(d.grid, d.gas, ClosureSpec::newton_closure());
    lift(st, U);
    run(st, steps, [&](long, const PopulationGrid& f, const PopulationGrid& g,
                       const PopulationGrid& geq, const std::vector<MacroState>&) {
        d.snaps.push_back({f, g, geq});
    });
    PopulationGrid fc(nx, ny, Species::F), gc(nx, ny, Species::G), geq(nx, ny, Species::G);
    collide(st, fc, gc, &geq);
    d.snaps.push_back({st.f, st.g, geq});
    return d;
}

} // namespace

TEST_CASE("backprop matches central finite differences through unrolled steps") {
    const Dataset data = tiny_dataset(4, 4, 4, 401);
    const StreamRouter router(data.grid, nullptr, nullptr);
    TrainConfig cfg;
    cfg.alpha = 0.3;
    for (int len : {1, 2, 3}) {
        MlpParams params = small_params(12, 500 + len, 0.3);
        const test::GradCheckResult res =
            test::gradcheck_window(params, data, 0, len, cfg, router, 4, 40, 600 + len);
        REQUIRE_FALSE(res.diverged);
        CHECK(res.max_rel_directional <= 1e-4);
        CHECK(res.max_rel_coordinate <= 1e-4);
    }
}

TEST_CASE("gradients flow through the TVD penalty") {
    const Dataset data = tiny_dataset(4, 4, 4, 403);
    const StreamRouter router(data.grid, nullptr, nullptr);
    TrainConfig cfg;
    cfg.alpha = 0.0;
    MlpParams params = small_params(12, 77, 0.3);
    MlpGrads g1, g2;
    g1.init(params);
    g2.init(params);
    run_window(params, g1, data, 0, 2, cfg, 0.0, router, {}, true);
    run_window(params, g2, data, 0, 2, cfg, 0.5, router, {}, true);
    CHECK(g1.norm2() != g2.norm2());
}

TEST_CASE("single-step chain rule on a one-cell grid at tau = 1") {
    // 1x1 periodic grid: streaming is the identity. mu = rho*T/2 and Pr = 1
    // make both relaxation times exactly 1, so the step is pure equilibrium
    // replacement: f1 = feq(U0), g1 = NN(U0), U1 = project(f1, g1).
    Dataset d;
    d.grid = Grid::periodic(1, 1);
    d.gas.gamma = 1.4;
    d.gas.Pr = 1.0;
    MacroState U0;
    U0.rho = 9.0;
    U0.ux = 0.03;
    U0.uy = -0.02;
    U0.T = 0.22;
    U0.E = d.gas.Cv() * U0.T + 0.5 * (U0.ux * U0.ux + U0.uy * U0.uy);
    d.gas.mu = U0.rho * U0.T / 2.0;

    SolverState st(d.grid, d.gas, ClosureSpec::newton_closure());
    lift(st, {U0});
    for (int k = 0; k < 3; ++k) {
        PopulationGrid fc(1, 1, Species::F), gc(1, 1, Species::G), geq(1, 1, Species::G);
        collide(st, fc, gc, &geq);
        d.snaps.push_back({st.f, st.g, geq});
        step(st);
    }

    MlpParams params = small_params(10, 901, 0.3);
    const StreamRouter router(d.grid, nullptr, nullptr);
    TrainConfig cfg;
    cfg.alpha = 0.0;

    MlpGrads grads;
    grads.init(params);
    grads.zero();
    const WindowStats stw = run_window(params, grads, d, 0, 2, cfg, 0.0, router, {}, true);
    REQUIRE_FALSE(stw.diverged);

    // Hand-composed chain rule: network Jacobians from finite differences of
    // the plain forward, projection Jacobian written analytically.
    std::vector<double> phi;
    eval_phi(params, phi);
    auto nn = [&](const double* Uv, Vec9& out) {
        MacroState s;
        s.rho = Uv[0];
        s.ux = Uv[1];
        s.uy = Uv[2];
        s.T = Uv[3];
        neurde_forward(params, phi, s, out);
    };
    const double U0v[4] = {U0.rho, U0.ux, U0.uy, U0.T};
    Vec9 g1;
    nn(U0v, g1);
    Vec9 f1;
    feq_extended(U0, f1);
    const MacroState U1s = project(f1.data(), g1.data(), d.gas);
    const double U1v[4] = {U1s.rho, U1s.ux, U1s.uy, U1s.T};
    Vec9 g2;
    nn(U1v, g2);

    // loss = (1/2) [ mse(g1, geq_data(0)) + mse(g2, geq_data(1)) ]
    Vec9 dL_dg2, dL_dg1_direct;
    for (int i = 0; i < kQ; ++i) {
        dL_dg2[i] = 0.5 * 2.0 / kQ * (g2[i] - d.snaps[1].geq.v[i]);
        dL_dg1_direct[i] = 0.5 * 2.0 / kQ * (g1[i] - d.snaps[0].geq.v[i]);
    }
    // dL/dU1 via FD of the network at U1
    double dL_dU1[4] = {0, 0, 0, 0};
    for (int c = 0; c < 4; ++c) {
        double Up[4], Um[4];
        std::copy(U1v, U1v + 4, Up);
        std::copy(U1v, U1v + 4, Um);
        const double h = 1e-6 * std::max(1.0, std::abs(U1v[c]));
        Up[c] += h;
        Um[c] -= h;
        Vec9 gp, gm;
        nn(Up, gp);
        nn(Um, gm);
        for (int i = 0; i < kQ; ++i)
            dL_dU1[c] += dL_dg2[i] * (gp[i] - gm[i]) / (2 * h);
    }
    // only T depends on g1: dT/dg_i = 1/(2 rho Cv) with rho = rho(f1) fixed
    Vec9 dL_dg1;
    for (int i = 0; i < kQ; ++i)
        dL_dg1[i] = dL_dg1_direct[i] + dL_dU1[3] / (2.0 * U1s.rho * d.gas.Cv());

    test::Rng rng(905);
    const size_t n = params.count();
    for (int k = 0; k < 30; ++k) {
        const size_t idx = (size_t)(rng.next_u64() % n);
        double* theta = params.flat_at(idx);
        const double orig = *theta;
        const double h = 1e-6 * std::max(1.0, std::abs(orig));
        Vec9 g1p, g1m, g2p, g2m;
        *theta = orig + h;
        eval_phi(params, phi);
        nn(U0v, g1p);
        nn(U1v, g2p);
        *theta = orig - h;
        eval_phi(params, phi);
        nn(U0v, g1m);
        nn(U1v, g2m);
        *theta = orig;
        eval_phi(params, phi);

        double want = 0.0;
        for (int i = 0; i < kQ; ++i) {
            want += dL_dg1[i] * (g1p[i] - g1m[i]) / (2 * h);  // through the step
            want += dL_dg2[i] * (g2p[i] - g2m[i]) / (2 * h);  // direct at U1
        }
        const double got = *grads.flat_at(idx);
        const double denom = std::max({std::abs(want), std::abs(got), 1e-7});
        CHECK(std::abs(want - got) / denom <= 2e-4);
    }
}

TEST_CASE("gradients are bit-identical across repeated runs") {
    const Dataset data = tiny_dataset(4, 4, 4, 407);
    const StreamRouter router(data.grid, nullptr, nullptr);
    TrainConfig cfg;
    cfg.alpha = 0.5;
    MlpParams params = small_params(12, 55, 0.3);
    MlpGrads a, b;
    a.init(params);
    b.init(params);
    run_window(params, a, data, 0, 3, cfg, 0.1, router, {}, true);
    run_window(params, b, data, 0, 3, cfg, 0.1, router, {}, true);
    for (size_t l = 0; l < a.lamW.size(); ++l) {
        CHECK(a.lamW[l] == b.lamW[l]);
        CHECK(a.lamB[l] == b.lamB[l]);
        CHECK(a.phiW[l] == b.phiW[l]);
        CHECK(a.phiB[l] == b.phiB[l]);
    }
}
