#include "ndeq/bench.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ndeq/errors.hpp"
#include "ndeq/io.hpp"

namespace fs = std::filesystem;

namespace ndeq {

std::vector<MacroState> CaseSpec::initial_field_sim() const {
    std::vector<MacroState> U(grid.cells());
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            if (grid.is_solid(x, y)) continue;
            MacroState s = init(x, y);
            s.ux -= gas.ushift_x;
            s.uy -= gas.ushift_y;
            s.E = gas.Cv() * s.T + 0.5 * (s.ux * s.ux + s.uy * s.uy);
            U[grid.cell(x, y)] = s;
        }
    return U;
}

std::optional<MacroState> CaseSpec::inlet_sim() const {
    if (!inlet) return std::nullopt;
    MacroState s = *inlet;
    s.ux -= gas.ushift_x;
    s.uy -= gas.ushift_y;
    s.E = gas.Cv() * s.T + 0.5 * (s.ux * s.ux + s.uy * s.uy);
    return s;
}

SolverState CaseSpec::make_state(ClosureSpec closure) const {
    SolverState st(grid, gas, closure);
    st.inlet = inlet_sim();
    lift(st, initial_field_sim());
    return st;
}

CaseSpec make_sod(int case_id, int scale, double temperature_scale) {
    if (scale < 1) throw ConfigError("scale must be >= 1");
    CaseSpec c;
    c.nx = 3000 / scale + 1;
    c.ny = 5;
    // Closed tube: reflective ends realized as bounce-back wall columns, so
    // the frame shift cannot advect mass through the ends.
    c.grid = Grid(c.nx, c.ny, EdgeKind::Periodic, EdgeKind::Periodic,
                  EdgeKind::Periodic, EdgeKind::Periodic);
    std::vector<uint8_t> walls(c.grid.cells(), 0);
    for (int y = 0; y < c.ny; ++y) {
        walls[c.grid.cell(0, y)] = 1;
        walls[c.grid.cell(c.nx - 1, y)] = 1;
    }
    c.grid.set_solid(std::move(walls));
    c.gas.R = 1.0;
    c.gas.Pr = 0.71;
    c.gas.mu = 1e-4;
    // Entropic-stabilization floor: the three-parameter exponential closure
    // under-represents the fourth-order moment, which destabilizes the bare
    // scheme at these temperatures; the benchmark cases run with a raised
    // effective viscosity.
    c.gas.tau_min = 0.7;
    MacroState left, right;
    if (case_id == 1) {
        c.name = "sod1";
        c.gas.gamma = 2.0;
        c.gas.ushift_x = 3.0 / 50.0;
        left.rho = 0.5;
        left.T = 0.2;
        right.rho = 2.5;
        right.T = 0.025;
    } else if (case_id == 2) {
        c.name = "sod2";
        c.gas.gamma = 1.4;
        c.gas.ushift_x = 2.0 / 5.0;
        // (rho, p) = (1.0, 1.0) / (0.125, 0.1); T = p/(R rho), pressure
        // rescaled into the lattice window.
        left.rho = 1.0;
        left.T = temperature_scale * 1.0 / 1.0;
        right.rho = 0.125;
        right.T = temperature_scale * 0.1 / 0.125;
    } else {
        throw ConfigError("sod case must be 1 or 2");
    }
    const int nx = c.nx;
    c.init = [left, right, nx](int x, int) {
        return ((double)x / (double)(nx - 1) <= 0.5) ? left : right;
    };
    return c;
}

CaseSpec make_cylinder(int scale) {
    if (scale < 1) throw ConfigError("scale must be >= 1");
    CaseSpec c;
    c.name = "cylinder";
    c.nx = 500 / scale;
    c.ny = 300 / scale;
    c.cyl_r = 20.0 / scale;
    c.cyl_cx = 166.0 / scale;
    c.cyl_cy = 149.0 / scale;
    if (c.cyl_cx - c.cyl_r < 1 || c.cyl_cx + c.cyl_r >= c.nx - 1 ||
        c.cyl_cy - c.cyl_r < 1 || c.cyl_cy + c.cyl_r >= c.ny - 1)
        throw ConfigError("cylinder does not fit inside grid");

    const double T_inf = 0.2, Ma_inf = 1.8, rho_inf = 1.0, Re = 300.0;
    c.gas.gamma = 1.4;
    c.gas.Pr = 0.71;
    c.gas.R = 1.0;
    const double u_inf = Ma_inf * std::sqrt(c.gas.gamma * T_inf);
    c.gas.mu = rho_inf * u_inf * (2.0 * c.cyl_r) / Re;
    c.gas.ushift_x = 0.6 * u_inf;

    c.grid = Grid(c.nx, c.ny, EdgeKind::Dirichlet, EdgeKind::Neumann1,
                  EdgeKind::FreeStream, EdgeKind::FreeStream);
    std::vector<uint8_t> mask(c.grid.cells(), 0);
    for (int y = 0; y < c.ny; ++y)
        for (int x = 0; x < c.nx; ++x) {
            const double dx = x - c.cyl_cx, dy = y - c.cyl_cy;
            if (dx * dx + dy * dy <= c.cyl_r * c.cyl_r) mask[c.grid.cell(x, y)] = 1;
        }
    c.grid.set_solid(std::move(mask));

    MacroState far;
    far.rho = rho_inf;
    far.ux = u_inf;
    far.uy = 0.0;
    far.T = T_inf;
    far.E = c.gas.Cv() * far.T + 0.5 * (far.ux * far.ux);
    c.inlet = far;
    c.init = [far](int, int) { return far; };
    return c;
}

namespace {

Recorder dataset_recorder(Dataset& out) {
    return [&out](long, const PopulationGrid& f, const PopulationGrid& g,
                  const PopulationGrid& geq, const std::vector<MacroState>&) {
        out.snaps.push_back({f, g, geq});
    };
}

// Append the final state with its own equilibrium field so a dataset of N
// steps has N+1 snapshots.
void append_final(Dataset& out, SolverState& st) {
    PopulationGrid fc(st.grid.nx, st.grid.ny, Species::F);
    PopulationGrid gc(st.grid.nx, st.grid.ny, Species::G);
    PopulationGrid geq(st.grid.nx, st.grid.ny, Species::G);
    collide(st, fc, gc, &geq);
    out.snaps.push_back({st.f, st.g, geq});
}

} // namespace

Dataset generate_reference(const CaseSpec& c, long steps) {
    SolverState st = c.make_state(ClosureSpec::newton_closure());
    Dataset out;
    out.grid = c.grid;
    out.gas = c.gas;
    out.inlet = c.inlet_sim();
    out.snaps.reserve(steps + 1);
    run(st, steps, dataset_recorder(out));
    append_final(out, st);
    return out;
}

Dataset rollout(const CaseSpec& c, const Dataset& ref, long t0, long t1,
                ClosureSpec closure) {
    if (t0 >= (long)ref.snaps.size())
        throw ConfigError("rollout start beyond reference length");
    SolverState st(c.grid, c.gas, closure);
    st.inlet = c.inlet_sim();
    st.t = t0;
    std::vector<MacroState> U(c.grid.cells());
    const DataSnapshot& s0 = ref.snaps[t0];
    for (int y = 0; y < c.grid.ny; ++y)
        for (int x = 0; x < c.grid.nx; ++x) {
            if (c.grid.is_solid(x, y)) continue;
            const size_t ci = c.grid.cell(x, y);
            U[ci] = project(&s0.f.v[ci * kQ], &s0.g.v[ci * kQ], c.gas);
        }
    lift(st, U);
    Dataset out;
    out.grid = c.grid;
    out.gas = c.gas;
    out.inlet = c.inlet_sim();
    run(st, t1, dataset_recorder(out));
    append_final(out, st);
    return out;
}

namespace {

struct Fields {
    std::vector<double> rho, ux, uy, T, p;
};

Fields fields_of(const DataSnapshot& s, const Grid& grid, const GasParams& gas) {
    Fields f;
    const size_t n = grid.cells();
    f.rho.reserve(n);
    for (size_t c = 0; c < n; ++c) {
        if (grid.has_solid() && grid.solid[c]) continue;
        const MacroState U = project(&s.f.v[c * kQ], &s.g.v[c * kQ], gas);
        f.rho.push_back(U.rho);
        f.ux.push_back(U.ux + gas.ushift_x);
        f.uy.push_back(U.uy + gas.ushift_y);
        f.T.push_back(U.T);
        f.p.push_back(gas.R * U.rho * U.T);
    }
    return f;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ConfigError("field shape mismatch in evaluate");
    double num = 0, den = 0;
    for (size_t k = 0; k < a.size(); ++k) {
        num += (a[k] - b[k]) * (a[k] - b[k]);
        den += b[k] * b[k];
    }
    return den > 0 ? std::sqrt(num) / std::sqrt(den) : std::sqrt(num);
}

} // namespace

void r_moment_errors(const Dataset& d, std::vector<double>& err_xx,
                     std::vector<double>& err_yy) {
    err_xx.clear();
    err_yy.clear();
    const size_t n = d.grid.cells();
    for (const DataSnapshot& s : d.snaps) {
        double sxx = 0, syy = 0;
        for (size_t c = 0; c < n; ++c) {
            if (d.grid.has_solid() && d.grid.solid[c]) continue;
            double Rxx = 0, Ryy = 0;
            for (int i = 0; i < kQ; ++i) {
                const double cx = LatticeD2Q9::cx(i), cy = LatticeD2Q9::cy(i);
                Rxx += cx * cx * s.geq.v[c * kQ + i];
                Ryy += cy * cy * s.geq.v[c * kQ + i];
            }
            const MacroState U = project_raw(&s.f.v[c * kQ], &s.g.v[c * kQ], d.gas);
            const MaxwellianMoments m = maxwellian_higher_moments(U, d.gas);
            sxx += (Rxx - m.R[0][0]) * (Rxx - m.R[0][0]);
            syy += (Ryy - m.R[1][1]) * (Ryy - m.R[1][1]);
        }
        err_xx.push_back(std::sqrt(sxx));
        err_yy.push_back(std::sqrt(syy));
    }
}

MetricReport evaluate(const Dataset& pred, const Dataset& ref,
                      const std::vector<long>& times) {
    MetricReport rep;
    rep.times = times;
    for (const char* name : {"rho", "ux", "uy", "T", "p"}) rep.rel_l2[name] = {};
    double mmin = 1e300, mmax = -1e300;
    for (long t : times) {
        if (t >= (long)pred.snaps.size() || t >= (long)ref.snaps.size())
            throw ConfigError("snapshot time beyond trajectory length");
        const Fields fp = fields_of(pred.snaps[t], pred.grid, pred.gas);
        const Fields fr = fields_of(ref.snaps[t], ref.grid, ref.gas);
        rep.rel_l2["rho"].push_back(rel_l2(fp.rho, fr.rho));
        rep.rel_l2["ux"].push_back(rel_l2(fp.ux, fr.ux));
        rep.rel_l2["uy"].push_back(rel_l2(fp.uy, fr.uy));
        rep.rel_l2["T"].push_back(rel_l2(fp.T, fr.T));
        rep.rel_l2["p"].push_back(rel_l2(fp.p, fr.p));
        for (size_t k = 0; k < fp.T.size(); ++k) {
            const double ma = std::sqrt(fp.ux[k] * fp.ux[k] + fp.uy[k] * fp.uy[k]) /
                              std::sqrt(pred.gas.gamma * pred.gas.R * fp.T[k]);
            mmin = std::min(mmin, ma);
            mmax = std::max(mmax, ma);
        }
    }
    rep.mach_min = mmin;
    rep.mach_max = mmax;
    r_moment_errors(pred, rep.r_err_xx, rep.r_err_yy);
    return rep;
}

namespace {

std::string step_name(const char* prefix, long t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%06ld.ndeq", prefix, t);
    return buf;
}

const char* edge_name(EdgeKind k) {
    switch (k) {
    case EdgeKind::Periodic: return "periodic";
    case EdgeKind::Dirichlet: return "dirichlet";
    case EdgeKind::Neumann1: return "neumann1";
    case EdgeKind::FreeStream: return "free-stream";
    }
    return "?";
}

EdgeKind edge_from(const std::string& s) {
    if (s == "periodic") return EdgeKind::Periodic;
    if (s == "dirichlet") return EdgeKind::Dirichlet;
    if (s == "neumann1") return EdgeKind::Neumann1;
    if (s == "free-stream") return EdgeKind::FreeStream;
    throw ConfigError("unknown edge kind: " + s);
}

} // namespace

void save_dataset(const std::string& dir, const CaseSpec& c, const Dataset& d,
                  int stride, const std::string& closure_name, int seed) {
    fs::create_directories(dir);
    std::vector<std::pair<std::string, std::string>> kv;
    auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    kv.emplace_back("case", c.name);
    kv.emplace_back("closure", closure_name);
    kv.emplace_back("seed", std::to_string(seed));
    kv.emplace_back("nx", std::to_string(d.grid.nx));
    kv.emplace_back("ny", std::to_string(d.grid.ny));
    kv.emplace_back("snapshots", std::to_string(d.snaps.size()));
    kv.emplace_back("stride", std::to_string(stride));
    kv.emplace_back("gamma", num(d.gas.gamma));
    kv.emplace_back("Pr", num(d.gas.Pr));
    kv.emplace_back("R", num(d.gas.R));
    kv.emplace_back("mu", num(d.gas.mu));
    kv.emplace_back("ushift_x", num(d.gas.ushift_x));
    kv.emplace_back("ushift_y", num(d.gas.ushift_y));
    kv.emplace_back("edge_xmin", edge_name(d.grid.xmin));
    kv.emplace_back("edge_xmax", edge_name(d.grid.xmax));
    kv.emplace_back("edge_ymin", edge_name(d.grid.ymin));
    kv.emplace_back("edge_ymax", edge_name(d.grid.ymax));
    if (c.cyl_r > 0) {
        kv.emplace_back("cylinder_cx", num(c.cyl_cx));
        kv.emplace_back("cylinder_cy", num(c.cyl_cy));
        kv.emplace_back("cylinder_r", num(c.cyl_r));
    }
    if (d.inlet) {
        kv.emplace_back("inlet_rho", num(d.inlet->rho));
        kv.emplace_back("inlet_ux", num(d.inlet->ux));
        kv.emplace_back("inlet_uy", num(d.inlet->uy));
        kv.emplace_back("inlet_T", num(d.inlet->T));
    }
    write_kv(dir + "/manifest.txt", kv);

    std::ofstream obs(dir + "/observables.csv");
    obs.precision(17);
    obs << "t,mass,energy,min_T,max_T,max_mach\n";
    for (size_t t = 0; t < d.snaps.size(); t += stride) {
        const DataSnapshot& s = d.snaps[t];
        save_snapshot(dir + "/" + step_name("f", (long)t), s.f);
        save_snapshot(dir + "/" + step_name("g", (long)t), s.g);
        save_snapshot(dir + "/" + step_name("geq", (long)t), s.geq);
        double mass = 0, energy = 0, tmin = 1e300, tmax = -1e300, mach = 0;
        for (size_t cidx = 0; cidx < d.grid.cells(); ++cidx) {
            if (d.grid.has_solid() && d.grid.solid[cidx]) continue;
            const MacroState U = project(&s.f.v[cidx * kQ], &s.g.v[cidx * kQ], d.gas);
            mass += U.rho;
            energy += U.rho * U.E;
            tmin = std::min(tmin, U.T);
            tmax = std::max(tmax, U.T);
            mach = std::max(mach, local_mach(U, d.gas));
        }
        obs << t << ',' << mass << ',' << energy << ',' << tmin << ',' << tmax << ','
            << mach << '\n';
    }
}

Dataset load_dataset(const std::string& dir) {
    const auto kv = read_kv(dir + "/manifest.txt");
    auto need = [&](const std::string& k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw ConfigError("manifest missing key: " + k);
        return it->second;
    };
    Dataset d;
    const int nx = std::stoi(need("nx")), ny = std::stoi(need("ny"));
    d.grid = Grid(nx, ny, edge_from(need("edge_xmin")), edge_from(need("edge_xmax")),
                  edge_from(need("edge_ymin")), edge_from(need("edge_ymax")));
    d.gas.gamma = std::stod(need("gamma"));
    d.gas.Pr = std::stod(need("Pr"));
    d.gas.R = std::stod(need("R"));
    d.gas.mu = std::stod(need("mu"));
    d.gas.ushift_x = std::stod(need("ushift_x"));
    d.gas.ushift_y = std::stod(need("ushift_y"));
    if (kv.count("cylinder_r")) {
        const double cx = std::stod(need("cylinder_cx"));
        const double cy = std::stod(need("cylinder_cy"));
        const double r = std::stod(need("cylinder_r"));
        std::vector<uint8_t> mask(d.grid.cells(), 0);
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x)
                if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                    mask[d.grid.cell(x, y)] = 1;
        d.grid.set_solid(std::move(mask));
    }
    if (kv.count("inlet_rho")) {
        MacroState in;
        in.rho = std::stod(need("inlet_rho"));
        in.ux = std::stod(need("inlet_ux"));
        in.uy = std::stod(need("inlet_uy"));
        in.T = std::stod(need("inlet_T"));
        in.E = d.gas.Cv() * in.T + 0.5 * (in.ux * in.ux + in.uy * in.uy);
        d.inlet = in;
    }
    const long n = std::stol(need("snapshots"));
    const int stride = kv.count("stride") ? std::stoi(kv.at("stride")) : 1;
    for (long t = 0; t < n; t += stride) {
        DataSnapshot s{load_snapshot(dir + "/" + step_name("f", t)),
                       load_snapshot(dir + "/" + step_name("g", t)),
                       load_snapshot(dir + "/" + step_name("geq", t))};
        d.snaps.push_back(std::move(s));
    }
    return d;
}

} // namespace ndeq
