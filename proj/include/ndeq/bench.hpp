#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ndeq/solver.hpp"
#include "ndeq/training.hpp"

namespace ndeq {

// Benchmark definition. Initial condition and inlet are given in the
// physical frame; the solver runs in the shifted frame (u_sim = u - u_shift)
// and observables are reported back in the physical frame.
struct CaseSpec {
    std::string name;
    int nx = 0, ny = 0;
    GasParams gas;
    Grid grid;
    std::optional<MacroState> inlet;  // physical frame
    long t_train = 500, t_eval = 1000;
    std::function<MacroState(int x, int y)> init;  // physical frame
    double cyl_cx = -1, cyl_cy = -1, cyl_r = 0;    // cylinder metadata (if any)

    std::vector<MacroState> initial_field_sim() const;
    std::optional<MacroState> inlet_sim() const;
    SolverState make_state(ClosureSpec closure) const;
};

// Sod shock tube (case 1 subsonic, case 2 transonic). nx = 3000/scale + 1
// keeps the odd cell count; the y extent stays 5 with periodic rows.
// temperature_scale rescales case 2 pressure so lattice temperatures stay in
// the representable window; the printed density ratios are preserved.
CaseSpec make_sod(int case_id, int scale, double temperature_scale = 1.0 / 3.0);

// Supersonic cylinder: domain (25r x 15r) at scale 1 = 500 x 300 cells,
// radius 20, center (166, 149); Re = 300, Ma_inf = 1.8, T_inf = 0.2.
CaseSpec make_cylinder(int scale);

// Runs the Newton-closure solver for `steps` steps, recording {f, g, g_eq}
// per step plus the final state. The result is the training dataset.
Dataset generate_reference(const CaseSpec& c, long steps);

// Autoregressive rollout from the dataset state at t0: initializes by
// equilibrium lifting of U(t0) with the given closure, then runs to t1,
// recording each step (plus the final state).
Dataset rollout(const CaseSpec& c, const Dataset& ref, long t0, long t1,
                ClosureSpec closure);

struct MetricReport {
    std::vector<long> times;
    // observable name -> relative L2 error per requested time
    std::map<std::string, std::vector<double>> rel_l2;
    long divergence_step = -1;
    // || R_aa^eq - R_aa^MB ||_2 per recorded step of the prediction
    std::vector<double> r_err_xx, r_err_yy;
    double mach_min = 0.0, mach_max = 0.0;
};

// Per-observable relative L2 errors at the requested snapshot times, plus
// the fourth-order moment error diagnostic of the prediction's own g_eq.
MetricReport evaluate(const Dataset& pred, const Dataset& ref,
                      const std::vector<long>& times);

// || sum_i c_a c_a geq_i  -  R_aa^MB(U) ||_2 over cells, per snapshot.
void r_moment_errors(const Dataset& d, std::vector<double>& err_xx,
                     std::vector<double>& err_yy);

// Trajectory directory: manifest.txt, observables.csv and per-step
// snapshots f_######.ndeq / g_######.ndeq / geq_######.ndeq.
void save_dataset(const std::string& dir, const CaseSpec& c, const Dataset& d,
                  int stride = 1, const std::string& closure_name = "newton",
                  int seed = 0);
Dataset load_dataset(const std::string& dir);

} // namespace ndeq
