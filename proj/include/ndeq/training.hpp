#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ndeq/tape.hpp"

namespace ndeq {

struct TrainConfig {
    int n_r = 25;             // unroll length
    double alpha = 0.0;       // population-vs-equilibrium loss weight in [0,1]
    double alpha2 = 0.0;      // TVD weight (0 disables)
    bool alpha2_ramp = true;  // linear ramp of alpha2 over epochs
    int tvd_component = 3;    // observable column for TV profiles (3 = T)

    double lr_pretrain = 1e-3;
    int lr_halve_every = 100;  // pretraining schedule
    int pretrain_epochs = 500;
    int pretrain_batch = 8192;
    int pretrain_cell_stride = 1;  // subsample cells for the static stage

    double lr_main = 1e-4;
    int main_epochs = 20;
    int window_stride = 1;  // window starts advance by this many steps

    double weight_decay = 0.0;
    int seed = 0;
    bool window_init_lift = false;  // false: load dataset populations

    int net_width = 32;
    int net_depth = 4;

    // Replace the learned closure by the dataset's recorded equilibria
    // (testing hook: the window then has no parameter dependence).
    bool oracle_closure = false;

    int checkpoint_every = 0;       // epochs; 0 disables
    std::string checkpoint_prefix;  // path prefix for periodic checkpoints
    std::string log_path;           // training log CSV, empty disables
};

struct DataSnapshot {
    PopulationGrid f, g, geq;
};

// Temporally contiguous solver trajectory with the per-step equilibrium.
struct Dataset {
    Grid grid;
    GasParams gas;
    std::optional<MacroState> inlet;  // sim-frame Dirichlet state, if any
    std::vector<DataSnapshot> snaps;

    size_t steps() const { return snaps.empty() ? 0 : snaps.size() - 1; }
};

// Deterministic AdamW (bias-corrected moments, decoupled weight decay).
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
          double weight_decay = 0.0)
        : b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {}

    void step(MlpParams& params, const MlpGrads& grads, double lr);
    long steps_taken() const { return t_; }

private:
    double b1_, b2_, eps_, wd_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

// Generic flat-vector AdamW step used by tests and tools.
void adamw_step(std::vector<double>& x, const std::vector<double>& g,
                std::vector<double>& m, std::vector<double>& v, long t, double lr,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                double weight_decay = 0.0);

// TV(w) = sum_j |w_{j+1} - w_j|
double total_variation(const std::vector<double>& w);
// sum_r relu(TV(prof_r) - TV(prof_{r-1}))
double tvd_penalty(const std::vector<std::vector<double>>& profiles);

struct PretrainResult {
    std::vector<double> epoch_loss;
    double final_loss = 0.0;
};

// Stage one: supervised regression of the network onto (U, g_eq) pairs drawn
// from snapshots [0, t_train] of the dataset. Returns the loss history;
// params are updated in place.
PretrainResult pretrain(const Dataset& data, long t_train, MlpParams& params,
                        const TrainConfig& cfg);

// Explicit-pair variant (synthetic targets, teacher-student tests).
PretrainResult pretrain_pairs(const std::vector<std::array<double, 4>>& inputs,
                              const std::vector<Vec9>& targets, MlpParams& params,
                              const TrainConfig& cfg);

struct WindowStats {
    double loss = 0.0, f_term = 0.0, geq_term = 0.0, tvd = 0.0;
    bool diverged = false;
};

// Forward+backward of one unrolled window [t0, t0+len] against the dataset.
// Gradients accumulate into `grads` (call grads.zero() first for a fresh
// step). Window divergence is reported, not thrown.
WindowStats run_window(const MlpParams& params, MlpGrads& grads, const Dataset& data,
                       long t0, int len, const TrainConfig& cfg, double alpha2_eff,
                       const StreamRouter& router,
                       const std::vector<size_t>& dirichlet_g_slots,
                       bool do_backward);

struct TrainResult {
    std::vector<double> epoch_loss;
    long skipped_windows = 0;
};

// Stage two: unrolled trajectory training through the solver (one AdamW
// update per window).
TrainResult train_unrolled(const Dataset& data, long t_train, MlpParams& params,
                           const TrainConfig& cfg);

// Training router: Dirichlet g slots get zero constants; the theta-dependent
// inlet equilibrium is added through the tape. Returns the slot list.
std::pair<StreamRouter, std::vector<size_t>> make_training_router(const Dataset& data);

} // namespace ndeq
