#pragma once

#include <memory>
#include <span>
#include <vector>

#include "ndeq/neurde.hpp"
#include "ndeq/solver.hpp"

namespace ndeq {

// Gradient accumulator mirroring MlpParams layer shapes.
struct MlpGrads {
    std::vector<std::vector<double>> lamW, lamB, phiW, phiB;

    void init(const MlpParams& p);
    void zero();
    double norm2() const;
    size_t count() const;
    double* flat_at(size_t idx);
};

// Append-only reverse-mode record over flat f64 buffers. Primitive ops cover
// the two MLPs, the inner-product/exponential equilibrium, and the solver
// step pieces (moment projection, analytic equilibrium, collision,
// stream+boundaries). backward() replays the record in reverse, accumulating
// parameter gradients into an MlpGrads sink; data leaves receive no
// gradient. All accumulation runs in a fixed sequential order.
class Tape {
public:
    using BufId = int;

    Tape(const MlpParams& params, MlpGrads& grads, const GasParams& gas);

    // Buffers
    BufId alloc(size_t n);
    BufId input(std::span<const double> data);  // leaf
    std::span<double> value(BufId);
    std::span<const double> value(BufId) const;
    std::span<double> adjoint(BufId);
    size_t size() const { return ops_.size(); }

    // Per-cell mask: entries with mask[cell]!=0 (solid cells) are skipped and
    // their rows stay zero. nullptr means every cell is active.
    using Mask = const uint8_t*;

    // Network ops
    BufId phi_net();                      // -> (9 x p) basis table
    BufId lambda_net(BufId U, int n);     // (n x 4) -> (n x p)
    BufId geq_exp(BufId lam, BufId phi, int n, Mask mask = nullptr);

    // Solver ops (n = grid cells)
    BufId project(BufId f, BufId g, int n, Mask mask = nullptr);  // -> (n x 4)
    BufId feq(BufId U, int n, Mask mask = nullptr);               // -> (n x 9)
    // -> pair (f_coll, g_coll)
    std::pair<BufId, BufId> collide(BufId f, BufId g, BufId feq, BufId geq,
                                    BufId U, int n, Mask mask = nullptr);
    BufId stream(BufId in, Species s, const StreamRouter& router, int n);
    // Add a (1 x 9) tape value into fixed slots of a streamed buffer
    // (theta-dependent Dirichlet energy equilibrium).
    void add_to_slots(BufId target, BufId values9, const std::vector<size_t>& slots);

    // Losses (accumulated into the tape's scalar loss). per_row gives the
    // number of buffer entries per cell for masking (9 for populations).
    void mse(BufId pred, std::span<const double> target, double weight,
             Mask mask = nullptr, int per_row = kQ);
    // x-profile of one U component, averaged over active rows: -> (nx)
    BufId profile(BufId U, int nx, int ny, int component, Mask mask = nullptr);
    // sum_r relu(TV(prof_r) - TV(prof_{r-1})) * weight
    void tv_penalty(const std::vector<BufId>& profiles, double weight);

    double loss() const { return loss_; }
    double loss_term_mse(int which) const { return mse_terms_[which]; }  // 0=f,1=geq
    void add_mse_term(int which, double v) { mse_terms_[which] += v; }
    double tvd_term() const { return tvd_term_; }

    // Reverse replay; seeds dLoss = 1.
    void backward();

    const MlpParams& params() const { return params_; }
    const GasParams& gas() const { return gas_; }

    struct Op {
        virtual ~Op() = default;
        virtual void backward(Tape& t) = 0;
    };

private:
    friend struct TapeOps;
    const MlpParams& params_;
    MlpGrads& grads_;
    GasParams gas_;
    std::vector<std::vector<double>> vals_, adjs_;
    std::vector<std::unique_ptr<Op>> ops_;
    double loss_ = 0.0;
    double mse_terms_[2] = {0.0, 0.0};
    double tvd_term_ = 0.0;
};

} // namespace ndeq
