#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ndeq/lattice.hpp"
#include "ndeq/moments.hpp"

namespace ndeq {

// One affine layer, weights row-major (out x in).
struct MlpLayer {
    int in = 0, out = 0;
    std::vector<double> W;  // out*in
    std::vector<double> b;  // out
};

// The learned equilibrium: coefficients lambda(U) from a 4-input MLP and
// basis phi(c) from a 2-input MLP, combined by inner product and exponential
// renormalization. GELU on hidden layers, linear output of width p (shared).
struct MlpParams {
    std::vector<MlpLayer> lambda_net;  // in=4 -> width x3 hidden -> p
    std::vector<MlpLayer> phi_net;     // in=2 -> width x3 hidden -> p

    int p() const { return lambda_net.empty() ? 0 : lambda_net.back().out; }
    size_t count() const;
    // Flat views over every parameter (lambda net first, per layer W then b).
    void for_each(const std::function<void(double&)>& fn);
    double* flat_at(size_t idx);
};

// He-style fan-in uniform init, deterministic in the seed.
MlpParams init_params(int width, int depth, int seed);

// exact GELU x * Phi(x), erf form
double gelu(double x);
double gelu_grad(double x);

// Exponent guard: |s| beyond this means a diverged network, reported as an
// error rather than clamped.
inline constexpr double kExpGuard = 700.0;

// Evaluate the basis matrix phi[i][k] = phi_k(c_i) for the 9 lattice
// velocities. Rows i, columns k (p of them).
void eval_phi(const MlpParams& params, std::vector<double>& phi);

// Plain (tape-free) forward: out_i = exp(sum_k lambda_k(U) phi_k(c_i)).
// `phi` must come from eval_phi on the same params. Throws InvalidStateError
// on exponent overflow.
void neurde_forward(const MlpParams& params, const std::vector<double>& phi,
                    const MacroState& U, Vec9& out);

// Checkpoint file ("NDEW1"): magic, u32 lambda layer count, u32 phi layer
// count, per-layer u32 in/out dims (lambda net first), then per layer the
// little-endian f64 weights followed by biases, same order.
void save_checkpoint(const std::string& path, const MlpParams& params);
MlpParams load_checkpoint(const std::string& path);

} // namespace ndeq
