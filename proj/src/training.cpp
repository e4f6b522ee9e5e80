#include "ndeq/training.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "ndeq/closures.hpp"
#include "ndeq/errors.hpp"

namespace ndeq {

namespace {

// splitmix64, portable deterministic RNG for shuffles.
struct Rng {
    std::uint64_t state;
    explicit Rng(std::uint64_t seed) : state(seed * 0x2545f4914f6cdd1dull + 1) {}
    std::uint64_t next() {
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    size_t below(size_t n) { return (size_t)(next() % n); }
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

void zip_params(MlpParams& p, const MlpGrads& g,
                const std::function<void(double&, double)>& fn) {
    auto walk = [&](std::vector<MlpLayer>& net, const std::vector<std::vector<double>>& W,
                    const std::vector<std::vector<double>>& B) {
        for (size_t l = 0; l < net.size(); ++l) {
            for (size_t k = 0; k < net[l].W.size(); ++k) fn(net[l].W[k], W[l][k]);
            for (size_t k = 0; k < net[l].b.size(); ++k) fn(net[l].b[k], B[l][k]);
        }
    };
    walk(p.lambda_net, g.lamW, g.lamB);
    walk(p.phi_net, g.phiW, g.phiB);
}

} // namespace

void adamw_step(std::vector<double>& x, const std::vector<double>& g,
                std::vector<double>& m, std::vector<double>& v, long t, double lr,
                double beta1, double beta2, double eps, double weight_decay) {
    const double bc1 = 1.0 - std::pow(beta1, (double)t);
    const double bc2 = 1.0 - std::pow(beta2, (double)t);
    for (size_t k = 0; k < x.size(); ++k) {
        m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
        v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        x[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * x[k]);
    }
}

void AdamW::step(MlpParams& params, const MlpGrads& grads, double lr) {
    const size_t n = grads.count();
    if (m_.size() != n) {
        m_.assign(n, 0.0);
        v_.assign(n, 0.0);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, (double)t_);
    const double bc2 = 1.0 - std::pow(b2_, (double)t_);
    size_t k = 0;
    zip_params(params, grads, [&](double& x, double g) {
        m_[k] = b1_ * m_[k] + (1.0 - b1_) * g;
        v_[k] = b2_ * v_[k] + (1.0 - b2_) * g * g;
        const double mhat = m_[k] / bc1;
        const double vhat = v_[k] / bc2;
        x -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * x);
        ++k;
    });
}

double total_variation(const std::vector<double>& w) {
    double tv = 0.0;
    for (size_t j = 0; j + 1 < w.size(); ++j) tv += std::abs(w[j + 1] - w[j]);
    return tv;
}

double tvd_penalty(const std::vector<std::vector<double>>& profiles) {
    double pen = 0.0;
    for (size_t r = 1; r < profiles.size(); ++r)
        pen += std::max(0.0, total_variation(profiles[r]) - total_variation(profiles[r - 1]));
    return pen;
}

namespace {

PretrainResult pretrain_impl(const std::vector<std::array<double, 4>>& inputs,
                             const std::vector<double>& targets,  // n x 9
                             MlpParams& params, const TrainConfig& cfg) {
    const size_t n = inputs.size();
    MlpGrads grads;
    grads.init(params);
    AdamW opt(0.9, 0.999, 1e-8, cfg.weight_decay);
    Rng rng((std::uint64_t)cfg.seed ^ 0x7061697273ull);
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    GasParams dummy;  // pretraining touches only network ops
    PretrainResult res;
    const int batch = std::max(1, cfg.pretrain_batch);
    std::vector<double> bin, btg;
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const double lr = cfg.lr_pretrain *
                          std::pow(0.5, (double)(epoch / std::max(1, cfg.lr_halve_every)));
        shuffle(order, rng);
        double accum = 0.0;
        size_t count = 0;
        for (size_t start = 0; start < n; start += batch) {
            const size_t bn = std::min((size_t)batch, n - start);
            bin.resize(bn * 4);
            btg.resize(bn * kQ);
            for (size_t r = 0; r < bn; ++r) {
                const auto& u = inputs[order[start + r]];
                std::copy(u.begin(), u.end(), &bin[r * 4]);
                std::copy(&targets[order[start + r] * kQ],
                          &targets[order[start + r] * kQ] + kQ, &btg[r * kQ]);
            }
            grads.zero();
            Tape tape(params, grads, dummy);
            const Tape::BufId phi = tape.phi_net();
            const Tape::BufId U = tape.input(bin);
            const Tape::BufId lam = tape.lambda_net(U, (int)bn);
            const Tape::BufId geq = tape.geq_exp(lam, phi, (int)bn);
            tape.mse(geq, btg, 1.0);
            tape.backward();
            opt.step(params, grads, lr);
            accum += tape.loss() * (double)bn;
            count += bn;
        }
        res.epoch_loss.push_back(accum / (double)count);
    }
    res.final_loss = res.epoch_loss.empty() ? 0.0 : res.epoch_loss.back();
    return res;
}

} // namespace

PretrainResult pretrain_pairs(const std::vector<std::array<double, 4>>& inputs,
                              const std::vector<Vec9>& targets, MlpParams& params,
                              const TrainConfig& cfg) {
    std::vector<double> flat(targets.size() * kQ);
    for (size_t r = 0; r < targets.size(); ++r)
        std::copy(targets[r].begin(), targets[r].end(), &flat[r * kQ]);
    return pretrain_impl(inputs, flat, params, cfg);
}

PretrainResult pretrain(const Dataset& data, long t_train, MlpParams& params,
                        const TrainConfig& cfg) {
    std::vector<std::array<double, 4>> inputs;
    std::vector<double> targets;
    const size_t cells = data.grid.cells();
    const int stride = std::max(1, cfg.pretrain_cell_stride);
    for (long t = 0; t <= t_train && t < (long)data.snaps.size(); ++t) {
        const DataSnapshot& s = data.snaps[t];
        for (size_t c = 0; c < cells; c += stride) {
            if (data.grid.has_solid() && data.grid.solid[c]) continue;
            const MacroState U =
                project(&s.f.v[c * kQ], &s.g.v[c * kQ], data.gas);
            inputs.push_back({U.rho, U.ux, U.uy, U.T});
            for (int i = 0; i < kQ; ++i) targets.push_back(s.geq.v[c * kQ + i]);
        }
    }
    if (inputs.empty()) throw ConfigError("empty pretraining dataset");
    return pretrain_impl(inputs, targets, params, cfg);
}

std::pair<StreamRouter, std::vector<size_t>> make_training_router(const Dataset& data) {
    const Grid& grid = data.grid;
    const bool dirichlet =
        grid.xmin == EdgeKind::Dirichlet || grid.xmax == EdgeKind::Dirichlet ||
        grid.ymin == EdgeKind::Dirichlet || grid.ymax == EdgeKind::Dirichlet;
    if (!dirichlet) return {StreamRouter(grid, nullptr, nullptr), {}};
    if (!data.inlet) throw ConfigError("Dirichlet edges but no inlet state in dataset");
    Vec9 feq_in, zeros{};
    feq_extended_unchecked(*data.inlet, feq_in);
    StreamRouter router(grid, feq_in.data(), zeros.data());
    std::vector<size_t> slots;
    auto edge_cells = [&](EdgeKind kind, auto&& fn) {
        if (grid.xmin == kind)
            for (int y = 0; y < grid.ny; ++y) fn(0, y);
        if (grid.xmax == kind)
            for (int y = 0; y < grid.ny; ++y) fn(grid.nx - 1, y);
        if (grid.ymin == kind)
            for (int x = 1; x + 1 < grid.nx; ++x) fn(x, 0);
        if (grid.ymax == kind)
            for (int x = 1; x + 1 < grid.nx; ++x) fn(x, grid.ny - 1);
    };
    edge_cells(EdgeKind::Dirichlet, [&](int x, int y) {
        for (int i = 0; i < kQ; ++i) slots.push_back(grid.cell(x, y) * kQ + i);
    });
    return {std::move(router), std::move(slots)};
}

WindowStats run_window(const MlpParams& params, MlpGrads& grads, const Dataset& data,
                       long t0, int len, const TrainConfig& cfg, double alpha2_eff,
                       const StreamRouter& router,
                       const std::vector<size_t>& dirichlet_g_slots,
                       bool do_backward) {
    WindowStats stats;
    const int n = (int)data.grid.cells();
    const int nx = data.grid.nx, ny = data.grid.ny;
    const Tape::Mask mask = data.grid.has_solid() ? data.grid.solid.data() : nullptr;
    try {
        Tape tape(params, grads, data.gas);
        const Tape::BufId phi = tape.phi_net();

        Tape::BufId f, g;
        if (cfg.window_init_lift) {
            // Equilibrium lifting from the projected dataset state.
            std::vector<double> U0(n * 4), feq0((size_t)n * kQ);
            for (int c = 0; c < n; ++c) {
                if (mask && mask[c]) continue;
                const MacroState s = project(&data.snaps[t0].f.v[(size_t)c * kQ],
                                             &data.snaps[t0].g.v[(size_t)c * kQ], data.gas);
                U0[(size_t)c * 4] = s.rho;
                U0[(size_t)c * 4 + 1] = s.ux;
                U0[(size_t)c * 4 + 2] = s.uy;
                U0[(size_t)c * 4 + 3] = s.T;
                Vec9 f9;
                feq_extended_unchecked(s, f9);
                std::copy(f9.begin(), f9.end(), &feq0[(size_t)c * kQ]);
            }
            f = tape.input(feq0);
            const Tape::BufId Ub = tape.input(U0);
            const Tape::BufId lam0 = tape.lambda_net(Ub, n);
            g = tape.geq_exp(lam0, phi, n, mask);
        } else {
            f = tape.input(data.snaps[t0].f.v);
            g = tape.input(data.snaps[t0].g.v);
        }

        std::vector<Tape::BufId> profiles;
        const bool tvd = alpha2_eff > 0.0;
        const double wf = cfg.alpha / len;
        const double wg = (1.0 - cfg.alpha) / len;

        for (int r = 0; r < len; ++r) {
            const Tape::BufId U = tape.project(f, g, n, mask);
            if (tvd && r == 0)
                profiles.push_back(tape.profile(U, nx, ny, cfg.tvd_component, mask));
            Tape::BufId geq;
            if (cfg.oracle_closure) {
                geq = tape.input(data.snaps[t0 + r].geq.v);
            } else {
                const Tape::BufId lam = tape.lambda_net(U, n);
                geq = tape.geq_exp(lam, phi, n, mask);
            }
            if (wg > 0.0) {
                const double before = tape.loss();
                tape.mse(geq, data.snaps[t0 + r].geq.v, wg, mask);
                tape.add_mse_term(1, tape.loss() - before);
            }
            const Tape::BufId fe = tape.feq(U, n, mask);
            auto [fc, gc] = tape.collide(f, g, fe, geq, U, n, mask);
            f = tape.stream(fc, Species::F, router, n);
            g = tape.stream(gc, Species::G, router, n);
            if (!dirichlet_g_slots.empty()) {
                // theta-dependent inlet energy equilibrium
                const double Uin[4] = {data.inlet->rho, data.inlet->ux, data.inlet->uy,
                                       data.inlet->T};
                const Tape::BufId Ub = tape.input(std::span<const double>(Uin, 4));
                const Tape::BufId lam_in = tape.lambda_net(Ub, 1);
                const Tape::BufId gin = tape.geq_exp(lam_in, phi, 1);
                tape.add_to_slots(g, gin, dirichlet_g_slots);
            }
            if (wf > 0.0) {
                const double before = tape.loss();
                tape.mse(f, data.snaps[t0 + r + 1].f.v, wf, mask);
                tape.add_mse_term(0, tape.loss() - before);
            }
            if (tvd) {
                const Tape::BufId Un = tape.project(f, g, n, mask);
                profiles.push_back(tape.profile(Un, nx, ny, cfg.tvd_component, mask));
            }
        }
        if (tvd) tape.tv_penalty(profiles, alpha2_eff);

        if (!std::isfinite(tape.loss())) {
            stats.diverged = true;
            return stats;
        }
        stats.loss = tape.loss();
        stats.f_term = tape.loss_term_mse(0);
        stats.geq_term = tape.loss_term_mse(1);
        stats.tvd = tape.tvd_term();
        if (do_backward) tape.backward();
    } catch (const InvalidStateError&) {
        stats.diverged = true;
    }
    return stats;
}

TrainResult train_unrolled(const Dataset& data, long t_train, MlpParams& params,
                           const TrainConfig& cfg) {
    if ((long)data.snaps.size() <= t_train)
        throw ConfigError("dataset shorter than requested training horizon");
    auto [router, slots] = make_training_router(data);
    MlpGrads grads;
    grads.init(params);
    AdamW opt(0.9, 0.999, 1e-8, cfg.weight_decay);
    TrainResult res;

    std::ofstream log;
    if (!cfg.log_path.empty()) {
        log.open(cfg.log_path);
        log << "epoch,window_t,loss,tvd_term,grad_norm,wall_ms\n";
        log.precision(12);
    }

    const int stride = std::max(1, cfg.window_stride);
    for (int epoch = 0; epoch < cfg.main_epochs; ++epoch) {
        const double a2 =
            cfg.alpha2_ramp && cfg.main_epochs > 1
                ? cfg.alpha2 * (double)epoch / (double)(cfg.main_epochs - 1)
                : cfg.alpha2;
        double accum = 0.0;
        long count = 0;
        for (long t0 = 0; t0 < t_train; t0 += stride) {
            const int len = (int)std::min<long>(cfg.n_r, t_train - t0);
            if (len < 1) break;
            const auto start = std::chrono::steady_clock::now();
            grads.zero();
            const WindowStats st =
                run_window(params, grads, data, t0, len, cfg, a2, router, slots, true);
            if (st.diverged) {
                ++res.skipped_windows;
                continue;
            }
            opt.step(params, grads, cfg.lr_main);
            accum += st.loss;
            ++count;
            if (log.is_open()) {
                const double ms = std::chrono::duration<double, std::milli>(
                                      std::chrono::steady_clock::now() - start)
                                      .count();
                log << epoch << ',' << t0 << ',' << st.loss << ',' << st.tvd << ','
                    << grads.norm2() << ',' << ms << '\n';
            }
        }
        res.epoch_loss.push_back(count > 0 ? accum / (double)count
                                           : std::numeric_limits<double>::quiet_NaN());
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_prefix.empty() &&
            (epoch + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(cfg.checkpoint_prefix + "_epoch" + std::to_string(epoch + 1) +
                                ".ndew",
                            params);
    }
    return res;
}

} // namespace ndeq
