#include "ndeq/tape.hpp"

#include <cmath>
#include <cstring>

#include "ndeq/errors.hpp"

namespace ndeq {

void MlpGrads::init(const MlpParams& p) {
    auto shape = [](const std::vector<MlpLayer>& net, std::vector<std::vector<double>>& W,
                    std::vector<std::vector<double>>& B) {
        W.clear();
        B.clear();
        for (const auto& l : net) {
            W.emplace_back(l.W.size(), 0.0);
            B.emplace_back(l.b.size(), 0.0);
        }
    };
    shape(p.lambda_net, lamW, lamB);
    shape(p.phi_net, phiW, phiB);
}

void MlpGrads::zero() {
    for (auto* g : {&lamW, &lamB, &phiW, &phiB})
        for (auto& v : *g) std::fill(v.begin(), v.end(), 0.0);
}

double MlpGrads::norm2() const {
    double s = 0.0;
    for (const auto* g : {&lamW, &lamB, &phiW, &phiB})
        for (const auto& v : *g)
            for (double x : v) s += x * x;
    return std::sqrt(s);
}

size_t MlpGrads::count() const {
    size_t n = 0;
    for (const auto* g : {&lamW, &lamB, &phiW, &phiB})
        for (const auto& v : *g) n += v.size();
    return n;
}

double* MlpGrads::flat_at(size_t idx) {
    // Order must match MlpParams::flat_at: lambda net (W then b per layer),
    // then phi net.
    for (size_t l = 0; l < lamW.size(); ++l) {
        if (idx < lamW[l].size()) return &lamW[l][idx];
        idx -= lamW[l].size();
        if (idx < lamB[l].size()) return &lamB[l][idx];
        idx -= lamB[l].size();
    }
    for (size_t l = 0; l < phiW.size(); ++l) {
        if (idx < phiW[l].size()) return &phiW[l][idx];
        idx -= phiW[l].size();
        if (idx < phiB[l].size()) return &phiB[l][idx];
        idx -= phiB[l].size();
    }
    return nullptr;
}

Tape::Tape(const MlpParams& params, MlpGrads& grads, const GasParams& gas)
    : params_(params), grads_(grads), gas_(gas) {}

Tape::BufId Tape::alloc(size_t n) {
    vals_.emplace_back(n, 0.0);
    adjs_.emplace_back(n, 0.0);
    return (BufId)vals_.size() - 1;
}

Tape::BufId Tape::input(std::span<const double> data) {
    const BufId id = alloc(data.size());
    std::memcpy(vals_[id].data(), data.data(), data.size() * sizeof(double));
    return id;
}

std::span<double> Tape::value(BufId id) { return vals_[id]; }
std::span<const double> Tape::value(BufId id) const { return vals_[id]; }
std::span<double> Tape::adjoint(BufId id) { return adjs_[id]; }

namespace {

// Shared batched MLP forward saving pre-activations; backward accumulates
// into the gradient sink and optionally into the input adjoint.
struct MlpRecord {
    const std::vector<MlpLayer>* net;
    std::vector<std::vector<double>>* gW;
    std::vector<std::vector<double>>* gB;
    int n = 0;
    std::vector<std::vector<double>> z;  // pre-activations per layer (n x out)

    void forward(const double* in, double* out) {
        const auto& layers = *net;
        const int L = (int)layers.size();
        z.assign(L, {});
        std::vector<double> a(in, in + (size_t)n * layers[0].in), next;
        for (int l = 0; l < L; ++l) {
            const MlpLayer& ly = layers[l];
            z[l].assign((size_t)n * ly.out, 0.0);
            for (int r = 0; r < n; ++r) {
                const double* ar = &a[(size_t)r * ly.in];
                double* zr = &z[l][(size_t)r * ly.out];
                for (int o = 0; o < ly.out; ++o) {
                    double s = ly.b[o];
                    const double* w = &ly.W[(size_t)o * ly.in];
                    for (int c = 0; c < ly.in; ++c) s += w[c] * ar[c];
                    zr[o] = s;
                }
            }
            if (l + 1 < L) {
                next.assign(z[l].size(), 0.0);
                for (size_t k = 0; k < z[l].size(); ++k) next[k] = gelu(z[l][k]);
                a.swap(next);
            }
        }
        std::memcpy(out, z[L - 1].data(), z[L - 1].size() * sizeof(double));
    }

    // adj_out: (n x p); adj_in: may be null (constant inputs)
    void backward(const double* in, const double* adj_out, double* adj_in) {
        const auto& layers = *net;
        const int L = (int)layers.size();
        std::vector<double> delta(adj_out, adj_out + z[L - 1].size()), prev;
        for (int l = L - 1; l >= 0; --l) {
            const MlpLayer& ly = layers[l];
            // activations feeding this layer
            std::vector<double> a;
            const double* ain;
            if (l == 0) {
                ain = in;
            } else {
                a.resize(z[l - 1].size());
                for (size_t k = 0; k < a.size(); ++k) a[k] = gelu(z[l - 1][k]);
                ain = a.data();
            }
            auto& Wg = (*gW)[l];
            auto& Bg = (*gB)[l];
            for (int r = 0; r < n; ++r) {
                const double* dr = &delta[(size_t)r * ly.out];
                const double* ar = &ain[(size_t)r * ly.in];
                for (int o = 0; o < ly.out; ++o) {
                    Bg[o] += dr[o];
                    double* wg = &Wg[(size_t)o * ly.in];
                    for (int c = 0; c < ly.in; ++c) wg[c] += dr[o] * ar[c];
                }
            }
            if (l == 0) {
                if (adj_in) {
                    for (int r = 0; r < n; ++r) {
                        const double* dr = &delta[(size_t)r * ly.out];
                        double* xr = &adj_in[(size_t)r * ly.in];
                        for (int o = 0; o < ly.out; ++o) {
                            const double* w = &ly.W[(size_t)o * ly.in];
                            for (int c = 0; c < ly.in; ++c) xr[c] += dr[o] * w[c];
                        }
                    }
                }
                break;
            }
            prev.assign((size_t)n * ly.in, 0.0);
            for (int r = 0; r < n; ++r) {
                const double* dr = &delta[(size_t)r * ly.out];
                double* pr = &prev[(size_t)r * ly.in];
                for (int o = 0; o < ly.out; ++o) {
                    const double* w = &ly.W[(size_t)o * ly.in];
                    for (int c = 0; c < ly.in; ++c) pr[c] += dr[o] * w[c];
                }
            }
            for (size_t k = 0; k < prev.size(); ++k)
                prev[k] *= gelu_grad(z[l - 1][k]);
            delta.swap(prev);
        }
    }
};

inline double psi1d_val(int c, double u, double T) {
    const double u2 = u * u;
    if (c == 0) return 1.0 - T - u2;
    return 0.5 * (T + u2 + (c > 0 ? u : -u));
}
inline double psi1d_du(int c, double u) {
    if (c == 0) return -2.0 * u;
    return u + (c > 0 ? 0.5 : -0.5);
}
inline double psi1d_dT(int c) { return c == 0 ? -1.0 : 0.5; }

} // namespace

struct TapeOps {
    // ---- phi net --------------------------------------------------------
    struct PhiNetOp : Tape::Op {
        MlpRecord rec;
        std::vector<double> cin;  // 9 x 2 constant velocities
        Tape::BufId out;
        void backward(Tape& t) override {
            rec.backward(cin.data(), t.adjoint(out).data(), nullptr);
        }
    };

    // ---- lambda net ------------------------------------------------------
    struct LambdaNetOp : Tape::Op {
        MlpRecord rec;
        Tape::BufId in, out;
        void backward(Tape& t) override {
            rec.backward(t.value(in).data(), t.adjoint(out).data(),
                         t.adjoint(in).data());
        }
    };

    // ---- geq = exp(lam . phi) ---------------------------------------------
    struct GeqExpOp : Tape::Op {
        Tape::BufId lam, phi, out;
        int n = 0, p = 0;
        Tape::Mask mask = nullptr;
        void backward(Tape& t) override {
            const auto g = t.value(out);
            const auto gadj = t.adjoint(out);
            const auto lamv = t.value(lam);
            const auto phiv = t.value(phi);
            auto lamadj = t.adjoint(lam);
            auto phiadj = t.adjoint(phi);
            for (int r = 0; r < n; ++r) {
                if (mask && mask[r]) continue;
                for (int i = 0; i < kQ; ++i) {
                    const double sbar = gadj[(size_t)r * kQ + i] * g[(size_t)r * kQ + i];
                    if (sbar == 0.0) continue;
                    const double* ph = &phiv[(size_t)i * p];
                    const double* lm = &lamv[(size_t)r * p];
                    double* lb = &lamadj[(size_t)r * p];
                    double* pb = &phiadj[(size_t)i * p];
                    for (int k = 0; k < p; ++k) {
                        lb[k] += sbar * ph[k];
                        pb[k] += sbar * lm[k];
                    }
                }
            }
        }
    };

    // ---- moment projection -------------------------------------------------
    struct ProjectOp : Tape::Op {
        Tape::BufId f, g, U;
        int n = 0;
        double Cv = 1.0;
        Tape::Mask mask = nullptr;
        void backward(Tape& t) override {
            const auto Uv = t.value(U);
            const auto Ua = t.adjoint(U);
            auto fa = t.adjoint(f);
            auto ga = t.adjoint(g);
            for (int r = 0; r < n; ++r) {
                if (mask && mask[r]) continue;
                const double rho = Uv[(size_t)r * 4 + 0];
                const double ux = Uv[(size_t)r * 4 + 1];
                const double uy = Uv[(size_t)r * 4 + 2];
                const double T = Uv[(size_t)r * 4 + 3];
                const double E = Cv * T + 0.5 * (ux * ux + uy * uy);
                const double rb = Ua[(size_t)r * 4 + 0];
                const double xb = Ua[(size_t)r * 4 + 1];
                const double yb = Ua[(size_t)r * 4 + 2];
                const double Tb = Ua[(size_t)r * 4 + 3];
                const double u2 = ux * ux + uy * uy;
                for (int i = 0; i < kQ; ++i) {
                    const double cx = LatticeD2Q9::cx(i), cy = LatticeD2Q9::cy(i);
                    fa[(size_t)r * kQ + i] +=
                        rb + xb * (cx - ux) / rho + yb * (cy - uy) / rho +
                        Tb * (u2 - E - (ux * cx + uy * cy)) / (rho * Cv);
                    ga[(size_t)r * kQ + i] += Tb / (2.0 * rho * Cv);
                }
            }
        }
    };

    // ---- extended equilibrium ----------------------------------------------
    struct FeqOp : Tape::Op {
        Tape::BufId U, out;
        int n = 0;
        Tape::Mask mask = nullptr;
        void backward(Tape& t) override {
            const auto Uv = t.value(U);
            auto Ua = t.adjoint(U);
            const auto oa = t.adjoint(out);
            for (int r = 0; r < n; ++r) {
                if (mask && mask[r]) continue;
                const double rho = Uv[(size_t)r * 4 + 0];
                const double ux = Uv[(size_t)r * 4 + 1];
                const double uy = Uv[(size_t)r * 4 + 2];
                const double T = Uv[(size_t)r * 4 + 3];
                double rb = 0, xb = 0, yb = 0, Tb = 0;
                for (int i = 0; i < kQ; ++i) {
                    const double fb = oa[(size_t)r * kQ + i];
                    if (fb == 0.0) continue;
                    const int cx = LatticeD2Q9::cx(i), cy = LatticeD2Q9::cy(i);
                    const double Px = psi1d_val(cx, ux, T), Py = psi1d_val(cy, uy, T);
                    rb += fb * Px * Py;
                    xb += fb * rho * psi1d_du(cx, ux) * Py;
                    yb += fb * rho * Px * psi1d_du(cy, uy);
                    Tb += fb * rho * (psi1d_dT(cx) * Py + Px * psi1d_dT(cy));
                }
                Ua[(size_t)r * 4 + 0] += rb;
                Ua[(size_t)r * 4 + 1] += xb;
                Ua[(size_t)r * 4 + 2] += yb;
                Ua[(size_t)r * 4 + 3] += Tb;
            }
        }
    };

    // ---- collision -----------------------------------------------------------
    struct CollideOp : Tape::Op {
        Tape::BufId f, g, feq, geq, U, fo, go;
        int n = 0;
        double mu = 0, Pr = 1, tau_min = 0;
        Tape::Mask mask = nullptr;
        void backward(Tape& t) override {
            const auto fv = t.value(f), gv = t.value(g), feqv = t.value(feq),
                       geqv = t.value(geq), Uv = t.value(U);
            auto fb = t.adjoint(f);
            auto gb = t.adjoint(g);
            auto feqb = t.adjoint(feq);
            auto geqb = t.adjoint(geq);
            auto Ub = t.adjoint(U);
            const auto fob = t.adjoint(fo), gob = t.adjoint(go);
            for (int r = 0; r < n; ++r) {
                if (mask && mask[r]) continue;
                const size_t o9 = (size_t)r * kQ, o4 = (size_t)r * 4;
                const double rho = Uv[o4], ux = Uv[o4 + 1], uy = Uv[o4 + 2], T = Uv[o4 + 3];
                const double rt = rho * T;
                double tau1 = mu / rt + 0.5, tau2 = mu / (Pr * rt) + 0.5;
                const bool fl1 = tau_min > 0 && tau1 < tau_min;
                const bool fl2 = fl1;  // the floor rescales both times
                if (fl1) {
                    tau1 = tau_min;
                    tau2 = (tau_min - 0.5) / Pr + 0.5;
                }
                const double w1 = 1.0 / tau1, w2 = 1.0 / tau2, a2 = w2 - w1;

                // recompute forward intermediates
                Vec9 W, dW;
                weights_grad(T, W, dW);
                double P[2][2] = {}, Peq[2][2] = {};
                for (int i = 0; i < kQ; ++i) {
                    const double cx = LatticeD2Q9::cx(i), cy = LatticeD2Q9::cy(i);
                    P[0][0] += cx * cx * fv[o9 + i];
                    P[0][1] += cx * cy * fv[o9 + i];
                    P[1][1] += cy * cy * fv[o9 + i];
                    Peq[0][0] += cx * cx * feqv[o9 + i];
                    Peq[0][1] += cx * cy * feqv[o9 + i];
                    Peq[1][1] += cy * cy * feqv[o9 + i];
                }
                P[1][0] = P[0][1];
                Peq[1][0] = Peq[0][1];
                const double u[2] = {ux, uy};
                double D[2] = {0, 0};
                for (int a = 0; a < 2; ++a)
                    for (int b2 = 0; b2 < 2; ++b2) D[a] += u[b2] * (P[a][b2] - Peq[a][b2]);

                double w1bar = 0, w2bar = 0, Dbar[2] = {0, 0}, Tbar_local = 0;
                double ubar[2] = {0, 0};
                for (int i = 0; i < kQ; ++i) {
                    const double cx = LatticeD2Q9::cx(i), cy = LatticeD2Q9::cy(i);
                    const double cdotD = cx * D[0] + cy * D[1];
                    const double corr = (2.0 / T) * W[i] * cdotD;
                    const double fpb = fob[o9 + i], gpb = gob[o9 + i];
                    // f' = f + w1 (feq - f)
                    fb[o9 + i] += (1.0 - w1) * fpb;
                    feqb[o9 + i] += w1 * fpb;
                    w1bar += fpb * (feqv[o9 + i] - fv[o9 + i]);
                    // g' = g + w2 (geq - g) + a2 (geq - g) + a2 corr
                    gb[o9 + i] += (1.0 - w2 - a2) * gpb;
                    geqb[o9 + i] += (w2 + a2) * gpb;
                    const double dgeq = geqv[o9 + i] - gv[o9 + i];
                    w2bar += gpb * dgeq;          // w2 relaxation term
                    const double a2bar = gpb * (dgeq + corr);
                    w2bar += a2bar;
                    w1bar -= a2bar;
                    const double corrbar = a2 * gpb;
                    Dbar[0] += corrbar * (2.0 / T) * W[i] * cx;
                    Dbar[1] += corrbar * (2.0 / T) * W[i] * cy;
                    Tbar_local += corrbar * cdotD *
                                  (-(2.0 / (T * T)) * W[i] + (2.0 / T) * dW[i]);
                }
                // D_a = sum_b u_b (P - Peq)_{ab}
                double Mbar[2][2];
                for (int a = 0; a < 2; ++a)
                    for (int b2 = 0; b2 < 2; ++b2) {
                        ubar[b2] += Dbar[a] * (P[a][b2] - Peq[a][b2]);
                        Mbar[a][b2] = Dbar[a] * u[b2];
                    }
                for (int i = 0; i < kQ; ++i) {
                    const double cx = LatticeD2Q9::cx(i), cy = LatticeD2Q9::cy(i);
                    const double cc[2][2] = {{cx * cx, cx * cy}, {cx * cy, cy * cy}};
                    double acc = 0;
                    for (int a = 0; a < 2; ++a)
                        for (int b2 = 0; b2 < 2; ++b2) acc += cc[a][b2] * Mbar[a][b2];
                    fb[o9 + i] += acc;
                    feqb[o9 + i] -= acc;
                }
                // omega sensitivities (zero where the floor is active)
                double rhobar = 0;
                if (!fl1) {
                    rhobar += w1bar * w1 * w1 * mu / (rho * rho * T);
                    Tbar_local += w1bar * w1 * w1 * mu / (rho * T * T);
                }
                if (!fl2) {
                    rhobar += w2bar * w2 * w2 * mu / (Pr * rho * rho * T);
                    Tbar_local += w2bar * w2 * w2 * mu / (Pr * rho * T * T);
                }
                Ub[o4 + 0] += rhobar;
                Ub[o4 + 1] += ubar[0];
                Ub[o4 + 2] += ubar[1];
                Ub[o4 + 3] += Tbar_local;
            }
        }
    };

    // ---- stream + boundaries ---------------------------------------------------
    struct StreamOp : Tape::Op {
        Tape::BufId in, out;
        const StreamRouter* router;
        void backward(Tape& t) override {
            router->backward(t.adjoint(out).data(), t.adjoint(in).data());
        }
    };

    struct AddToSlotsOp : Tape::Op {
        Tape::BufId target, values;
        std::vector<size_t> slots;
        void backward(Tape& t) override {
            auto va = t.adjoint(values);
            const auto ta = t.adjoint(target);
            for (size_t k = 0; k < slots.size(); ++k) va[k % kQ] += ta[slots[k]];
        }
    };

    // ---- losses -------------------------------------------------------------
    struct MseOp : Tape::Op {
        Tape::BufId pred;
        std::span<const double> target;
        double scale = 0;  // weight / active count
        Tape::Mask mask = nullptr;
        int per_row = kQ;
        void backward(Tape& t) override {
            const auto pv = t.value(pred);
            auto pa = t.adjoint(pred);
            for (size_t k = 0; k < target.size(); ++k) {
                if (mask && mask[k / per_row]) continue;
                pa[k] += 2.0 * scale * (pv[k] - target[k]);
            }
        }
    };

    struct ProfileOp : Tape::Op {
        Tape::BufId U, out;
        int nx = 0, ny = 0, comp = 0;
        Tape::Mask mask = nullptr;
        std::vector<int> active;  // active rows per column
        void backward(Tape& t) override {
            auto Ua = t.adjoint(U);
            const auto oa = t.adjoint(out);
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x) {
                    if (mask && mask[(size_t)y * nx + x]) continue;
                    if (active[x] > 0)
                        Ua[((size_t)y * nx + x) * 4 + comp] += oa[x] / active[x];
                }
        }
    };

    struct TvPenaltyOp : Tape::Op {
        std::vector<Tape::BufId> profiles;
        double weight = 0;
        std::vector<double> tv;  // saved TV per profile
        void backward(Tape& t) override {
            for (size_t r = 1; r < profiles.size(); ++r) {
                if (!(tv[r] - tv[r - 1] > 0.0)) continue;
                for (size_t rr : {r, r - 1}) {
                    const double sgn_w = (rr == r) ? weight : -weight;
                    const auto pv = t.value(profiles[rr]);
                    auto pa = t.adjoint(profiles[rr]);
                    for (size_t x = 0; x + 1 < pv.size(); ++x) {
                        const double d = pv[x + 1] - pv[x];
                        const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                        pa[x + 1] += sgn_w * s;
                        pa[x] -= sgn_w * s;
                    }
                }
            }
        }
    };
};

Tape::BufId Tape::phi_net() {
    const int p = params_.p();
    auto op = std::make_unique<TapeOps::PhiNetOp>();
    op->rec.net = &params_.phi_net;
    op->rec.gW = &grads_.phiW;
    op->rec.gB = &grads_.phiB;
    op->rec.n = kQ;
    op->cin.resize(kQ * 2);
    for (int i = 0; i < kQ; ++i) {
        op->cin[i * 2 + 0] = LatticeD2Q9::cx(i);
        op->cin[i * 2 + 1] = LatticeD2Q9::cy(i);
    }
    const BufId out = alloc((size_t)kQ * p);
    op->rec.forward(op->cin.data(), vals_[out].data());
    op->out = out;
    ops_.push_back(std::move(op));
    return out;
}

Tape::BufId Tape::lambda_net(BufId U, int n) {
    const int p = params_.p();
    auto op = std::make_unique<TapeOps::LambdaNetOp>();
    op->rec.net = &params_.lambda_net;
    op->rec.gW = &grads_.lamW;
    op->rec.gB = &grads_.lamB;
    op->rec.n = n;
    const BufId out = alloc((size_t)n * p);
    op->rec.forward(vals_[U].data(), vals_[out].data());
    op->in = U;
    op->out = out;
    ops_.push_back(std::move(op));
    return out;
}

Tape::BufId Tape::geq_exp(BufId lam, BufId phi, int n, Mask mask) {
    const int p = params_.p();
    auto op = std::make_unique<TapeOps::GeqExpOp>();
    const BufId out = alloc((size_t)n * kQ);
    const auto lamv = value(lam);
    const auto phiv = value(phi);
    auto ov = value(out);
    for (int r = 0; r < n; ++r) {
        if (mask && mask[r]) continue;
        for (int i = 0; i < kQ; ++i) {
            double s = 0;
            const double* lm = &lamv[(size_t)r * p];
            const double* ph = &phiv[(size_t)i * p];
            for (int k = 0; k < p; ++k) s += lm[k] * ph[k];
            if (!(std::abs(s) <= kExpGuard))
                throw InvalidStateError("equilibrium exponent overflow (network diverged)");
            ov[(size_t)r * kQ + i] = std::exp(s);
        }
    }
    op->lam = lam;
    op->phi = phi;
    op->out = out;
    op->n = n;
    op->p = p;
    op->mask = mask;
    ops_.push_back(std::move(op));
    return out;
}

Tape::BufId Tape::project(BufId f, BufId g, int n, Mask mask) {
    auto op = std::make_unique<TapeOps::ProjectOp>();
    const BufId U = alloc((size_t)n * 4);
    const auto fv = value(f);
    const auto gv = value(g);
    auto Uv = value(U);
    const double Cv = gas_.Cv();
    for (int r = 0; r < n; ++r) {
        if (mask && mask[r]) continue;
        const MacroState s = ndeq::project(&fv[(size_t)r * kQ], &gv[(size_t)r * kQ], gas_);
        Uv[(size_t)r * 4 + 0] = s.rho;
        Uv[(size_t)r * 4 + 1] = s.ux;
        Uv[(size_t)r * 4 + 2] = s.uy;
        Uv[(size_t)r * 4 + 3] = s.T;
    }
    op->f = f;
    op->g = g;
    op->U = U;
    op->n = n;
    op->Cv = Cv;
    op->mask = mask;
    ops_.push_back(std::move(op));
    return U;
}

Tape::BufId Tape::feq(BufId U, int n, Mask mask) {
    auto op = std::make_unique<TapeOps::FeqOp>();
    const BufId out = alloc((size_t)n * kQ);
    const auto Uv = value(U);
    auto ov = value(out);
    for (int r = 0; r < n; ++r) {
        if (mask && mask[r]) continue;
        MacroState s;
        s.rho = Uv[(size_t)r * 4 + 0];
        s.ux = Uv[(size_t)r * 4 + 1];
        s.uy = Uv[(size_t)r * 4 + 2];
        s.T = Uv[(size_t)r * 4 + 3];
        Vec9 f9;
        feq_extended_unchecked(s, f9);
        std::memcpy(&ov[(size_t)r * kQ], f9.data(), sizeof(f9));
    }
    op->U = U;
    op->out = out;
    op->n = n;
    op->mask = mask;
    ops_.push_back(std::move(op));
    return out;
}

std::pair<Tape::BufId, Tape::BufId> Tape::collide(BufId f, BufId g, BufId feqb,
                                                  BufId geqb, BufId U, int n, Mask mask) {
    auto op = std::make_unique<TapeOps::CollideOp>();
    const BufId fo = alloc((size_t)n * kQ);
    const BufId go = alloc((size_t)n * kQ);
    const auto fv = value(f), gv = value(g), feqv = value(feqb), geqv = value(geqb),
               Uv = value(U);
    auto fov = value(fo);
    auto gov = value(go);
    for (int r = 0; r < n; ++r) {
        if (mask && mask[r]) continue;
        const size_t o9 = (size_t)r * kQ, o4 = (size_t)r * 4;
        MacroState s;
        s.rho = Uv[o4];
        s.ux = Uv[o4 + 1];
        s.uy = Uv[o4 + 2];
        s.T = Uv[o4 + 3];
        s.E = gas_.Cv() * s.T + 0.5 * (s.ux * s.ux + s.uy * s.uy);
        const RelaxationTimes tau = relaxation_times(s, gas_);
        const double w1 = 1.0 / tau.tau1, w2 = 1.0 / tau.tau2;
        Vec9 W;
        weights(s.T, W);
        const Mat2 P = second_moment(&fv[o9]);
        const Mat2 Peq = second_moment(&feqv[o9]);
        Vec9 geq9, gstar;
        std::memcpy(geq9.data(), &geqv[o9], sizeof(geq9));
        g_quasi(s, geq9, P, Peq, W, gstar);
        for (int i = 0; i < kQ; ++i) {
            fov[o9 + i] = fv[o9 + i] + w1 * (feqv[o9 + i] - fv[o9 + i]);
            gov[o9 + i] = gv[o9 + i] + w2 * (geqv[o9 + i] - gv[o9 + i]) +
                          (w2 - w1) * (gstar[i] - gv[o9 + i]);
        }
    }
    op->f = f;
    op->g = g;
    op->feq = feqb;
    op->geq = geqb;
    op->U = U;
    op->fo = fo;
    op->go = go;
    op->n = n;
    op->mu = gas_.mu;
    op->Pr = gas_.Pr;
    op->tau_min = gas_.tau_min;
    op->mask = mask;
    ops_.push_back(std::move(op));
    return {fo, go};
}

Tape::BufId Tape::stream(BufId in, Species s, const StreamRouter& router, int n) {
    auto op = std::make_unique<TapeOps::StreamOp>();
    const BufId out = alloc((size_t)n * kQ);
    router.apply(vals_[in].data(), vals_[out].data(), s);
    op->in = in;
    op->out = out;
    op->router = &router;
    ops_.push_back(std::move(op));
    return out;
}

void Tape::add_to_slots(BufId target, BufId values9, const std::vector<size_t>& slots) {
    auto op = std::make_unique<TapeOps::AddToSlotsOp>();
    auto tv = value(target);
    const auto vv = value(values9);
    for (size_t k = 0; k < slots.size(); ++k) tv[slots[k]] += vv[k % kQ];
    op->target = target;
    op->values = values9;
    op->slots = slots;
    ops_.push_back(std::move(op));
}

void Tape::mse(BufId pred, std::span<const double> target, double weight, Mask mask,
               int per_row) {
    auto op = std::make_unique<TapeOps::MseOp>();
    const auto pv = value(pred);
    double s = 0;
    size_t active = 0;
    for (size_t k = 0; k < target.size(); ++k) {
        if (mask && mask[k / per_row]) continue;
        const double d = pv[k] - target[k];
        s += d * d;
        ++active;
    }
    if (active == 0) return;
    loss_ += weight * s / (double)active;
    op->pred = pred;
    op->target = target;
    op->scale = weight / (double)active;
    op->mask = mask;
    op->per_row = per_row;
    ops_.push_back(std::move(op));
}

Tape::BufId Tape::profile(BufId U, int nx, int ny, int component, Mask mask) {
    auto op = std::make_unique<TapeOps::ProfileOp>();
    const BufId out = alloc(nx);
    const auto Uv = value(U);
    auto ov = value(out);
    op->active.assign(nx, 0);
    for (int x = 0; x < nx; ++x) {
        double s = 0;
        for (int y = 0; y < ny; ++y) {
            if (mask && mask[(size_t)y * nx + x]) continue;
            s += Uv[((size_t)y * nx + x) * 4 + component];
            op->active[x] += 1;
        }
        ov[x] = op->active[x] > 0 ? s / op->active[x] : 0.0;
    }
    op->U = U;
    op->out = out;
    op->nx = nx;
    op->ny = ny;
    op->comp = component;
    op->mask = mask;
    ops_.push_back(std::move(op));
    return out;
}

void Tape::tv_penalty(const std::vector<BufId>& profiles, double weight) {
    auto op = std::make_unique<TapeOps::TvPenaltyOp>();
    op->profiles = profiles;
    op->weight = weight;
    op->tv.resize(profiles.size());
    for (size_t r = 0; r < profiles.size(); ++r) {
        const auto pv = value(profiles[r]);
        double tv = 0;
        for (size_t x = 0; x + 1 < pv.size(); ++x) tv += std::abs(pv[x + 1] - pv[x]);
        op->tv[r] = tv;
    }
    double pen = 0;
    for (size_t r = 1; r < profiles.size(); ++r)
        pen += std::max(0.0, op->tv[r] - op->tv[r - 1]);
    tvd_term_ = pen;
    loss_ += weight * pen;
    ops_.push_back(std::move(op));
}

void Tape::backward() {
    for (size_t k = ops_.size(); k-- > 0;) ops_[k]->backward(*this);
}

} // namespace ndeq
