#include "ndeq/neurde.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ndeq/errors.hpp"

namespace ndeq {

size_t MlpParams::count() const {
    size_t n = 0;
    for (const auto* net : {&lambda_net, &phi_net})
        for (const auto& l : *net) n += l.W.size() + l.b.size();
    return n;
}

void MlpParams::for_each(const std::function<void(double&)>& fn) {
    for (auto* net : {&lambda_net, &phi_net})
        for (auto& l : *net) {
            for (double& w : l.W) fn(w);
            for (double& b : l.b) fn(b);
        }
}

double* MlpParams::flat_at(size_t idx) {
    for (auto* net : {&lambda_net, &phi_net})
        for (auto& l : *net) {
            if (idx < l.W.size()) return &l.W[idx];
            idx -= l.W.size();
            if (idx < l.b.size()) return &l.b[idx];
            idx -= l.b.size();
        }
    return nullptr;
}

namespace {

// Portable uniform double in [0,1) from raw engine output.
inline double u01(std::uint64_t bits) {
    return (double)(bits >> 11) * 0x1.0p-53;
}

MlpLayer make_layer(int in, int out, std::uint64_t& state) {
    auto next = [&state]() {
        // splitmix64
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    };
    MlpLayer l;
    l.in = in;
    l.out = out;
    l.W.resize((size_t)in * out);
    l.b.assign(out, 0.0);
    const double limit = std::sqrt(6.0 / in);
    for (double& w : l.W) w = (2.0 * u01(next()) - 1.0) * limit;
    return l;
}

} // namespace

MlpParams init_params(int width, int depth, int seed) {
    std::uint64_t state = (std::uint64_t)seed * 0x2545f4914f6cdd1dull + 0x9e3779b97f4a7c15ull;
    MlpParams p;
    auto build = [&](int in) {
        std::vector<MlpLayer> net;
        int prev = in;
        for (int d = 0; d < depth - 1; ++d) {
            net.push_back(make_layer(prev, width, state));
            prev = width;
        }
        net.push_back(make_layer(prev, width, state));  // linear output, p = width
        return net;
    };
    p.lambda_net = build(4);
    p.phi_net = build(2);
    return p;
}

double gelu(double x) {
    return x * 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
}

double gelu_grad(double x) {
    const double Phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return Phi + x * phi;
}

namespace {

void mlp_eval(const std::vector<MlpLayer>& net, const double* in, double* out) {
    std::vector<double> a(in, in + net.front().in), b;
    for (size_t li = 0; li < net.size(); ++li) {
        const MlpLayer& l = net[li];
        b.assign(l.out, 0.0);
        for (int r = 0; r < l.out; ++r) {
            double s = l.b[r];
            const double* w = &l.W[(size_t)r * l.in];
            for (int c = 0; c < l.in; ++c) s += w[c] * a[c];
            b[r] = (li + 1 < net.size()) ? gelu(s) : s;
        }
        a.swap(b);
    }
    std::memcpy(out, a.data(), a.size() * sizeof(double));
}

} // namespace

void eval_phi(const MlpParams& params, std::vector<double>& phi) {
    const int p = params.p();
    phi.resize((size_t)kQ * p);
    for (int i = 0; i < kQ; ++i) {
        const double c[2] = {(double)LatticeD2Q9::cx(i), (double)LatticeD2Q9::cy(i)};
        mlp_eval(params.phi_net, c, &phi[(size_t)i * p]);
    }
}

void neurde_forward(const MlpParams& params, const std::vector<double>& phi,
                    const MacroState& U, Vec9& out) {
    const int p = params.p();
    std::vector<double> lam(p);
    const double in[4] = {U.rho, U.ux, U.uy, U.T};
    mlp_eval(params.lambda_net, in, lam.data());
    for (int i = 0; i < kQ; ++i) {
        double s = 0.0;
        const double* ph = &phi[(size_t)i * p];
        for (int k = 0; k < p; ++k) s += lam[k] * ph[k];
        if (!(std::abs(s) <= kExpGuard))
            throw InvalidStateError("equilibrium exponent overflow (network diverged)");
        out[i] = std::exp(s);
    }
}

namespace {

constexpr char kCheckpointMagic[5] = {'N', 'D', 'E', 'W', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    os.write((const char*)b, 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read((char*)b, 4);
    return (std::uint32_t)b[0] | ((std::uint32_t)b[1] << 8) |
           ((std::uint32_t)b[2] << 16) | ((std::uint32_t)b[3] << 24);
}

void write_f64s(std::ostream& os, const std::vector<double>& v) {
    static_assert(sizeof(double) == 8);
    os.write((const char*)v.data(), (std::streamsize)(v.size() * 8));
}

void read_f64s(std::istream& is, std::vector<double>& v) {
    is.read((char*)v.data(), (std::streamsize)(v.size() * 8));
}

} // namespace

void save_checkpoint(const std::string& path, const MlpParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open checkpoint for writing: " + path);
    os.write(kCheckpointMagic, 5);
    write_u32(os, (std::uint32_t)params.lambda_net.size());
    write_u32(os, (std::uint32_t)params.phi_net.size());
    for (const auto* net : {&params.lambda_net, &params.phi_net})
        for (const auto& l : *net) {
            write_u32(os, (std::uint32_t)l.in);
            write_u32(os, (std::uint32_t)l.out);
        }
    for (const auto* net : {&params.lambda_net, &params.phi_net})
        for (const auto& l : *net) {
            write_f64s(os, l.W);
            write_f64s(os, l.b);
        }
    if (!os) throw ConfigError("checkpoint write failed: " + path);
}

MlpParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint: " + path);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kCheckpointMagic, 5) != 0)
        throw ConfigError("bad checkpoint magic: " + path);
    MlpParams p;
    const std::uint32_t nl = read_u32(is), np = read_u32(is);
    p.lambda_net.resize(nl);
    p.phi_net.resize(np);
    for (auto* net : {&p.lambda_net, &p.phi_net})
        for (auto& l : *net) {
            l.in = (int)read_u32(is);
            l.out = (int)read_u32(is);
            l.W.resize((size_t)l.in * l.out);
            l.b.resize(l.out);
        }
    for (auto* net : {&p.lambda_net, &p.phi_net})
        for (auto& l : *net) {
            read_f64s(is, l.W);
            read_f64s(is, l.b);
        }
    if (!is) throw ConfigError("truncated checkpoint: " + path);
    return p;
}

} // namespace ndeq
