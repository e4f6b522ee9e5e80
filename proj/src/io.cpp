#include "ndeq/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ndeq/errors.hpp"

namespace ndeq {

namespace {

constexpr char kSnapshotMagic[5] = {'N', 'D', 'E', 'Q', '1'};

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

} // namespace

void save_snapshot(const std::string& path, const PopulationGrid& pop) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open snapshot for writing: " + path);
    os.write(kSnapshotMagic, 5);
    write_u32(os, (std::uint32_t)pop.nx);
    write_u32(os, (std::uint32_t)pop.ny);
    write_u32(os, (std::uint32_t)kQ);
    const unsigned char sp = (unsigned char)pop.species;
    os.write((const char*)&sp, 1);
    static_assert(sizeof(double) == 8);
    os.write((const char*)pop.v.data(), (std::streamsize)(pop.v.size() * 8));
    if (!os) throw ConfigError("snapshot write failed: " + path);
}

PopulationGrid load_snapshot(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open snapshot: " + path);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, kSnapshotMagic, 5) != 0)
        throw ConfigError("bad snapshot magic: " + path);
    const int nx = (int)read_u32(is);
    const int ny = (int)read_u32(is);
    const int q = (int)read_u32(is);
    if (q != kQ) throw ConfigError("snapshot Q mismatch: " + path);
    unsigned char sp;
    is.read((char*)&sp, 1);
    if (sp != 'f' && sp != 'g') throw ConfigError("unknown species tag: " + path);
    PopulationGrid pop(nx, ny, (Species)sp);
    is.read((char*)pop.v.data(), (std::streamsize)(pop.v.size() * 8));
    if (!is) throw ConfigError("truncated snapshot: " + path);
    return pop;
}

void write_macro_csv(const std::string& path, int nx, int ny,
                     const std::vector<MacroState>& U, const GasParams& gas) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open csv for writing: " + path);
    os.precision(17);
    os << "x,y,rho,ux,uy,T,p\n";
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            const MacroState& s = U[(size_t)y * nx + x];
            os << x << ',' << y << ',' << s.rho << ',' << s.ux + gas.ushift_x << ','
               << s.uy + gas.ushift_y << ',' << s.T << ',' << gas.R * s.rho * s.T << '\n';
        }
}

std::map<std::string, std::string> read_kv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(is, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const char* ws = " \t\r\n";
            const size_t a = s.find_first_not_of(ws);
            if (a == std::string::npos) return std::string();
            const size_t b = s.find_last_not_of(ws);
            return s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) out[key] = val;
    }
    return out;
}

void write_kv(const std::string& path,
              const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open file for writing: " + path);
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

} // namespace ndeq
