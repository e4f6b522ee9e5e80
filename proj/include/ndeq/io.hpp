#pragma once

#include <map>
#include <string>
#include <vector>

#include "ndeq/moments.hpp"
#include "ndeq/population.hpp"

namespace ndeq {

// Snapshot file ("NDEQ1"): magic, u32 nx, u32 ny, u32 Q=9, u8 species
// ('f'/'g'), then row-major little-endian f64 values, cell index y*nx+x,
// channel fastest.
void save_snapshot(const std::string& path, const PopulationGrid& pop);
PopulationGrid load_snapshot(const std::string& path);

// Per-cell observables as CSV: x, y, rho, ux, uy, T, p with p = R*rho*T.
// Velocities are written in the physical frame (u + u_shift).
void write_macro_csv(const std::string& path, int nx, int ny,
                     const std::vector<MacroState>& U, const GasParams& gas);

// key=value text files ('#' comments, blank lines ignored).
std::map<std::string, std::string> read_kv(const std::string& path);
void write_kv(const std::string& path,
              const std::vector<std::pair<std::string, std::string>>& kv);

} // namespace ndeq
