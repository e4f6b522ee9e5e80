#pragma once

#include <array>

namespace ndeq {

inline constexpr int kQ = 9;

// D2Q9 velocity set, c_i in {0,+1,-1}^2.
// Ordering is fixed project-wide and baked into all file formats:
// rest, +x, -x, +y, -y, then diagonals (++, -+, --, +-).
struct LatticeD2Q9 {
    static constexpr std::array<std::array<int, 2>, kQ> velocities{{
        {0, 0},  {1, 0},  {-1, 0}, {0, 1},  {0, -1},
        {1, 1},  {-1, 1}, {-1, -1}, {1, -1},
    }};

    // opposite[i] = j with c_j = -c_i
    static constexpr std::array<int, kQ> opposite{0, 2, 1, 4, 3, 7, 8, 5, 6};

    static constexpr int cx(int i) { return velocities[i][0]; }
    static constexpr int cy(int i) { return velocities[i][1]; }

    // Index of a velocity vector, -1 if not in the set.
    static constexpr int index_of(int vx, int vy) {
        for (int i = 0; i < kQ; ++i)
            if (velocities[i][0] == vx && velocities[i][1] == vy) return i;
        return -1;
    }
};

} // namespace ndeq
