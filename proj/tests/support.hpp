#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "gridbd/fault.hpp"
#include "gridbd/grid.hpp"
#include "gridbd/random.hpp"

namespace testing {

inline std::filesystem::path data_path(const std::string& name) {
    return std::filesystem::path(GRIDBD_DATA_DIR) / name;
}

inline gridbd::GridModel grid14() { return gridbd::load_grid(data_path("grid14.json")); }

// Random but plausible operating point: |v| in [0.9, 1.1], angles within 0.5
// rad, slack at angle zero.
inline gridbd::BusState random_state(gridbd::Index n, gridbd::Index slack, gridbd::Rng& rng) {
    gridbd::RealVector mag(n), ang(n);
    for (gridbd::Index i = 0; i < n; ++i) {
        mag[i] = gridbd::uniform(rng, 0.9, 1.1);
        ang[i] = i == slack ? 0.0 : gridbd::uniform(rng, -0.5, 0.5);
    }
    return gridbd::BusState::from_polar(mag, ang);
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace testing
