#include "gridbd/random.hpp"

#include <cmath>
#include <numbers>

namespace gridbd {

double standard_normal(Rng& rng) {
    // Box-Muller, one variate per call; u1 is kept away from zero.
    const double u1 = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace gridbd
