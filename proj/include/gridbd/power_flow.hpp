#pragma once

#include "gridbd/grid.hpp"

namespace gridbd {

// Derivatives of the stacked injections [p; q] with respect to the stacked
// rectangular voltage components [up; uq], a 2n x 2n matrix.
RealMatrix injection_jacobian(const AdmittanceMatrix& y, const BusState& state);

struct PowerFlowOptions {
    double tolerance = 1e-10;  // max-norm mismatch, per-unit
    int max_iterations = 50;
};

struct PowerFlowResult {
    BusState state;
    int iterations = 0;
    double mismatch = 0.0;
};

// Newton-Raphson in rectangular coordinates. Every bus except the slack is a PQ
// bus holding `injections`; the slack is fixed at slack_voltage at angle zero.
// Throws ConvergenceError when the mismatch does not fall below tolerance.
PowerFlowResult solve_power_flow(const AdmittanceMatrix& y, Index slack, double slack_voltage,
                                 const ComplexVector& injections, const BusState& initial,
                                 const PowerFlowOptions& options = {});

// Linear network solve with the slack voltage fixed and every other bus
// injecting the given current: Y u = i on the non-slack rows.
BusState solve_current_injection(const AdmittanceMatrix& y, Index slack, Complex slack_voltage,
                                 const ComplexVector& currents);

}  // namespace gridbd
