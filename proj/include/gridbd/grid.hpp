#pragma once

// Network model: buses, series lines, bus shunts, nodal admittance matrix and
// the AC power-injection equations. All quantities are per-unit.

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gridbd/common.hpp"

namespace gridbd {

struct Line {
    Index from = 0;
    Index to = 0;
    Complex admittance;  // series y = g + jb
};

struct Bound {
    double lo = 0.0;
    double hi = 0.0;
};

struct OperatingLimits {
    Bound v{0.0, 2.0};
    Bound theta{-3.2, 3.2};
    Bound p{-1e9, 1e9};
    Bound q{-1e9, 1e9};

    void validate() const;
};

struct GridModel {
    std::string name;
    Index bus_count = 0;
    Index slack_bus = 0;
    double slack_voltage = 1.0;
    std::vector<Line> lines;
    ComplexVector shunts;           // per-bus shunt admittance, length bus_count
    ComplexVector base_injections;  // per-bus complex power injection s = p + jq
    OperatingLimits limits;        // normal operation
    OperatingLimits fault_limits;  // withstand envelope while a fault is on

    [[nodiscard]] Index line_count() const { return static_cast<Index>(lines.size()); }

    // Checks index ranges, self-loops and connectivity.
    void validate() const;
};

// Y = Yp + jYq; Yp and Yq are the conductance and susceptance matrices.
struct AdmittanceMatrix {
    ComplexMatrix y;

    [[nodiscard]] Index size() const { return y.rows(); }
    [[nodiscard]] RealMatrix real() const { return y.real(); }
    [[nodiscard]] RealMatrix imag() const { return y.imag(); }
};

// Rectangular voltage phasors u = up + j uq.
struct BusState {
    ComplexVector voltage;

    [[nodiscard]] Index size() const { return voltage.size(); }
    [[nodiscard]] RealVector magnitude() const { return voltage.cwiseAbs(); }
    [[nodiscard]] RealVector angle() const;

    static BusState flat(Index n, double magnitude = 1.0);
    static BusState from_polar(const RealVector& magnitude, const RealVector& angle);
};

struct PowerInjections {
    RealVector p;
    RealVector q;
};

AdmittanceMatrix build_admittance(const GridModel& grid, bool include_shunts = true);

// Eliminates trailing internal buses [keep, n) that carry no injection.
AdmittanceMatrix kron_reduce(const AdmittanceMatrix& y, Index keep);

ComplexVector ohm_currents(const AdmittanceMatrix& y, const BusState& u);

PowerInjections power_injections(const AdmittanceMatrix& y, const BusState& state);

struct LimitViolation {
    std::string quantity;
    Index index = 0;
    double value = 0.0;
    double margin = 0.0;  // distance outside the violated bound, > 0
};

struct ViolationReport {
    std::vector<LimitViolation> violations;

    [[nodiscard]] bool feasible() const { return violations.empty(); }
};

// Bounds are inclusive.
ViolationReport check_limits(std::span<const double> values, std::span<const double> lower,
                             std::span<const double> upper, const std::string& quantity = "g");
ViolationReport check_limits(const RealVector& values, Bound bound, const std::string& quantity);

// Voltage magnitude, angle and both injections of a state in one report.
ViolationReport check_state_limits(const AdmittanceMatrix& y, const BusState& state,
                                   const OperatingLimits& limits);

OperatingLimits limits_from_json(const nlohmann::json& j);
nlohmann::json limits_to_json(const OperatingLimits& limits);

GridModel grid_from_json(const nlohmann::json& j);
nlohmann::json grid_to_json(const GridModel& grid);
GridModel load_grid(const std::filesystem::path& path);

// Stable 64-bit fingerprint of the canonical grid JSON, as 16 hex chars.
std::string grid_hash(const GridModel& grid);

// Small fixtures used by tests and benchmarks.
GridModel two_bus_grid(Complex line_admittance, Complex load = {0.0, 0.0});
GridModel ring_grid(Index buses, Complex line_admittance);

}  // namespace gridbd
