#pragma once

// Quasi-steady-state fault simulator. A fault splits a line at a fractional
// location, joins the segments at a virtual bus and hangs a shunt fault
// admittance there; the four fault types are severity tiers of that admittance.

#include <array>
#include <optional>

#include "gridbd/dataset.hpp"
#include "gridbd/power_flow.hpp"

namespace gridbd {

struct FaultSeverity {
    double tp = 10.0;
    double dlg = 6.0;
    double ll = 4.0;
    double lg = 2.0;

    [[nodiscard]] double factor(FaultType t) const;
};

struct FaultSpec {
    Index line_index = 0;
    FaultType type = FaultType::tp;
    double location_fraction = 0.5;
    double fault_admittance_scale = 1.0;

    void validate() const;
};

// Returns a (d+1)-bus grid; bus d is the virtual fault bus.
GridModel apply_fault(const GridModel& grid, const FaultSpec& spec, const FaultSeverity& severity = {});

BusState solve_prefault(const GridModel& grid, const ComplexVector& injections,
                        const PowerFlowOptions& options = {});

struct SimulatedSample {
    BusState pre;   // u0
    BusState post;  // u'
    int label = 0;
};

// Solves the pre-fault and (for a fault) the Kron-reduced faulted network with
// the same injections, then adds Gaussian noise of `noise_sigma` to both
// rectangular components of both states. No fault means the normal class.
SimulatedSample simulate_sample(const GridModel& grid, const ComplexVector& injections,
                                const std::optional<FaultSpec>& fault, double noise_sigma, Rng& rng,
                                const FaultSeverity& severity = {}, const OperatingLimits* limits = nullptr,
                                const OperatingLimits* fault_limits = nullptr);

struct GenerationConfig {
    std::size_t sample_count = 1000;
    std::array<double, 4> type_mix{1.0, 1.0, 1.0, 1.0};  // weights for TP, LG, DLG, LL
    double normal_fraction = -1.0;                       // < 0: one class share, 1/(m+1)
    double noise_sigma = 1e-3;
    double load_scale_lo = 0.8;
    double load_scale_hi = 1.2;
    double fault_scale_lo = 0.5;
    double fault_scale_hi = 1.5;
    double location_lo = 0.05;
    double location_hi = 0.95;
    double train_fraction = 0.8;
    int max_redraws = 200;
    FaultSeverity severity;
    std::optional<OperatingLimits> limits;        // pre-fault; defaults to the grid's limits
    std::optional<OperatingLimits> fault_limits;  // post-fault; defaults to the grid's fault_limits

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static GenerationConfig from_json(const nlohmann::json& j);
};

// Each sample draws from its own stream keyed by (seed, sample index), so the
// result does not depend on `threads`.
Dataset generate_dataset(const GridModel& grid, const GenerationConfig& config, std::uint64_t seed,
                         int threads = 1);

}  // namespace gridbd
