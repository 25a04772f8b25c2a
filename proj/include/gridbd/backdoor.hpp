#pragma once

// Backdoor triggers and dataset poisoning.
//
// A trigger (mask m, values delta) overwrites the masked feature coordinates:
//     psi' = (1 - m) * psi + m * delta
// Feature-level poisoning writes psi' directly. Measurement-level poisoning
// reaches the same psi' by perturbing the pre-fault power measurements along
// the estimator Jacobian, so the bad-data detector sees a consistent state.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gridbd/dataset.hpp"
#include "gridbd/estimation.hpp"
#include "gridbd/features.hpp"

namespace gridbd {

enum class ThreatModel { feature_level, measurement_level };

std::string_view to_string(ThreatModel t);
ThreatModel threat_model_from_string(std::string_view s);

struct Trigger {
    RealVector mask;   // entries in {0, 1}
    RealVector delta;  // replacement values, per-unit current
    int target_label = 0;

    [[nodiscard]] Index size() const { return mask.size(); }
    [[nodiscard]] Index nnz() const;
    [[nodiscard]] std::vector<Index> positions() const;
    void validate(Index feature_dim) const;

    // Same magnitude on every listed coordinate.
    static Trigger at(Index feature_dim, const std::vector<Index>& positions, double magnitude, int target_label);
};

RealVector apply_trigger(const RealVector& features, const Trigger& trigger);

struct PoisonPlan {
    double poison_ratio = 0.0;
    std::vector<std::size_t> victim_indices;
    Trigger trigger;
    ThreatModel threat_model = ThreatModel::feature_level;
    std::uint64_t seed = 0;
};

// round(ratio * |train|) train rows drawn uniformly from the rows whose label
// is not the target. Throws when the non-target pool is too small.
std::vector<std::size_t> select_victims(const Dataset& dataset, double ratio, int target_label, Rng& rng);

PoisonPlan make_poison_plan(const Dataset& dataset, double ratio, Trigger trigger, ThreatModel threat_model,
                            std::uint64_t seed);

// {ratio, target_label, mask_indices, delta_values, threat_model, seed}
nlohmann::json poison_plan_to_json(const PoisonPlan& plan);
// Victims are re-derived from the seed against `dataset`.
PoisonPlan poison_plan_from_json(const nlohmann::json& j, const Dataset& dataset);

struct ConstraintSet {
    OperatingLimits limits;
    bool enforce_power_flow = true;
    bool enforce_se_consistency = true;
};

enum class VoltageComponent { real, imag };

struct FeatureInversion {
    VoltageComponent component = VoltageComponent::imag;
    RealVector delta;  // change of up (real) or uq (imag) on every bus
    bool fell_back = false;
};

// Voltage change on a single rectangular component whose feature image is
// `target`: uq through Yp^-1 when Yp is regular, otherwise up through Yq^-1.
FeatureInversion invert_feature_map(const AdmittanceMatrix& y0, const RealVector& target,
                                    VoltageComponent preferred = VoltageComponent::imag);

// Linear forward chain: measurement perturbation -> WLS state shift -> feature change
// of the estimated pre-fault state (sign included).
RealVector forward_feature_change(const AdmittanceMatrix& y0, const RealMatrix& h, const RealVector& sigma,
                                  Index slack, const RealVector& delta_s);

struct SampleMeasurements {
    MeasurementSet pre;
    MeasurementSet post;
};

struct ConstraintReport {
    double power_flow_residual = 0.0;
    double se_residual = 0.0;
    ViolationReport limits;
    bool power_flow_ok = true;
    bool limits_ok = true;
    bool se_ok = true;

    [[nodiscard]] bool pass() const { return power_flow_ok && limits_ok && se_ok; }
};

inline constexpr double kPowerFlowTolerance = 1e-6;
inline constexpr double kSeConsistencyTolerance = 1e-8;

// What a perturbed operating point claims: a state, the injections it reports,
// and (for measurement attacks) the pair delta_s = H delta_x.
struct OperatingPointEvidence {
    BusState state;
    RealVector injections;  // [p; q]
    RealVector delta_s;     // empty when no measurement perturbation
    RealVector delta_x;
    RealMatrix h;
};

ConstraintReport validate_constraints(const AdmittanceMatrix& y0, const OperatingPointEvidence& evidence,
                                      const ConstraintSet& constraints);

struct MeasurementAttackOptions {
    WlsOptions wls;
    double feature_tolerance = 1e-10;
    int max_refinements = 30;
    double bisection_tolerance = 1e-7;  // on the achieved trigger value, per-unit
};

struct MeasurementAttackResult {
    MeasurementSet perturbed_pre;
    RealVector delta_s;
    RealVector delta_x;
    RealMatrix h;
    VoltageComponent component = VoltageComponent::imag;
    BusState clean_pre_estimate;
    BusState clean_post_estimate;
    BusState perturbed_pre_estimate;
    RealVector clean_features;
    RealVector achieved_features;
    double achieved_scale = 1.0;  // fraction of the requested change actually applied
    Trigger achieved_trigger;     // delta adjusted to what the attack reached
    BadDataReport detection;
    ConstraintReport constraints;
};

// Chooses delta_s = H(x_pre) delta_x so the re-estimated pre-fault state shifts
// the extracted features onto the triggered features; shrinks the trigger
// by bisection when the perturbed state would leave the constraint set.
MeasurementAttackResult measurement_attack(const GridModel& grid, const AdmittanceMatrix& y0,
                                           const SampleMeasurements& measurements, const Trigger& trigger,
                                           const ConstraintSet& constraints,
                                           const MeasurementAttackOptions& options = {});

struct MeasurementPoisonContext {
    const GridModel* grid = nullptr;
    ConstraintSet constraints;
    MeasurementNoise noise;
    std::uint64_t noise_seed = 0;
    MeasurementAttackOptions options;
};

// Noisy pre/post measurement sets for sample `index`, keyed by (seed, index).
SampleMeasurements sample_measurements(const AdmittanceMatrix& y0, const FaultSample& sample,
                                       const MeasurementNoise& noise, std::uint64_t seed, std::size_t index);

struct MeasurementTriggered {
    RealVector features;
    double achieved_scale = 1.0;
};

// Measurement attack on sample `index`. A sample whose clean estimate is
// already outside the limits cannot carry any trigger; it comes back with its
// clean estimated features and scale 0 instead of an error.
MeasurementTriggered measurement_triggered(const MeasurementPoisonContext& context, const AdmittanceMatrix& y0,
                                           const FaultSample& sample, std::size_t index, const Trigger& trigger);

// Triggered feature vector for one sample under either threat model.
RealVector triggered_features(const FaultSample& sample, std::size_t index, const Trigger& trigger,
                              ThreatModel threat_model, const MeasurementPoisonContext* context,
                              const AdmittanceMatrix* y0);

// Victim rows get the trigger and the target label; all other rows are
// untouched. Measurement-level plans need `context`.
Dataset poison_dataset(const Dataset& dataset, const PoisonPlan& plan,
                       const MeasurementPoisonContext* context = nullptr, int threads = 1);

}  // namespace gridbd
