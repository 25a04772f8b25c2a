#pragma once

// Weighted-least-squares state estimation over bus injection measurements.
//
// State coordinates are rectangular: x = [up(0..d-1), uq(b) for b != slack].
// The slack bus imaginary part is pinned (angle reference), so x has 2d-1
// entries. Measurements are z = [p(0..d-1), q(0..d-1)] optionally followed by
// the voltage magnitudes |u(0..d-1)|.

#include <optional>

#include <nlohmann/json_fwd.hpp>

#include "gridbd/grid.hpp"
#include "gridbd/random.hpp"

namespace gridbd {

struct StateLayout {
    Index bus_count = 0;
    Index slack = 0;

    [[nodiscard]] Index size() const { return 2 * bus_count - 1; }
    [[nodiscard]] RealVector pack(const BusState& s) const;
    // `pinned_slack_imag` fills the coordinate the state vector omits.
    [[nodiscard]] BusState unpack(const RealVector& x, double pinned_slack_imag) const;
    // Column of x holding uq(bus), or -1 for the slack.
    [[nodiscard]] Index imag_column(Index bus) const;
};

struct MeasurementSet {
    RealVector z;
    RealVector sigma;
    bool include_voltage_magnitude = false;

    [[nodiscard]] Index size() const { return z.size(); }
    void validate(Index bus_count) const;
};

nlohmann::json measurements_to_json(const MeasurementSet& m);
MeasurementSet measurements_from_json(const nlohmann::json& j);

RealVector measurement_model(const AdmittanceMatrix& y, const BusState& state, bool include_voltage_magnitude = false);

// Analytic dz/dx at `state`, (#measurements) x (2d-1).
RealMatrix jacobian(const AdmittanceMatrix& y, const BusState& state, Index slack,
                    bool include_voltage_magnitude = false);

Index numerical_rank(const RealMatrix& m);

struct MeasurementNoise {
    double sigma_pq = 0.01;
    double sigma_v = 0.004;
};

// z = h(state) + e with e ~ N(0, sigma^2) when rng is given, noiseless otherwise.
MeasurementSet measure(const AdmittanceMatrix& y, const BusState& state, const MeasurementNoise& noise,
                       bool include_voltage_magnitude, Rng* rng);

struct WlsOptions {
    double tolerance = 1e-8;  // on the max-norm of the Gauss-Newton step
    int max_iterations = 50;
};

struct WlsResult {
    BusState estimate;
    RealVector residuals;  // z - h(estimate)
    int iterations = 0;
};

WlsResult wls_estimate(const AdmittanceMatrix& y, Index slack, const MeasurementSet& measurements,
                       const BusState& initial, const WlsOptions& options = {});

struct BadDataReport {
    double objective = 0.0;  // J = sum (r/sigma)^2
    double chi2_threshold = 0.0;
    Index degrees_of_freedom = 0;
    double max_normalized_residual = 0.0;  // max |r|/sigma
    Index max_residual_index = 0;
    bool flagged = false;
};

inline constexpr double kChiSquareConfidence = 0.95;
inline constexpr double kNormalizedResidualThreshold = 3.0;

BadDataReport bad_data_test(const RealVector& residuals, const RealVector& sigma, Index state_count,
                            double confidence = kChiSquareConfidence,
                            double residual_threshold = kNormalizedResidualThreshold);

double chi_square_quantile(double probability, Index degrees_of_freedom);

}  // namespace gridbd
