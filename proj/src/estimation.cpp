#include "gridbd/estimation.hpp"

#include <cmath>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>
#include <nlohmann/json.hpp>

#include "gridbd/power_flow.hpp"

namespace gridbd {

RealVector StateLayout::pack(const BusState& s) const {
    require_same_size(bus_count, s.size(), "StateLayout::pack");
    RealVector x(size());
    x.head(bus_count) = s.voltage.real();
    Index c = bus_count;
    for (Index b = 0; b < bus_count; ++b) {
        if (b != slack) x[c++] = s.voltage[b].imag();
    }
    return x;
}

BusState StateLayout::unpack(const RealVector& x, double pinned_slack_imag) const {
    require_same_size(size(), x.size(), "StateLayout::unpack");
    BusState s{ComplexVector(bus_count)};
    Index c = bus_count;
    for (Index b = 0; b < bus_count; ++b) {
        const double im = b == slack ? pinned_slack_imag : x[c++];
        s.voltage[b] = Complex(x[b], im);
    }
    return s;
}

Index StateLayout::imag_column(Index bus) const {
    if (bus == slack) return -1;
    return bus_count + (bus < slack ? bus : bus - 1);
}

void MeasurementSet::validate(Index bus_count) const {
    const Index expected = (include_voltage_magnitude ? 3 : 2) * bus_count;
    require_same_size(expected, z.size(), "measurement vector");
    require_same_size(expected, sigma.size(), "measurement sigma vector");
    if ((sigma.array() <= 0.0).any()) throw InvalidArgument("measurement sigma must be strictly positive");
}

nlohmann::json measurements_to_json(const MeasurementSet& m) {
    return {{"z", std::vector<double>(m.z.data(), m.z.data() + m.z.size())},
            {"sigma", std::vector<double>(m.sigma.data(), m.sigma.data() + m.sigma.size())},
            {"include_voltage_magnitude", m.include_voltage_magnitude}};
}

MeasurementSet measurements_from_json(const nlohmann::json& j) {
    try {
        const auto z = j.at("z").get<std::vector<double>>();
        const auto sigma = j.at("sigma").get<std::vector<double>>();
        MeasurementSet m;
        m.z = Eigen::Map<const RealVector>(z.data(), static_cast<Index>(z.size()));
        m.sigma = Eigen::Map<const RealVector>(sigma.data(), static_cast<Index>(sigma.size()));
        m.include_voltage_magnitude = j.value("include_voltage_magnitude", false);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed measurement set: ") + e.what());
    }
}

RealVector measurement_model(const AdmittanceMatrix& y, const BusState& state, bool include_voltage_magnitude) {
    const Index n = y.size();
    require_same_size(n, state.size(), "measurement_model");
    const auto s = power_injections(y, state);
    RealVector z((include_voltage_magnitude ? 3 : 2) * n);
    z.head(n) = s.p;
    z.segment(n, n) = s.q;
    if (include_voltage_magnitude) z.tail(n) = state.magnitude();
    return z;
}

RealMatrix jacobian(const AdmittanceMatrix& y, const BusState& state, Index slack, bool include_voltage_magnitude) {
    const Index n = y.size();
    const StateLayout layout{n, slack};
    const RealMatrix full = injection_jacobian(y, state);
    RealMatrix h = RealMatrix::Zero((include_voltage_magnitude ? 3 : 2) * n, layout.size());
    h.topLeftCorner(2 * n, n) = full.leftCols(n);
    for (Index b = 0; b < n; ++b) {
        const Index c = layout.imag_column(b);
        if (c >= 0) h.block(0, c, 2 * n, 1) = full.col(n + b);
    }
    if (include_voltage_magnitude) {
        for (Index b = 0; b < n; ++b) {
            const double mag = std::abs(state.voltage[b]);
            if (mag == 0.0) throw InvalidArgument("voltage magnitude Jacobian undefined at zero voltage");
            h(2 * n + b, b) = state.voltage[b].real() / mag;
            const Index c = layout.imag_column(b);
            if (c >= 0) h(2 * n + b, c) = state.voltage[b].imag() / mag;
        }
    }
    if (!h.allFinite()) throw InvalidArgument("measurement Jacobian has non-finite entries");
    return h;
}

Index numerical_rank(const RealMatrix& m) {
    Eigen::ColPivHouseholderQR<RealMatrix> qr(m);
    qr.setThreshold(1e-10);
    return qr.rank();
}

MeasurementSet measure(const AdmittanceMatrix& y, const BusState& state, const MeasurementNoise& noise,
                       bool include_voltage_magnitude, Rng* rng) {
    const Index n = y.size();
    MeasurementSet m;
    m.include_voltage_magnitude = include_voltage_magnitude;
    m.z = measurement_model(y, state, include_voltage_magnitude);
    m.sigma = RealVector::Constant(m.z.size(), noise.sigma_pq);
    if (include_voltage_magnitude) m.sigma.tail(n).setConstant(noise.sigma_v);
    if (rng) {
        for (Index i = 0; i < m.z.size(); ++i) m.z[i] += m.sigma[i] * standard_normal(*rng);
    }
    return m;
}

WlsResult wls_estimate(const AdmittanceMatrix& y, Index slack, const MeasurementSet& measurements,
                       const BusState& initial, const WlsOptions& options) {
    const Index n = y.size();
    measurements.validate(n);
    require_same_size(n, initial.size(), "wls_estimate initial state");
    const StateLayout layout{n, slack};
    const double pinned = initial.voltage[slack].imag();
    const RealVector weights = measurements.sigma.array().square().inverse();

    RealVector x = layout.pack(initial);
    WlsResult result;
    for (int it = 1; it <= options.max_iterations; ++it) {
        const BusState s = layout.unpack(x, pinned);
        const RealVector r = measurements.z - measurement_model(y, s, measurements.include_voltage_magnitude);
        const RealMatrix h = jacobian(y, s, slack, measurements.include_voltage_magnitude);
        const RealMatrix gain = h.transpose() * weights.asDiagonal() * h;
        Eigen::LDLT<RealMatrix> ldlt(gain);
        // Rank is a property of the measurement set at the starting point; losing
        // it later means the iterate wandered off.
        if (it == 1 && numerical_rank(h) < layout.size()) {
            throw Error("unobservable", "measurement set does not observe the full state");
        }
        if (ldlt.info() != Eigen::Success) throw ConvergenceError("state estimation gain matrix became singular");
        const RealVector step = ldlt.solve(h.transpose() * weights.asDiagonal() * r);
        if (!step.allFinite()) throw ConvergenceError("state estimation diverged (non-finite step)");
        x += step;
        result.iterations = it;
        if (step.lpNorm<Eigen::Infinity>() < options.tolerance) {
            result.estimate = layout.unpack(x, pinned);
            result.residuals =
                measurements.z - measurement_model(y, result.estimate, measurements.include_voltage_magnitude);
            return result;
        }
    }
    throw ConvergenceError("state estimation did not converge in " + std::to_string(options.max_iterations) +
                           " iterations");
}

double chi_square_quantile(double probability, Index degrees_of_freedom) {
    if (degrees_of_freedom < 1) throw InvalidArgument("chi-square needs at least one degree of freedom");
    boost::math::chi_squared dist(static_cast<double>(degrees_of_freedom));
    return boost::math::quantile(dist, probability);
}

BadDataReport bad_data_test(const RealVector& residuals, const RealVector& sigma, Index state_count,
                            double confidence, double residual_threshold) {
    require_same_size(residuals.size(), sigma.size(), "bad_data_test");
    BadDataReport report;
    report.degrees_of_freedom = residuals.size() - state_count;
    if (report.degrees_of_freedom < 1) {
        throw InvalidArgument("bad data test needs more measurements than states");
    }
    const RealVector normalized = residuals.cwiseQuotient(sigma);
    report.objective = normalized.squaredNorm();
    report.chi2_threshold = chi_square_quantile(confidence, report.degrees_of_freedom);
    report.max_normalized_residual = normalized.cwiseAbs().maxCoeff(&report.max_residual_index);
    report.flagged =
        report.objective > report.chi2_threshold || report.max_normalized_residual > residual_threshold;
    return report;
}

}  // namespace gridbd
