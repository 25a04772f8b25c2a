#include <doctest.h>

#include <nlohmann/json.hpp>

#include "gridbd/estimation.hpp"
#include "gridbd/fault.hpp"
#include "support.hpp"

using namespace gridbd;

TEST_CASE("state layout packs and unpacks around the slack") {
    const StateLayout layout{4, 2};
    CHECK(layout.size() == 7);
    CHECK(layout.imag_column(2) == -1);
    CHECK(layout.imag_column(0) == 4);
    CHECK(layout.imag_column(3) == 6);
    const BusState s{ComplexVector{{Complex(1, 0.1), Complex(2, 0.2), Complex(3, 0.3), Complex(4, 0.4)}}};
    const BusState back = layout.unpack(layout.pack(s), 0.3);
    CHECK(back.voltage == s.voltage);
}

TEST_CASE("measurement Jacobian matches central differences") {
    const GridModel g = testing::grid14();
    const auto y = build_admittance(g);
    const StateLayout layout{g.bus_count, g.slack_bus};
    Rng rng(12);
    for (bool with_v : {false, true}) {
        const BusState u = testing::random_state(g.bus_count, g.slack_bus, rng);
        const RealMatrix h = jacobian(y, u, g.slack_bus, with_v);
        const RealVector x = layout.pack(u);
        const double step = 1e-6;
        for (Index c = 0; c < layout.size(); ++c) {
            RealVector xp = x, xm = x;
            xp[c] += step;
            xm[c] -= step;
            const RealVector fd = (measurement_model(y, layout.unpack(xp, 0.0), with_v) -
                                   measurement_model(y, layout.unpack(xm, 0.0), with_v)) /
                                  (2 * step);
            CHECK((h.col(c) - fd).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + fd.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("noiseless WLS recovers the state") {
    const GridModel g = testing::grid14();
    const auto y = build_admittance(g);
    Rng rng(8);
    for (int k = 0; k < 10; ++k) {
        const BusState u = testing::random_state(g.bus_count, g.slack_bus, rng);
        const auto m = measure(y, u, MeasurementNoise{}, true, nullptr);
        const auto r = wls_estimate(y, g.slack_bus, m, BusState::flat(g.bus_count, 1.0));
        CHECK((r.estimate.voltage - u.voltage).cwiseAbs().maxCoeff() < 1e-7);
        CHECK(r.residuals.cwiseAbs().maxCoeff() < 1e-8);
    }
    // p,q alone leave one redundant measurement; fine near an operating point
    const BusState base = solve_prefault(g, g.base_injections);
    const auto m = measure(y, base, MeasurementNoise{}, false, nullptr);
    const auto r = wls_estimate(y, g.slack_bus, m, BusState::flat(g.bus_count, g.slack_voltage));
    CHECK((r.estimate.voltage - base.voltage).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("chi-square quantiles match tables") {
    CHECK(chi_square_quantile(0.95, 1) == doctest::Approx(3.841459).epsilon(1e-6));
    CHECK(chi_square_quantile(0.95, 15) == doctest::Approx(24.99579).epsilon(1e-6));
    CHECK_THROWS_AS(chi_square_quantile(0.95, 0), InvalidArgument);
}

TEST_CASE("bad data test flags a gross error and counts degrees of freedom") {
    RealVector r = RealVector::Constant(10, 0.001), sigma = RealVector::Constant(10, 0.01);
    auto rep = bad_data_test(r, sigma, 4);
    CHECK(rep.degrees_of_freedom == 6);
    CHECK(rep.objective == doctest::Approx(0.1).epsilon(1e-12));
    CHECK_FALSE(rep.flagged);
    r[7] = 0.05;
    rep = bad_data_test(r, sigma, 4);
    CHECK(rep.flagged);
    CHECK(rep.max_residual_index == 7);
    CHECK(rep.max_normalized_residual == doctest::Approx(5.0));
    CHECK_THROWS_AS(bad_data_test(r, sigma, 10), InvalidArgument);
}

TEST_CASE("clean flag rate is calibrated near the chi-square level") {
    const GridModel g = testing::grid14();
    const auto y = build_admittance(g);
    const StateLayout layout{g.bus_count, g.slack_bus};
    Rng rng(31);
    const int draws = 1500;
    int chi = 0;
    for (int k = 0; k < draws; ++k) {
        const BusState u = testing::random_state(g.bus_count, g.slack_bus, rng);
        const auto m = measure(y, u, MeasurementNoise{}, true, &rng);
        const auto r = wls_estimate(y, g.slack_bus, m, BusState::flat(g.bus_count, 1.0));
        const auto rep = bad_data_test(r.residuals, m.sigma, layout.size());
        chi += rep.objective > rep.chi2_threshold;
    }
    // binomial sd at 5% over 1500 draws is 0.56 points
    CHECK(std::abs(double(chi) / draws - 0.05) < 0.02);
}

TEST_CASE("rank loss is reported as unobservable") {
    RealMatrix m = RealMatrix::Random(6, 3);
    m.col(2) = m.col(0) + m.col(1);
    CHECK(numerical_rank(m) == 2);
    // Two isolated halves joined by a negligible line cannot fix the second angle.
    GridModel g = ring_grid(4, Complex(1.0, -5.0));
    g.lines[1].admittance = Complex(0.0, 0.0);
    g.lines[3].admittance = Complex(0.0, 0.0);
    const auto y = build_admittance(g);
    const auto meas = measure(y, BusState::flat(4), MeasurementNoise{}, false, nullptr);
    try {
        wls_estimate(y, 0, meas, BusState::flat(4));
        FAIL("expected an unobservable error");
    } catch (const Error& e) {
        CHECK(e.code() == "unobservable");
    }
}

TEST_CASE("measurement set JSON round trip and validation") {
    MeasurementSet m{RealVector::LinSpaced(6, 0, 1), RealVector::Constant(6, 0.01), false};
    const auto back = measurements_from_json(measurements_to_json(m));
    CHECK(back.z == m.z);
    CHECK(back.sigma == m.sigma);
    CHECK_NOTHROW(m.validate(3));
    CHECK_THROWS(m.validate(4));
    m.sigma[0] = 0.0;
    CHECK_THROWS_AS(m.validate(3), InvalidArgument);
}
