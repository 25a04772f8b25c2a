#include "gridbd/power_flow.hpp"

#include <cmath>
#include <string>

namespace gridbd {

RealMatrix injection_jacobian(const AdmittanceMatrix& y, const BusState& state) {
    const Index n = y.size();
    require_same_size(n, state.size(), "injection_jacobian");
    const ComplexVector& u = state.voltage;
    const ComplexVector current_conj = (y.y * u).conjugate();
    // dS/de = diag(conj I) + diag(u) conj(Y);  dS/df = j diag(conj I) - j diag(u) conj(Y)
    ComplexMatrix ds_de = u.asDiagonal() * y.y.conjugate();
    ComplexMatrix ds_df = Complex(0.0, -1.0) * ds_de;
    for (Index i = 0; i < n; ++i) {
        ds_de(i, i) += current_conj[i];
        ds_df(i, i) += Complex(0.0, 1.0) * current_conj[i];
    }
    RealMatrix jac(2 * n, 2 * n);
    jac.topLeftCorner(n, n) = ds_de.real();
    jac.topRightCorner(n, n) = ds_df.real();
    jac.bottomLeftCorner(n, n) = ds_de.imag();
    jac.bottomRightCorner(n, n) = ds_df.imag();
    return jac;
}

PowerFlowResult solve_power_flow(const AdmittanceMatrix& y, Index slack, double slack_voltage,
                                 const ComplexVector& injections, const BusState& initial,
                                 const PowerFlowOptions& options) {
    const Index n = y.size();
    require_same_size(n, injections.size(), "solve_power_flow injections");
    require_same_size(n, initial.size(), "solve_power_flow initial state");
    if (slack < 0 || slack >= n) throw InvalidArgument("solve_power_flow: slack bus out of range");

    // Unknowns: up and uq of every non-slack bus. Equations: p and q there.
    std::vector<Index> pq;
    for (Index i = 0; i < n; ++i) {
        if (i != slack) pq.push_back(i);
    }
    const Index m = static_cast<Index>(pq.size());

    PowerFlowResult result{initial, 0, 0.0};
    ComplexVector& u = result.state.voltage;
    u[slack] = Complex(slack_voltage, 0.0);
    if (m == 0) return result;

    RealVector mismatch(2 * m);
    RealMatrix reduced(2 * m, 2 * m);
    for (int it = 0;; ++it) {
        const ComplexVector s = u.cwiseProduct((y.y * u).conjugate());
        for (Index k = 0; k < m; ++k) {
            const Complex d = injections[pq[k]] - s[pq[k]];
            mismatch[k] = d.real();
            mismatch[m + k] = d.imag();
        }
        result.iterations = it;
        result.mismatch = mismatch.lpNorm<Eigen::Infinity>();
        if (!std::isfinite(result.mismatch)) {
            throw ConvergenceError("power flow diverged (non-finite mismatch)");
        }
        if (result.mismatch < options.tolerance) return result;
        if (it >= options.max_iterations) {
            throw ConvergenceError("power flow did not converge in " + std::to_string(options.max_iterations) +
                                   " iterations (mismatch " + std::to_string(result.mismatch) + ")");
        }
        const RealMatrix jac = injection_jacobian(y, result.state);
        for (Index r = 0; r < m; ++r) {
            for (Index c = 0; c < m; ++c) {
                reduced(r, c) = jac(pq[r], pq[c]);
                reduced(r, m + c) = jac(pq[r], n + pq[c]);
                reduced(m + r, c) = jac(n + pq[r], pq[c]);
                reduced(m + r, m + c) = jac(n + pq[r], n + pq[c]);
            }
        }
        Eigen::PartialPivLU<RealMatrix> lu(reduced);
        const RealVector step = lu.solve(mismatch);
        if (!step.allFinite()) throw ConvergenceError("power flow Jacobian is singular");
        for (Index k = 0; k < m; ++k) u[pq[k]] += Complex(step[k], step[m + k]);
    }
}

BusState solve_current_injection(const AdmittanceMatrix& y, Index slack, Complex slack_voltage,
                                 const ComplexVector& currents) {
    const Index n = y.size();
    require_same_size(n, currents.size(), "solve_current_injection");
    if (slack < 0 || slack >= n) throw InvalidArgument("solve_current_injection: slack bus out of range");
    std::vector<Index> keep;
    for (Index i = 0; i < n; ++i) {
        if (i != slack) keep.push_back(i);
    }
    const Index m = static_cast<Index>(keep.size());
    ComplexMatrix ynn(m, m);
    ComplexVector rhs(m);
    for (Index r = 0; r < m; ++r) {
        for (Index c = 0; c < m; ++c) ynn(r, c) = y.y(keep[r], keep[c]);
        rhs[r] = currents[keep[r]] - y.y(keep[r], slack) * slack_voltage;
    }
    Eigen::FullPivLU<ComplexMatrix> lu(ynn);
    if (!lu.isInvertible()) throw SingularMatrixError("network matrix without the slack bus is singular");
    const ComplexVector un = lu.solve(rhs);
    BusState s{ComplexVector(n)};
    s.voltage[slack] = slack_voltage;
    for (Index r = 0; r < m; ++r) s.voltage[keep[r]] = un[r];
    return s;
}

}  // namespace gridbd
