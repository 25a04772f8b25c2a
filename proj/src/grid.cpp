#include "gridbd/grid.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace gridbd {

void OperatingLimits::validate() const {
    const std::array<std::pair<const char*, Bound>, 4> all{
        {{"v", v}, {"theta", theta}, {"p", p}, {"q", q}}};
    for (const auto& [name, b] : all) {
        if (!(b.lo <= b.hi)) {
            throw InvalidArgument(std::string("limit '") + name + "' has lower bound above upper bound");
        }
    }
}

void GridModel::validate() const {
    if (bus_count <= 0) throw TopologyError("grid has no buses");
    if (slack_bus < 0 || slack_bus >= bus_count) throw TopologyError("slack bus out of range");
    if (shunts.size() != bus_count) throw DimensionError("shunt vector length differs from bus count");
    if (base_injections.size() != bus_count) {
        throw DimensionError("base injection vector length differs from bus count");
    }
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto& l = lines[k];
        if (l.from < 0 || l.from >= bus_count || l.to < 0 || l.to >= bus_count) {
            throw TopologyError("line " + std::to_string(k) + " endpoint out of range");
        }
        if (l.from == l.to) throw TopologyError("line " + std::to_string(k) + " is a self-loop");
    }
    // Union-find connectivity.
    std::vector<Index> parent(static_cast<std::size_t>(bus_count));
    std::iota(parent.begin(), parent.end(), Index{0});
    auto find = [&](Index x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    Index components = bus_count;
    for (const auto& l : lines) {
        Index a = find(l.from), b = find(l.to);
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    if (components != 1) {
        throw TopologyError("network is disconnected (" + std::to_string(components) + " islands)");
    }
    limits.validate();
    fault_limits.validate();
}

RealVector BusState::angle() const {
    RealVector a(voltage.size());
    for (Index i = 0; i < voltage.size(); ++i) a[i] = std::arg(voltage[i]);
    return a;
}

BusState BusState::flat(Index n, double magnitude) {
    return BusState{ComplexVector::Constant(n, Complex(magnitude, 0.0))};
}

BusState BusState::from_polar(const RealVector& magnitude, const RealVector& angle) {
    require_same_size(magnitude.size(), angle.size(), "from_polar");
    BusState s{ComplexVector(magnitude.size())};
    for (Index i = 0; i < magnitude.size(); ++i) s.voltage[i] = std::polar(magnitude[i], angle[i]);
    return s;
}

AdmittanceMatrix build_admittance(const GridModel& grid, bool include_shunts) {
    grid.validate();
    const Index n = grid.bus_count;
    ComplexMatrix y = ComplexMatrix::Zero(n, n);
    for (const auto& l : grid.lines) {
        y(l.from, l.from) += l.admittance;
        y(l.to, l.to) += l.admittance;
        y(l.from, l.to) -= l.admittance;
        y(l.to, l.from) -= l.admittance;
    }
    if (include_shunts) {
        for (Index i = 0; i < n; ++i) y(i, i) += grid.shunts[i];
    }
    return AdmittanceMatrix{std::move(y)};
}

AdmittanceMatrix kron_reduce(const AdmittanceMatrix& y, Index keep) {
    const Index n = y.size();
    if (keep <= 0 || keep > n) throw InvalidArgument("kron_reduce: keep out of range");
    if (keep == n) return y;
    const Index e = n - keep;
    const ComplexMatrix yee = y.y.bottomRightCorner(e, e);
    Eigen::FullPivLU<ComplexMatrix> lu(yee);
    if (!lu.isInvertible()) throw SingularMatrixError("kron_reduce: internal block is singular");
    ComplexMatrix reduced =
        y.y.topLeftCorner(keep, keep) - y.y.topRightCorner(keep, e) * lu.solve(y.y.bottomLeftCorner(e, keep));
    // Restore exact symmetry lost to rounding in the solve.
    reduced = (0.5 * (reduced + reduced.transpose())).eval();
    return AdmittanceMatrix{std::move(reduced)};
}

ComplexVector ohm_currents(const AdmittanceMatrix& y, const BusState& u) {
    require_same_size(y.size(), u.size(), "ohm_currents");
    return y.y * u.voltage;
}

PowerInjections power_injections(const AdmittanceMatrix& y, const BusState& state) {
    const Index n = y.size();
    require_same_size(n, state.size(), "power_injections");
    const RealVector v = state.magnitude();
    const RealVector th = state.angle();
    PowerInjections out{RealVector::Zero(n), RealVector::Zero(n)};
    for (Index i = 0; i < n; ++i) {
        double p = 0.0, q = 0.0;
        for (Index j = 0; j < n; ++j) {
            const double g = y.y(i, j).real();
            const double b = y.y(i, j).imag();
            if (g == 0.0 && b == 0.0) continue;
            const double dth = th[i] - th[j];
            const double c = std::cos(dth), s = std::sin(dth);
            p += v[j] * (g * c + b * s);
            q += v[j] * (g * s - b * c);
        }
        out.p[i] = v[i] * p;
        out.q[i] = v[i] * q;
    }
    return out;
}

ViolationReport check_limits(std::span<const double> values, std::span<const double> lower,
                             std::span<const double> upper, const std::string& quantity) {
    if (values.size() != lower.size() || values.size() != upper.size()) {
        throw DimensionError("check_limits: bound vectors differ in length from values");
    }
    ViolationReport report;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double x = values[k];
        if (x > upper[k]) {
            report.violations.push_back({quantity, static_cast<Index>(k), x, x - upper[k]});
        } else if (x < lower[k]) {
            report.violations.push_back({quantity, static_cast<Index>(k), x, lower[k] - x});
        } else if (std::isnan(x)) {
            report.violations.push_back({quantity, static_cast<Index>(k), x, std::numeric_limits<double>::infinity()});
        }
    }
    return report;
}

ViolationReport check_limits(const RealVector& values, Bound bound, const std::string& quantity) {
    const std::vector<double> lo(static_cast<std::size_t>(values.size()), bound.lo);
    const std::vector<double> hi(static_cast<std::size_t>(values.size()), bound.hi);
    return check_limits(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())), lo, hi,
                        quantity);
}

ViolationReport check_state_limits(const AdmittanceMatrix& y, const BusState& state,
                                   const OperatingLimits& limits) {
    ViolationReport all;
    auto append = [&all](ViolationReport r) {
        all.violations.insert(all.violations.end(), r.violations.begin(), r.violations.end());
    };
    append(check_limits(state.magnitude(), limits.v, "v"));
    append(check_limits(state.angle(), limits.theta, "theta"));
    const auto s = power_injections(y, state);
    append(check_limits(s.p, limits.p, "p"));
    append(check_limits(s.q, limits.q, "q"));
    return all;
}

namespace {

Bound bound_from_json(const nlohmann::json& j, const char* key, Bound fallback) {
    if (!j.contains(key)) return fallback;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2) throw InvalidArgument(std::string("limit '") + key + "' must be [lo, hi]");
    return Bound{a[0].get<double>(), a[1].get<double>()};
}

}  // namespace

OperatingLimits limits_from_json(const nlohmann::json& j) {
    OperatingLimits l;
    try {
        l.v = bound_from_json(j, "v", l.v);
        l.theta = bound_from_json(j, "theta", l.theta);
        l.p = bound_from_json(j, "p", l.p);
        l.q = bound_from_json(j, "q", l.q);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed limits: ") + e.what());
    }
    l.validate();
    return l;
}

nlohmann::json limits_to_json(const OperatingLimits& l) {
    return {{"v", {l.v.lo, l.v.hi}}, {"theta", {l.theta.lo, l.theta.hi}}, {"p", {l.p.lo, l.p.hi}}, {"q", {l.q.lo, l.q.hi}}};
}

GridModel grid_from_json(const nlohmann::json& j) {
    GridModel g;
    try {
        g.name = j.value("name", std::string{});
        g.bus_count = j.at("bus_count").get<Index>();
        g.slack_bus = j.value("slack_bus", Index{0});
        g.slack_voltage = j.value("slack_voltage", 1.0);
        if (g.bus_count <= 0) throw TopologyError("bus_count must be positive");
        for (const auto& l : j.at("lines")) {
            g.lines.push_back(Line{l.at("from").get<Index>(), l.at("to").get<Index>(),
                                   Complex(l.at("g").get<double>(), l.at("b").get<double>())});
        }
        g.shunts = ComplexVector::Zero(g.bus_count);
        for (const auto& s : j.value("shunts", nlohmann::json::array())) {
            const Index bus = s.at("bus").get<Index>();
            if (bus < 0 || bus >= g.bus_count) throw TopologyError("shunt bus out of range");
            g.shunts[bus] += Complex(s.value("g", 0.0), s.value("b", 0.0));
        }
        g.base_injections = ComplexVector::Zero(g.bus_count);
        for (const auto& s : j.value("base_injections", nlohmann::json::array())) {
            const Index bus = s.at("bus").get<Index>();
            if (bus < 0 || bus >= g.bus_count) throw TopologyError("injection bus out of range");
            g.base_injections[bus] += Complex(s.value("p", 0.0), s.value("q", 0.0));
        }
        if (j.contains("limits")) g.limits = limits_from_json(j.at("limits"));
        g.fault_limits = j.contains("fault_limits") ? limits_from_json(j.at("fault_limits")) : g.limits;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed grid definition: ") + e.what());
    }
    g.validate();
    return g;
}

nlohmann::json grid_to_json(const GridModel& grid) {
    nlohmann::json j;
    j["name"] = grid.name;
    j["bus_count"] = grid.bus_count;
    j["slack_bus"] = grid.slack_bus;
    j["slack_voltage"] = grid.slack_voltage;
    auto& lines = j["lines"] = nlohmann::json::array();
    for (const auto& l : grid.lines) {
        lines.push_back({{"from", l.from}, {"to", l.to}, {"g", l.admittance.real()}, {"b", l.admittance.imag()}});
    }
    auto& shunts = j["shunts"] = nlohmann::json::array();
    for (Index i = 0; i < grid.shunts.size(); ++i) {
        if (grid.shunts[i] != Complex{}) {
            shunts.push_back({{"bus", i}, {"g", grid.shunts[i].real()}, {"b", grid.shunts[i].imag()}});
        }
    }
    auto& inj = j["base_injections"] = nlohmann::json::array();
    for (Index i = 0; i < grid.base_injections.size(); ++i) {
        if (grid.base_injections[i] != Complex{}) {
            inj.push_back({{"bus", i}, {"p", grid.base_injections[i].real()}, {"q", grid.base_injections[i].imag()}});
        }
    }
    j["limits"] = limits_to_json(grid.limits);
    j["fault_limits"] = limits_to_json(grid.fault_limits);
    return j;
}

GridModel load_grid(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open grid file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("grid file " + path.string() + " is not valid JSON: " + e.what());
    }
    return grid_from_json(j);
}

std::string grid_hash(const GridModel& grid) {
    const std::string canonical = grid_to_json(grid).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : canonical) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

GridModel two_bus_grid(Complex line_admittance, Complex load) {
    GridModel g;
    g.name = "two-bus";
    g.bus_count = 2;
    g.lines = {Line{0, 1, line_admittance}};
    g.shunts = ComplexVector::Zero(2);
    g.base_injections = ComplexVector::Zero(2);
    g.base_injections[1] = -load;
    return g;
}

GridModel ring_grid(Index buses, Complex line_admittance) {
    GridModel g;
    g.name = "ring";
    g.bus_count = buses;
    for (Index i = 0; i < buses; ++i) g.lines.push_back(Line{i, (i + 1) % buses, line_admittance});
    g.shunts = ComplexVector::Zero(buses);
    g.base_injections = ComplexVector::Zero(buses);
    return g;
}

}  // namespace gridbd
