#include "gridbd/fault.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "gridbd/features.hpp"
#include "gridbd/parallel.hpp"

namespace gridbd {

double FaultSeverity::factor(FaultType t) const {
    switch (t) {
        case FaultType::tp: return tp;
        case FaultType::dlg: return dlg;
        case FaultType::ll: return ll;
        case FaultType::lg: return lg;
    }
    return 0.0;
}

void FaultSpec::validate() const {
    if (!(location_fraction > 0.0 && location_fraction < 1.0)) {
        throw InvalidArgument("fault location fraction must lie strictly inside (0, 1)");
    }
    if (!(fault_admittance_scale > 0.0)) throw InvalidArgument("fault admittance scale must be positive");
}

GridModel apply_fault(const GridModel& grid, const FaultSpec& spec, const FaultSeverity& severity) {
    spec.validate();
    if (spec.line_index < 0 || spec.line_index >= grid.line_count()) {
        throw InvalidArgument("fault line index " + std::to_string(spec.line_index) + " out of range");
    }
    GridModel faulted = grid;
    const Index f = grid.bus_count;
    faulted.bus_count = grid.bus_count + 1;
    faulted.shunts.conservativeResize(f + 1);
    faulted.base_injections.conservativeResize(f + 1);
    faulted.base_injections[f] = Complex{};

    const Line line = grid.lines[static_cast<std::size_t>(spec.line_index)];
    const double a = spec.location_fraction;
    // Series impedance is proportional to length, so admittance scales inversely.
    faulted.lines[static_cast<std::size_t>(spec.line_index)] = Line{line.from, f, line.admittance / a};
    faulted.lines.push_back(Line{f, line.to, line.admittance / (1.0 - a)});
    faulted.shunts[f] = Complex(spec.fault_admittance_scale * severity.factor(spec.type), 0.0);
    return faulted;
}

BusState solve_prefault(const GridModel& grid, const ComplexVector& injections, const PowerFlowOptions& options) {
    const auto y = build_admittance(grid);
    const auto start = BusState::flat(grid.bus_count, grid.slack_voltage);
    return solve_power_flow(y, grid.slack_bus, grid.slack_voltage, injections, start, options).state;
}

namespace {

void add_noise(BusState& s, double sigma, Rng& rng) {
    if (sigma <= 0.0) return;
    for (Index i = 0; i < s.size(); ++i) {
        const double re = standard_normal(rng) * sigma;
        const double im = standard_normal(rng) * sigma;
        s.voltage[i] += Complex(re, im);
    }
}

}  // namespace

SimulatedSample simulate_sample(const GridModel& grid, const ComplexVector& injections,
                                const std::optional<FaultSpec>& fault, double noise_sigma, Rng& rng,
                                const FaultSeverity& severity, const OperatingLimits* limits,
                                const OperatingLimits* fault_limits) {
    const auto y0 = build_admittance(grid);
    SimulatedSample out;
    out.pre = solve_power_flow(y0, grid.slack_bus, grid.slack_voltage, injections,
                               BusState::flat(grid.bus_count, grid.slack_voltage))
                  .state;
    if (limits && !check_state_limits(y0, out.pre, *limits).feasible()) {
        throw InvalidArgument("pre-fault state violates operating limits");
    }
    if (fault) {
        // The virtual bus carries no injection, so eliminating it is exact.
        const auto reduced = kron_reduce(build_admittance(apply_fault(grid, *fault, severity)), grid.bus_count);
        // Loads hold their pre-fault current draw through the fault interval.
        const ComplexVector currents = ohm_currents(y0, out.pre);
        out.post = solve_current_injection(reduced, grid.slack_bus, out.pre.voltage[grid.slack_bus], currents);
        if (fault_limits && !check_state_limits(reduced, out.post, *fault_limits).feasible()) {
            throw InvalidArgument("post-fault state violates operating limits");
        }
        out.label = static_cast<int>(fault->line_index);
    } else {
        out.post = out.pre;
        out.label = static_cast<int>(grid.line_count());
    }
    add_noise(out.pre, noise_sigma, rng);
    add_noise(out.post, noise_sigma, rng);
    return out;
}

void GenerationConfig::validate() const {
    if (sample_count < 2) throw InvalidArgument("sample_count must be at least 2");
    if (std::any_of(type_mix.begin(), type_mix.end(), [](double w) { return !(w >= 0.0); }) ||
        std::accumulate(type_mix.begin(), type_mix.end(), 0.0) <= 0.0) {
        throw InvalidArgument("type_mix weights must be non-negative with a positive sum");
    }
    if (normal_fraction > 1.0) throw InvalidArgument("normal_fraction must be at most 1");
    if (noise_sigma < 0.0) throw InvalidArgument("noise_sigma must be non-negative");
    if (!(load_scale_lo <= load_scale_hi) || !(fault_scale_lo <= fault_scale_hi) || fault_scale_lo <= 0.0) {
        throw InvalidArgument("invalid scale ranges");
    }
    if (!(location_lo > 0.0 && location_lo <= location_hi && location_hi < 1.0)) {
        throw InvalidArgument("location range must lie inside (0, 1)");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must lie in (0, 1)");
    if (max_redraws < 1) throw InvalidArgument("max_redraws must be positive");
    if (limits) limits->validate();
    if (fault_limits) fault_limits->validate();
}

nlohmann::json GenerationConfig::to_json() const {
    nlohmann::json j{{"sample_count", sample_count},
                     {"type_mix", type_mix},
                     {"normal_fraction", normal_fraction},
                     {"noise_sigma", noise_sigma},
                     {"load_scale", {load_scale_lo, load_scale_hi}},
                     {"fault_scale", {fault_scale_lo, fault_scale_hi}},
                     {"location", {location_lo, location_hi}},
                     {"train_fraction", train_fraction},
                     {"max_redraws", max_redraws},
                     {"severity", {{"TP", severity.tp}, {"DLG", severity.dlg}, {"LL", severity.ll}, {"LG", severity.lg}}}};
    if (limits) j["limits"] = limits_to_json(*limits);
    if (fault_limits) j["fault_limits"] = limits_to_json(*fault_limits);
    return j;
}

GenerationConfig GenerationConfig::from_json(const nlohmann::json& j) {
    GenerationConfig c;
    try {
        c.sample_count = j.value("sample_count", c.sample_count);
        c.type_mix = j.value("type_mix", c.type_mix);
        c.normal_fraction = j.value("normal_fraction", c.normal_fraction);
        c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
        auto pair = [&j](const char* key, double& lo, double& hi) {
            if (j.contains(key)) {
                lo = j.at(key).at(0).get<double>();
                hi = j.at(key).at(1).get<double>();
            }
        };
        pair("load_scale", c.load_scale_lo, c.load_scale_hi);
        pair("fault_scale", c.fault_scale_lo, c.fault_scale_hi);
        pair("location", c.location_lo, c.location_hi);
        c.train_fraction = j.value("train_fraction", c.train_fraction);
        c.max_redraws = j.value("max_redraws", c.max_redraws);
        if (j.contains("severity")) {
            const auto& s = j.at("severity");
            c.severity.tp = s.value("TP", c.severity.tp);
            c.severity.dlg = s.value("DLG", c.severity.dlg);
            c.severity.ll = s.value("LL", c.severity.ll);
            c.severity.lg = s.value("LG", c.severity.lg);
        }
        if (j.contains("limits")) c.limits = limits_from_json(j.at("limits"));
        if (j.contains("fault_limits")) c.fault_limits = limits_from_json(j.at("fault_limits"));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed generation config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

struct LabelDraw {
    int label;
    std::optional<FaultType> type;
};

LabelDraw draw_label(const GenerationConfig& config, Index lines, Rng& rng) {
    const double normal_share =
        config.normal_fraction < 0.0 ? 1.0 / static_cast<double>(lines + 1) : config.normal_fraction;
    if (uniform01(rng) < normal_share) return {static_cast<int>(lines), std::nullopt};
    const auto line = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(lines)));
    const double total = std::accumulate(config.type_mix.begin(), config.type_mix.end(), 0.0);
    double pick = uniform01(rng) * total;
    FaultType type = kFaultTypes.back();
    for (std::size_t k = 0; k < kFaultTypes.size(); ++k) {
        if (pick < config.type_mix[k]) {
            type = kFaultTypes[k];
            break;
        }
        pick -= config.type_mix[k];
    }
    return {line, type};
}

}  // namespace

Dataset generate_dataset(const GridModel& grid, const GenerationConfig& config, std::uint64_t seed, int threads) {
    config.validate();
    grid.validate();
    const OperatingLimits limits = config.limits.value_or(grid.limits);
    const OperatingLimits fault_limits = config.fault_limits.value_or(grid.fault_limits);
    const Index lines = grid.line_count();
    const auto y0 = build_admittance(grid);

    std::vector<FaultSample> samples(config.sample_count);
    parallel_for(config.sample_count, threads, [&](std::size_t i) {
        Rng rng = make_rng(seed, "sample", {i});
        const LabelDraw draw = draw_label(config, lines, rng);
        for (int attempt = 0; attempt < config.max_redraws; ++attempt) {
            ComplexVector injections = grid.base_injections;
            for (Index b = 0; b < grid.bus_count; ++b) {
                injections[b] *= uniform(rng, config.load_scale_lo, config.load_scale_hi);
            }
            std::optional<FaultSpec> fault;
            if (draw.type) {
                fault = FaultSpec{draw.label, *draw.type, uniform(rng, config.location_lo, config.location_hi),
                                  uniform(rng, config.fault_scale_lo, config.fault_scale_hi)};
            }
            try {
                auto sim = simulate_sample(grid, injections, fault, config.noise_sigma, rng, config.severity, &limits,
                                           &fault_limits);
                FaultSample s;
                s.features = extract_features(y0, sim.pre, sim.post).psi_q;
                if (!s.features.allFinite()) continue;
                s.label = sim.label;
                s.fault_type = draw.type;
                s.states = StatePair{std::move(sim.pre), std::move(sim.post)};
                samples[i] = std::move(s);
                return;
            } catch (const Error&) {
                // Solver failure or limit violation: redraw the operating point.
            }
        }
        throw ConvergenceError("sample " + std::to_string(i) + " infeasible after " +
                               std::to_string(config.max_redraws) + " redraws");
    });

    Dataset d;
    d.samples = std::move(samples);
    d.feature_dim = grid.bus_count;
    d.class_count = static_cast<int>(lines) + 1;
    d.grid_hash = grid_hash(grid);
    d.seed = seed;
    d.config = config.to_json();
    std::vector<int> labels;
    labels.reserve(d.samples.size());
    for (const auto& s : d.samples) labels.push_back(s.label);
    Rng split_rng = make_rng(seed, "split");
    d.split = stratified_split(labels, config.train_fraction, split_rng);
    d.validate();
    return d;
}

}  // namespace gridbd
