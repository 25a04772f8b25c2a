#include "gridbd/backdoor.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "gridbd/parallel.hpp"

namespace gridbd {

std::string_view to_string(ThreatModel t) {
    return t == ThreatModel::feature_level ? "feature_level" : "measurement_level";
}

ThreatModel threat_model_from_string(std::string_view s) {
    if (s == "feature_level" || s == "feature") return ThreatModel::feature_level;
    if (s == "measurement_level" || s == "measurement") return ThreatModel::measurement_level;
    throw InvalidArgument("unknown threat model '" + std::string(s) + "'");
}

Index Trigger::nnz() const { return static_cast<Index>((mask.array() != 0.0).count()); }

std::vector<Index> Trigger::positions() const {
    std::vector<Index> out;
    for (Index i = 0; i < mask.size(); ++i) {
        if (mask[i] != 0.0) out.push_back(i);
    }
    return out;
}

void Trigger::validate(Index feature_dim) const {
    require_same_size(feature_dim, mask.size(), "trigger mask");
    require_same_size(feature_dim, delta.size(), "trigger delta");
    for (Index i = 0; i < mask.size(); ++i) {
        if (mask[i] != 0.0 && mask[i] != 1.0) throw InvalidArgument("trigger mask entries must be 0 or 1");
    }
    if (!delta.allFinite()) throw InvalidArgument("trigger delta must be finite");
}

Trigger Trigger::at(Index feature_dim, const std::vector<Index>& positions, double magnitude, int target_label) {
    Trigger t{RealVector::Zero(feature_dim), RealVector::Zero(feature_dim), target_label};
    for (Index p : positions) {
        if (p < 0 || p >= feature_dim) throw InvalidArgument("trigger position out of range");
        t.mask[p] = 1.0;
        t.delta[p] = magnitude;
    }
    return t;
}

RealVector apply_trigger(const RealVector& features, const Trigger& trigger) {
    trigger.validate(features.size());
    const auto keep = (1.0 - trigger.mask.array());
    return (keep * features.array() + trigger.mask.array() * trigger.delta.array()).matrix();
}

std::vector<std::size_t> select_victims(const Dataset& dataset, double ratio, int target_label, Rng& rng) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidArgument("poison ratio must lie in [0, 1]");
    if (target_label < 0 || target_label >= dataset.class_count) throw InvalidArgument("target label out of range");
    std::vector<std::size_t> pool;
    for (std::size_t i : dataset.split.train) {
        if (dataset.samples[i].label != target_label) pool.push_back(i);
    }
    const auto count = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(dataset.split.train.size())));
    if (count > pool.size()) {
        throw InvalidArgument("poison ratio too large: " + std::to_string(count) + " victims requested from a pool of " +
                              std::to_string(pool.size()) + " non-target rows");
    }
    shuffle(pool, rng);
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

PoisonPlan make_poison_plan(const Dataset& dataset, double ratio, Trigger trigger, ThreatModel threat_model,
                            std::uint64_t seed) {
    trigger.validate(dataset.feature_dim);
    Rng rng = make_rng(seed, "victims");
    PoisonPlan plan;
    plan.poison_ratio = ratio;
    plan.victim_indices = select_victims(dataset, ratio, trigger.target_label, rng);
    plan.trigger = std::move(trigger);
    plan.threat_model = threat_model;
    plan.seed = seed;
    return plan;
}

nlohmann::json poison_plan_to_json(const PoisonPlan& plan) {
    std::vector<Index> idx = plan.trigger.positions();
    std::vector<double> values;
    for (Index i : idx) values.push_back(plan.trigger.delta[i]);
    return {{"ratio", plan.poison_ratio},
            {"target_label", plan.trigger.target_label},
            {"mask_indices", idx},
            {"delta_values", values},
            {"threat_model", std::string(to_string(plan.threat_model))},
            {"seed", plan.seed}};
}

PoisonPlan poison_plan_from_json(const nlohmann::json& j, const Dataset& dataset) {
    try {
        const auto idx = j.at("mask_indices").get<std::vector<Index>>();
        const auto values = j.at("delta_values").get<std::vector<double>>();
        if (idx.size() != values.size()) throw InvalidArgument("mask_indices and delta_values differ in length");
        Trigger t = Trigger::at(dataset.feature_dim, idx, 0.0, j.at("target_label").get<int>());
        for (std::size_t k = 0; k < idx.size(); ++k) t.delta[idx[k]] = values[k];
        return make_poison_plan(dataset, j.at("ratio").get<double>(), std::move(t),
                                threat_model_from_string(j.value("threat_model", std::string("feature_level"))),
                                j.value("seed", std::uint64_t{0}));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed poison plan: ") + e.what());
    }
}

FeatureInversion invert_feature_map(const AdmittanceMatrix& y0, const RealVector& target, VoltageComponent preferred) {
    require_same_size(y0.size(), target.size(), "invert_feature_map");
    // psi_q = Yp * duq + Yq * dup: perturbing one component leaves one matrix.
    auto solve = [&](VoltageComponent c) -> std::optional<RealVector> {
        const RealMatrix m = c == VoltageComponent::imag ? y0.real() : y0.imag();
        Eigen::FullPivLU<RealMatrix> lu(m);
        lu.setThreshold(1e-12);
        if (!lu.isInvertible()) return std::nullopt;
        RealVector x = lu.solve(target);
        if (!x.allFinite()) return std::nullopt;
        return x;
    };
    const VoltageComponent other = preferred == VoltageComponent::imag ? VoltageComponent::real : VoltageComponent::imag;
    if (auto x = solve(preferred)) return FeatureInversion{preferred, std::move(*x), false};
    if (auto x = solve(other)) return FeatureInversion{other, std::move(*x), true};
    throw SingularMatrixError("both the conductance and susceptance matrices are singular");
}

namespace {

RealVector pack_perturbation(const StateLayout& layout, const FeatureInversion& inv) {
    RealVector dx = RealVector::Zero(layout.size());
    if (inv.component == VoltageComponent::real) {
        dx.head(layout.bus_count) = inv.delta;
    } else {
        for (Index b = 0; b < layout.bus_count; ++b) {
            const Index c = layout.imag_column(b);
            if (c >= 0) dx[c] = inv.delta[b];
        }
    }
    return dx;
}

}  // namespace

RealVector forward_feature_change(const AdmittanceMatrix& y0, const RealMatrix& h, const RealVector& sigma,
                                  Index slack, const RealVector& delta_s) {
    const Index n = y0.size();
    const StateLayout layout{n, slack};
    require_same_size(layout.size(), h.cols(), "forward_feature_change Jacobian");
    require_same_size(h.rows(), delta_s.size(), "forward_feature_change measurement change");
    const RealVector w = sigma.array().square().inverse();
    const RealMatrix gain = h.transpose() * w.asDiagonal() * h;
    const RealVector dx = gain.ldlt().solve(h.transpose() * w.asDiagonal() * delta_s);
    const ComplexVector shift = layout.unpack(dx, 0.0).voltage;
    // Moving the pre-fault state by `shift` moves u' - u0 by -shift.
    return -(y0.y * shift).imag();
}

ConstraintReport validate_constraints(const AdmittanceMatrix& y0, const OperatingPointEvidence& evidence,
                                      const ConstraintSet& constraints) {
    ConstraintReport report;
    const Index n = y0.size();
    if (evidence.injections.size() > 0) {
        require_same_size(2 * n, evidence.injections.size(), "validate_constraints injections");
        const RealVector model = measurement_model(y0, evidence.state, false);
        report.power_flow_residual = (evidence.injections - model).lpNorm<Eigen::Infinity>();
    }
    if (evidence.delta_s.size() > 0) {
        require_same_size(evidence.h.rows(), evidence.delta_s.size(), "validate_constraints delta_s");
        require_same_size(evidence.h.cols(), evidence.delta_x.size(), "validate_constraints delta_x");
        report.se_residual = (evidence.delta_s - evidence.h * evidence.delta_x).lpNorm<Eigen::Infinity>();
    }
    report.limits = check_state_limits(y0, evidence.state, constraints.limits);
    report.limits_ok = report.limits.feasible();
    report.power_flow_ok = !constraints.enforce_power_flow || report.power_flow_residual < kPowerFlowTolerance;
    report.se_ok = !constraints.enforce_se_consistency || report.se_residual < kSeConsistencyTolerance;
    return report;
}

MeasurementAttackResult measurement_attack(const GridModel& grid, const AdmittanceMatrix& y0,
                                           const SampleMeasurements& measurements, const Trigger& trigger,
                                           const ConstraintSet& constraints, const MeasurementAttackOptions& options) {
    const Index n = y0.size();
    const Index slack = grid.slack_bus;
    const StateLayout layout{n, slack};
    trigger.validate(n);

    MeasurementAttackResult out;
    out.clean_pre_estimate =
        wls_estimate(y0, slack, measurements.pre, BusState::flat(n, grid.slack_voltage), options.wls).estimate;
    out.clean_post_estimate = wls_estimate(y0, slack, measurements.post, out.clean_pre_estimate, options.wls).estimate;
    out.clean_features = extract_features(y0, out.clean_pre_estimate, out.clean_post_estimate).psi_q;
    const RealVector& psi = out.clean_features;
    const RealVector requested = trigger.mask.cwiseProduct(trigger.delta - psi);
    out.h = jacobian(y0, out.clean_pre_estimate, slack, measurements.pre.include_voltage_magnitude);
    if (numerical_rank(out.h) < layout.size()) throw Error("rank_deficient", "measurement Jacobian is rank deficient");

    // Raising the pre-fault state by e lowers psi by Im(Y0 e). A uq shift must
    // vanish at the slack, whose imaginary part is the angle reference.
    FeatureInversion route = invert_feature_map(y0, -requested, VoltageComponent::imag);
    if (route.component == VoltageComponent::imag &&
        std::abs(route.delta[slack]) > 1e-12 * (1.0 + route.delta.lpNorm<Eigen::Infinity>())) {
        route = invert_feature_map(y0, -requested, VoltageComponent::real);
    }
    out.component = route.component;

    struct Chain {
        RealVector dx, ds, features;
        WlsResult estimate;
        bool converged = false;
    };
    auto run_chain = [&](double scale) {
        const RealVector target = psi + scale * requested;
        Chain c;
        c.dx = scale * pack_perturbation(layout, route);
        for (int k = 0;; ++k) {
            c.ds = out.h * c.dx;
            MeasurementSet perturbed = measurements.pre;
            perturbed.z += c.ds;
            try {
                c.estimate = wls_estimate(y0, slack, perturbed, out.clean_pre_estimate, options.wls);
            } catch (const ConvergenceError&) {
                return c;  // far outside the region the estimator can track; treated as infeasible
            }
            c.features = extract_features(y0, c.estimate.estimate, out.clean_post_estimate).psi_q;
            const RealVector err = target - c.features;
            if (err.lpNorm<Eigen::Infinity>() < options.feature_tolerance) {
                c.converged = true;
                break;
            }
            if (k >= options.max_refinements) break;
            // Second-order terms of the estimator shift the result; correct along the same route.
            const FeatureInversion corr = invert_feature_map(y0, -err, route.component);
            c.dx += pack_perturbation(layout, corr);
        }
        return c;
    };
    auto feasible = [&](const Chain& c) {
        return c.converged && check_state_limits(y0, c.estimate.estimate, constraints.limits).feasible();
    };

    double scale = 1.0;
    Chain chain = run_chain(1.0);
    if (!feasible(chain)) {
        if (!check_state_limits(y0, out.clean_pre_estimate, constraints.limits).feasible()) {
            throw Error("infeasible", "operating point violates the constraint set even without a trigger");
        }
        double lo = 0.0, hi = 1.0;
        const double span = std::max(requested.lpNorm<Eigen::Infinity>(), 1e-300);
        Chain best = run_chain(0.0);
        if (!best.converged) throw ConvergenceError("attack chain does not reproduce the clean features");
        while ((hi - lo) * span > options.bisection_tolerance) {
            const double mid = 0.5 * (lo + hi);
            Chain c = run_chain(mid);
            if (feasible(c)) {
                lo = mid;
                best = std::move(c);
            } else {
                hi = mid;
            }
        }
        scale = lo;
        chain = std::move(best);
    }

    out.achieved_scale = scale;
    out.delta_x = chain.dx;
    out.delta_s = chain.ds;
    out.perturbed_pre = measurements.pre;
    out.perturbed_pre.z += chain.ds;
    out.perturbed_pre_estimate = chain.estimate.estimate;
    out.achieved_features = chain.features;
    out.achieved_trigger = trigger;
    out.achieved_trigger.delta = trigger.mask.cwiseProduct(psi + scale * (trigger.delta - psi));
    out.detection = bad_data_test(chain.estimate.residuals, measurements.pre.sigma, layout.size());

    OperatingPointEvidence evidence;
    evidence.state = out.perturbed_pre_estimate;
    evidence.injections = measurement_model(y0, evidence.state, false);
    evidence.delta_s = out.delta_s;
    evidence.delta_x = out.delta_x;
    evidence.h = out.h;
    out.constraints = validate_constraints(y0, evidence, constraints);
    return out;
}

SampleMeasurements sample_measurements(const AdmittanceMatrix& y0, const FaultSample& sample,
                                       const MeasurementNoise& noise, std::uint64_t seed, std::size_t index) {
    if (!sample.states) throw InvalidArgument("sample " + std::to_string(index) + " carries no voltage states");
    Rng rng = make_rng(seed, "measurements", {index});
    SampleMeasurements m;
    m.pre = measure(y0, sample.states->pre, noise, true, &rng);
    m.post = measure(y0, sample.states->post, noise, true, &rng);
    return m;
}

MeasurementTriggered measurement_triggered(const MeasurementPoisonContext& context, const AdmittanceMatrix& y0,
                                           const FaultSample& sample, std::size_t index, const Trigger& trigger) {
    if (!context.grid) throw InvalidArgument("measurement-level triggers need a grid and constraint context");
    const GridModel& grid = *context.grid;
    const auto m = sample_measurements(y0, sample, context.noise, context.noise_seed, index);
    try {
        const auto r = measurement_attack(grid, y0, m, trigger, context.constraints, context.options);
        return {r.achieved_features, r.achieved_scale};
    } catch (const Error& e) {
        if (e.code() != "infeasible") throw;
    }
    const BusState pre =
        wls_estimate(y0, grid.slack_bus, m.pre, BusState::flat(grid.bus_count, grid.slack_voltage), context.options.wls)
            .estimate;
    const BusState post = wls_estimate(y0, grid.slack_bus, m.post, pre, context.options.wls).estimate;
    return {extract_features(y0, pre, post).psi_q, 0.0};
}

RealVector triggered_features(const FaultSample& sample, std::size_t index, const Trigger& trigger,
                              ThreatModel threat_model, const MeasurementPoisonContext* context,
                              const AdmittanceMatrix* y0) {
    if (threat_model == ThreatModel::feature_level) return apply_trigger(sample.features, trigger);
    if (!context || !context->grid || !y0) {
        throw InvalidArgument("measurement-level triggers need a grid and constraint context");
    }
    return measurement_triggered(*context, *y0, sample, index, trigger).features;
}

Dataset poison_dataset(const Dataset& dataset, const PoisonPlan& plan, const MeasurementPoisonContext* context,
                       int threads) {
    plan.trigger.validate(dataset.feature_dim);
    if (plan.trigger.target_label < 0 || plan.trigger.target_label >= dataset.class_count) {
        throw InvalidArgument("target label out of range");
    }
    const std::vector<bool> is_train = [&] {
        std::vector<bool> v(dataset.samples.size(), false);
        for (std::size_t i : dataset.split.train) v[i] = true;
        return v;
    }();
    for (std::size_t i : plan.victim_indices) {
        if (i >= dataset.samples.size() || !is_train[i]) throw InvalidArgument("victim index is not a training row");
    }
    std::optional<AdmittanceMatrix> y0;
    if (plan.threat_model == ThreatModel::measurement_level) {
        if (!context || !context->grid) throw InvalidArgument("measurement-level poisoning needs a grid context");
        y0 = build_admittance(*context->grid);
    }

    Dataset out = dataset;
    parallel_for(plan.victim_indices.size(), threads, [&](std::size_t k) {
        const std::size_t i = plan.victim_indices[k];
        auto& s = out.samples[i];
        s.features = triggered_features(dataset.samples[i], i, plan.trigger, plan.threat_model, context,
                                        y0 ? &*y0 : nullptr);
        s.label = plan.trigger.target_label;
    });
    out.poison_manifest =
        PoisonManifest{plan.victim_indices, plan.trigger.target_label, std::string(to_string(plan.threat_model)),
                       poison_plan_to_json(plan)};
    return out;
}

}  // namespace gridbd
