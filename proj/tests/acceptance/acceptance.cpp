// Acceptance runner: `acceptance --criterion N` (1..10) or `--criterion all`.
// Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridbd/backdoor.hpp"
#include "gridbd/classifier.hpp"
#include "gridbd/estimation.hpp"
#include "gridbd/experiment.hpp"
#include "gridbd/fault.hpp"
#include "gridbd/parallel.hpp"
#include "gridbd/features.hpp"
#include "gridbd/stats.hpp"
#include "support.hpp"

using namespace gridbd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Timer {
public:
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// Shared desk-scale dataset for the three sweeps.
constexpr std::size_t kSamples = 1000;
constexpr std::uint64_t kDatasetSeed = 11;
constexpr std::uint64_t kSweepSeed = 2024;
constexpr int kTrials = 14;

const Dataset& desk_dataset() {
    static const Dataset ds = [] {
        GenerationConfig cfg;
        cfg.sample_count = kSamples;
        return generate_dataset(testing::grid14(), cfg, kDatasetSeed);
    }();
    return ds;
}

ExperimentConfig sweep_base() {
    ExperimentConfig c;
    c.trials = kTrials;
    c.seed = kSweepSeed;
    c.models = {ModelKind::fcnn, ModelKind::cnn};
    c.generation.sample_count = kSamples;
    c.dataset_seed = kDatasetSeed;
    // Line 0 ends at bus 1, where the first trigger sits; a clean model already maps
    // a big bus-1 feature to line 0. Pick a line far from it.
    c.target_label = 19;
    return c;
}

std::vector<double> asr_means(const ExperimentReport& r, ModelKind m) {
    std::vector<double> out;
    for (double v : r.config.values) out.push_back(r.at(m, v).asr.mean);
    return out;
}

std::string series(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt("%.3f", v[i]);
    return s + "]";
}

int failed_trials(const ExperimentReport& r) {
    int n = 0;
    for (const auto& p : r.points) {
        for (const auto& t : p.trials) n += t.error.has_value();
    }
    return n;
}

Outcome criterion1() {
    Timer timer;
    Rng rng(101);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const Index n = 2 + static_cast<Index>(uniform_index(rng, 30));
        AdmittanceMatrix y;
        y.y.resize(n, n);
        ComplexVector du(n);
        for (Index i = 0; i < n; ++i) {
            du[i] = Complex(uniform(rng, -1, 1), uniform(rng, -1, 1));
            for (Index j = 0; j < n; ++j) y.y(i, j) = Complex(uniform(rng, -20, 20), uniform(rng, -20, 20));
        }
        const RealVector a = psi_q_complex_form(y, du);
        const RealVector b = psi_q_expansion_form(y.real(), y.imag(), du);
        worst = std::max(worst, (a - b).lpNorm<Eigen::Infinity>());
    }
    const double t = timer.seconds();
    return {worst <= 1e-12 && t < 1.0, "max |diff| " + fmt("%.3g", worst) + ", " + fmt("%.3f", t) + " s"};
}

Outcome criterion2() {
    Timer timer;
    const GridModel g = testing::grid14();
    const auto y = build_admittance(g);
    const StateLayout layout{g.bus_count, g.slack_bus};
    Rng rng(202);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const BusState u = testing::random_state(g.bus_count, g.slack_bus, rng);
        const RealMatrix h = jacobian(y, u, g.slack_bus, true);
        const RealVector x = layout.pack(u);
        const double pinned = u.voltage[g.slack_bus].imag();
        // p and q are quadratic in x, so a wide step only costs truncation in |v|
        const double step = 1e-4;
        for (Index c = 0; c < layout.size(); ++c) {
            RealVector xp = x, xm = x;
            xp[c] += step;
            xm[c] -= step;
            const RealVector fd = (measurement_model(y, layout.unpack(xp, pinned), true) -
                                   measurement_model(y, layout.unpack(xm, pinned), true)) /
                                  (2 * step);
            for (Index r = 0; r < fd.size(); ++r) {
                const double scale = std::max(std::abs(fd[r]), std::abs(h(r, c)));
                if (scale < 1e-8) continue;
                worst = std::max(worst, std::abs(fd[r] - h(r, c)) / scale);
            }
        }
    }
    const double t = timer.seconds();
    return {worst < 1e-5 && t < 30.0, "max rel err " + fmt("%.3g", worst) + ", " + fmt("%.2f", t) + " s"};
}

// Clean and attacked estimates recomputed from flat starts, independent of the
// attack's own warm starts.
struct Reestimate {
    RealVector clean;
    RealVector attacked;
};

Reestimate reestimate(const GridModel& g, const AdmittanceMatrix& y, const SampleMeasurements& m,
                      const MeasurementSet& perturbed) {
    const BusState flat = BusState::flat(g.bus_count, g.slack_voltage);
    const BusState pre = wls_estimate(y, g.slack_bus, m.pre, flat).estimate;
    const BusState post = wls_estimate(y, g.slack_bus, m.post, flat).estimate;
    const BusState pre_attacked = wls_estimate(y, g.slack_bus, perturbed, flat).estimate;
    return {extract_features(y, pre, post).psi_q, extract_features(y, pre_attacked, post).psi_q};
}

Outcome criterion3() {
    Timer timer;
    const GridModel g = testing::grid14();
    const auto y = build_admittance(g);
    const Dataset& ds = desk_dataset();
    ConstraintSet constraints;
    constraints.limits = g.limits;
    Rng rng(303);
    const int nnz_options[] = {1, 2, 4};
    double worst = 0.0, min_scale = 1.0;
    int done = 0;
    for (int k = 0; k < 100; ++k) {
        const std::size_t idx = uniform_index(rng, ds.samples.size());
        const Index nnz = nnz_options[k % 3];
        std::vector<Index> pos;
        for (Index p = 0; p < ds.feature_dim; ++p) pos.push_back(p);
        shuffle(pos, rng);
        pos.resize(static_cast<std::size_t>(nnz));
        Trigger trigger = Trigger::at(ds.feature_dim, pos, 0.0, 0);
        for (Index p : pos) trigger.delta[p] = uniform(rng, -50.0, 50.0);

        const auto m = sample_measurements(y, ds.samples[idx], MeasurementNoise{}, 77, idx);
        const auto r = measurement_attack(g, y, m, trigger, constraints);
        const Reestimate re = reestimate(g, y, m, r.perturbed_pre);
        // Oracle: the trigger the attack claims, applied to independently estimated clean features.
        const RealVector expected = apply_trigger(re.clean, r.achieved_trigger);
        worst = std::max(worst, (re.attacked - expected).lpNorm<Eigen::Infinity>());
        min_scale = std::min(min_scale, r.achieved_scale);
        ++done;
    }
    const double t = timer.seconds();
    return {done == 100 && worst <= 1e-4 && t < 120.0,
            std::to_string(done) + " triggers, max feature err " + fmt("%.3g", worst) + ", min achieved scale " +
                fmt("%.3g", min_scale) + ", " + fmt("%.1f", t) + " s"};
}

Outcome criterion4() {
    Timer timer;
    const GridModel g = testing::grid14();
    const auto y = build_admittance(g);
    const Dataset& ds = desk_dataset();
    const StateLayout layout{g.bus_count, g.slack_bus};
    const BusState flat = BusState::flat(g.bus_count, g.slack_voltage);
    ConstraintSet constraints;
    constraints.limits = g.limits;
    Rng rng(404);
    const int n = 600;
    int clean_flags = 0, attack_flags = 0, random_flags = 0, consistent = 0, infeasible = 0;
    auto flagged = [&](const MeasurementSet& set) {
        const auto est = wls_estimate(y, g.slack_bus, set, flat);
        return bad_data_test(est.residuals, set.sigma, layout.size()).flagged;
    };
    int attacked = 0;
    for (std::size_t k = 0; attacked < n; ++k) {
        const std::size_t idx = k % ds.samples.size();
        const auto m = sample_measurements(y, ds.samples[idx], MeasurementNoise{}, 4040, k);
        const Index pos = 1 + static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(ds.feature_dim - 1)));
        const double mag = uniform(rng, 0, 1) < 0.5 ? -50.0 : 50.0;
        MeasurementAttackResult r;
        try {
            r = measurement_attack(g, y, m, Trigger::at(ds.feature_dim, {pos}, mag, 0), constraints);
        } catch (const Error& e) {
            if (e.code() != "infeasible") throw;
            ++infeasible;  // noisy clean estimate already outside the limits; nothing to attack
            continue;
        }
        ++attacked;
        consistent += r.constraints.se_ok;
        clean_flags += flagged(m.pre);
        attack_flags += flagged(r.perturbed_pre);

        RealVector dir(r.delta_s.size());
        for (Index i = 0; i < dir.size(); ++i) dir[i] = standard_normal(rng);
        MeasurementSet random = m.pre;
        random.z += dir.normalized() * r.delta_s.norm();
        try {
            random_flags += flagged(random);
        } catch (const ConvergenceError&) {
            ++random_flags;  // an estimator that cannot fit the data is an alarm too
        }
    }
    const double clean = double(clean_flags) / n, attack = double(attack_flags) / n, random = double(random_flags) / n;
    const double t = timer.seconds();
    const bool ok = consistent == n && std::abs(attack - 0.05) <= 0.03 && random >= 2.0 * 0.05 && random >= 2.0 * clean &&
                    t < 120.0;
    return {ok, std::to_string(consistent) + "/" + std::to_string(n) + " SE-consistent (" + std::to_string(infeasible) +
                    " infeasible draws skipped); flag rate clean " +
                    fmt("%.3f", clean) + ", attacked " + fmt("%.3f", attack) + ", equal-norm random " +
                    fmt("%.3f", random) + ", " + fmt("%.1f", t) + " s"};
}

Outcome criterion5() {
    Timer timer;
    ExperimentConfig c = sweep_base();
    c.variable = SweepVariable::poison_ratio;
    c.values = {0.0, 0.02, 0.04, 0.06, 0.08, 0.10};
    c.magnitude = 150.0;
    c.nnz = 1;
    const ExperimentReport r = run_sweep(desk_dataset(), c, nullptr, available_threads());
    bool ok = failed_trials(r) == 0;
    std::string detail;
    for (ModelKind m : c.models) {
        const auto asr = asr_means(r, m);
        const double rho = spearman(c.values, asr);
        const double base = r.at(m, 0.0).clean.mean;
        double drop = 0.0;
        for (double v : c.values) drop = std::max(drop, base - r.at(m, v).clean.mean);
        ok = ok && rho > 0.9 && asr.back() >= 0.90 && drop <= 0.05;
        detail += std::string(to_string(m)) + " asr " + series(asr) + " rho " + fmt("%.3f", rho) + " max clean drop " +
                  fmt("%.3f", drop) + "; ";
    }
    const double t = timer.seconds();
    ok = ok && t < 900.0;
    return {ok, detail + fmt("%.0f", t) + " s"};
}

Outcome criterion6() {
    Timer timer;
    ExperimentConfig c = sweep_base();
    c.models = {ModelKind::fcnn};
    c.variable = SweepVariable::trigger_magnitude;
    c.values = {-200, -150, -100, -50, 0, 50, 100, 150, 200};
    c.poison_ratio = 0.10;
    const ExperimentReport r = run_sweep(desk_dataset(), c, nullptr, available_threads());
    const auto asr = asr_means(r, ModelKind::fcnn);
    const double chance = 1.0 / desk_dataset().class_count;
    const double at0 = r.at(ModelKind::fcnn, 0.0).asr.mean;
    const double lo = asr.front(), hi = asr.back();
    const double t = timer.seconds();
    const bool ok = failed_trials(r) == 0 && at0 <= chance + 0.1 && lo >= 0.8 && hi >= 0.8 && t < 900.0;
    return {ok, "fcnn asr " + series(asr) + ", chance " + fmt("%.3f", chance) + ", " + fmt("%.0f", t) + " s"};
}

Outcome criterion7() {
    Timer timer;
    ExperimentConfig c = sweep_base();
    c.variable = SweepVariable::nnz_entries;
    c.values = {1, 2, 4, 8};
    c.poison_ratio = 0.01;
    c.magnitude = 50.0;
    c.placement = MaskPlacement::random;
    const ExperimentReport r = run_sweep(desk_dataset(), c, nullptr, available_threads());

    // Baseline: same seeds, no poisoning.
    ExperimentConfig b = c;
    b.variable = SweepVariable::poison_ratio;
    b.values = {0.0};
    const ExperimentReport base = run_sweep(desk_dataset(), b, nullptr, available_threads());

    bool ok = failed_trials(r) == 0 && failed_trials(base) == 0;
    std::string detail;
    for (ModelKind m : c.models) {
        const auto asr = asr_means(r, m);
        bool increasing = true;
        for (std::size_t i = 1; i < asr.size(); ++i) increasing = increasing && asr[i] > asr[i - 1];
        const double gain = asr.back() - asr.front();
        const double clean0 = base.at(m, 0.0).clean.mean;
        double drop = 0.0;
        for (double v : c.values) drop = std::max(drop, clean0 - r.at(m, v).clean.mean);
        ok = ok && increasing && gain >= 0.15 && drop <= 0.05;
        detail += std::string(to_string(m)) + " asr " + series(asr) + " gain " + fmt("%.3f", gain) +
                  (increasing ? "" : " (not strictly increasing)") + " max clean drop " + fmt("%.3f", drop) + "; ";
    }
    const double t = timer.seconds();
    ok = ok && t < 900.0;
    return {ok, detail + fmt("%.0f", t) + " s"};
}

Outcome criterion8() {
    Timer timer;
    Rng rng(808);
    const Index d = 7;
    const int k = 3;
    RealMatrix x(d, 5);
    for (Index j = 0; j < x.cols(); ++j) {
        for (Index i = 0; i < d; ++i) x(i, j) = standard_normal(rng);
    }
    const std::vector<int> labels{0, 2, 1, 1, 2};
    struct Case {
        const char* name;
        ModelKind kind;
        Pooling pooling;
        double l2;
    };
    const Case cases[] = {{"fcnn", ModelKind::fcnn, Pooling::flatten, 0.0},
                          {"cnn-flatten", ModelKind::cnn, Pooling::flatten, 0.0},
                          {"cnn-gap", ModelKind::cnn, Pooling::global_average, 0.0},
                          {"msvm", ModelKind::msvm, Pooling::flatten, 1e-3}};
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        Architecture a;
        a.hidden = {6, 5};
        a.channels = {3, 4};
        a.pooling = c.pooling;
        ModelParams m = init_model(c.kind, d, k, a, 5);
        for (auto& b : m.biases) {
            for (Index i = 0; i < b.size(); ++i) b[i] = uniform(rng, -0.3, 0.3);
        }
        const double err = gradient_check(m, x, labels, c.l2);
        ok = ok && err < 1e-4;
        detail += std::string(c.name) + " " + fmt("%.2g", err) + "; ";
    }
    const double t = timer.seconds();
    return {ok && t < 10.0, detail + fmt("%.2f", t) + " s"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome criterion9() {
    Timer timer;
    const GridModel g = testing::grid14();
    const fs::path root = fs::temp_directory_path() / "gridbd_acceptance_determinism";
    fs::remove_all(root);
    bool ok = true;
    std::string detail;
    for (ThreatModel tm : {ThreatModel::feature_level, ThreatModel::measurement_level}) {
        ExperimentConfig c;
        c.variable = SweepVariable::poison_ratio;
        c.values = {0.0, 0.05, 0.1};
        c.models = {ModelKind::fcnn, ModelKind::cnn, ModelKind::msvm};
        c.trials = 3;
        c.seed = 99;
        c.threat_model = tm;
        c.magnitude = tm == ThreatModel::feature_level ? 150.0 : 50.0;
        c.train.epochs = 20;
        c.generation.sample_count = 300;
        c.dataset_seed = 5;
        std::vector<std::string> bytes;
        for (int threads : {1, 1, 4}) {
            const fs::path dir = root / (std::string(to_string(tm)) + "_" + std::to_string(bytes.size()));
            fs::create_directories(dir);
            bytes.push_back(slurp(export_report(run_sweep(g, c, threads), ReportFormat::json, dir)));
        }
        const bool same = bytes[0] == bytes[1] && bytes[0] == bytes[2] && !bytes[0].empty();
        ok = ok && same;
        detail += std::string(to_string(tm)) + (same ? " identical" : " DIFFER") + " (" +
                  std::to_string(bytes[0].size()) + " bytes); ";
    }
    fs::remove_all(root);
    const double t = timer.seconds();
    return {ok && t < 300.0, detail + "serial x2 vs 4 threads, " + fmt("%.1f", t) + " s"};
}

Outcome criterion10() {
    Timer timer;
    const GridModel g = testing::grid14();
    const auto y = build_admittance(g);
    Rng rng(1010);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const BusState u = testing::random_state(g.bus_count, g.slack_bus, rng);
        const auto m = measure(y, u, MeasurementNoise{}, true, nullptr);
        const auto r = wls_estimate(y, g.slack_bus, m, BusState::flat(g.bus_count, g.slack_voltage));
        worst = std::max(worst, (r.estimate.voltage - u.voltage).cwiseAbs().maxCoeff());
    }
    const double t = timer.seconds();
    return {worst <= 1e-7 && t < 10.0, "max state err " + fmt("%.3g", worst) + ", " + fmt("%.3f", t) + " s"};
}

const std::vector<std::pair<const char*, std::function<Outcome()>>> kCriteria{
    {"feature dual-form equivalence", criterion1},
    {"measurement Jacobian vs finite differences", criterion2},
    {"attack chain round trip", criterion3},
    {"stealth against bad-data detection", criterion4},
    {"poisoning-ratio sweep trend", criterion5},
    {"trigger-magnitude sweep trend", criterion6},
    {"trigger-size sweep trend", criterion7},
    {"classifier gradient checks", criterion8},
    {"sweep determinism", criterion9},
    {"WLS round trip", criterion10},
};

}  // namespace

int main(int argc, char** argv) {
    std::string which = "all";
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--criterion" && i + 1 < argc) which = argv[++i];
    }
    std::vector<std::size_t> run;
    if (which == "all") {
        for (std::size_t i = 0; i < kCriteria.size(); ++i) run.push_back(i);
    } else {
        const int n = std::atoi(which.c_str());
        if (n < 1 || n > static_cast<int>(kCriteria.size())) {
            std::cerr << "usage: acceptance --criterion <1-10|all>\n";
            return 2;
        }
        run.push_back(static_cast<std::size_t>(n - 1));
    }
    int failures = 0;
    for (std::size_t i : run) {
        Outcome o;
        try {
            o = kCriteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << kCriteria[i].first
                  << "): " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
