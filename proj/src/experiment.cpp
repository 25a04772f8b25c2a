#include "gridbd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gridbd/parallel.hpp"

namespace gridbd {

double clean_accuracy(const Predictor& predict, const RealMatrix& features, const std::vector<int>& labels) {
    require_same_size(features.cols(), static_cast<Index>(labels.size()), "clean_accuracy labels");
    if (labels.empty()) throw InvalidArgument("clean accuracy of an empty test split");
    const auto pred = predict(features);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double attack_success_rate(const Predictor& predict, const RealMatrix& triggered, const std::vector<int>& true_labels,
                           int target_label) {
    require_same_size(triggered.cols(), static_cast<Index>(true_labels.size()), "attack_success_rate labels");
    const auto pred = predict(triggered);
    std::size_t total = 0, hits = 0;
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        if (true_labels[i] == target_label) continue;
        ++total;
        hits += pred[i] == target_label;
    }
    if (total == 0) throw InvalidArgument("attack success rate has an empty denominator (every row is the target)");
    return static_cast<double>(hits) / static_cast<double>(total);
}

TriggeredSplit trigger_test_split(const Dataset& dataset, const Trigger& trigger, ThreatModel threat_model,
                                  const MeasurementPoisonContext* context, int threads) {
    trigger.validate(dataset.feature_dim);
    std::vector<std::size_t> rows;
    for (std::size_t i : dataset.split.test) {
        if (dataset.samples[i].label != trigger.target_label) rows.push_back(i);
    }
    TriggeredSplit out;
    out.features.resize(dataset.feature_dim, static_cast<Index>(rows.size()));
    out.labels.resize(rows.size());
    out.achieved_scale.assign(rows.size(), 1.0);
    std::optional<AdmittanceMatrix> y0;
    if (threat_model == ThreatModel::measurement_level) {
        if (!context || !context->grid) throw InvalidArgument("measurement-level triggers need a grid context");
        y0 = build_admittance(*context->grid);
    }
    parallel_for(rows.size(), threads, [&](std::size_t k) {
        const std::size_t i = rows[k];
        const auto& s = dataset.samples[i];
        out.labels[k] = s.label;
        if (threat_model == ThreatModel::feature_level) {
            out.features.col(static_cast<Index>(k)) = apply_trigger(s.features, trigger);
            return;
        }
        const auto r = measurement_triggered(*context, *y0, s, i, trigger);
        out.features.col(static_cast<Index>(k)) = r.features;
        out.achieved_scale[k] = r.achieved_scale;
    });
    return out;
}

double attack_success_rate(const Predictor& predict, const Dataset& dataset, const Trigger& trigger,
                           ThreatModel threat_model, const MeasurementPoisonContext* context) {
    const auto t = trigger_test_split(dataset, trigger, threat_model, context);
    return attack_success_rate(predict, t.features, t.labels, trigger.target_label);
}

std::string_view to_string(SweepVariable v) {
    switch (v) {
        case SweepVariable::poison_ratio: return "poison_ratio";
        case SweepVariable::trigger_magnitude: return "trigger_magnitude";
        case SweepVariable::nnz_entries: return "nnz_entries";
    }
    return "?";
}

SweepVariable sweep_variable_from_string(std::string_view s) {
    if (s == "poison_ratio") return SweepVariable::poison_ratio;
    if (s == "trigger_magnitude") return SweepVariable::trigger_magnitude;
    if (s == "nnz_entries") return SweepVariable::nnz_entries;
    throw InvalidArgument("unknown sweep variable '" + std::string(s) + "'");
}

namespace {

std::string_view to_string(MaskPlacement p) { return p == MaskPlacement::first ? "first" : "random"; }

MaskPlacement placement_from_string(std::string_view s) {
    if (s == "first") return MaskPlacement::first;
    if (s == "random") return MaskPlacement::random;
    throw InvalidArgument("unknown mask placement '" + std::string(s) + "'");
}

bool is_count(double v) { return v >= 1.0 && std::floor(v) == v && v < 1e9; }

}  // namespace

void ExperimentConfig::validate() const {
    if (values.empty()) throw InvalidArgument("sweep values must not be empty");
    if (trials < 1) throw InvalidArgument("trials must be at least 1");
    if (models.empty()) throw InvalidArgument("at least one model kind is required");
    if (!(poison_ratio >= 0.0 && poison_ratio <= 1.0)) throw InvalidArgument("poison_ratio must lie in [0, 1]");
    if (!std::isfinite(magnitude)) throw InvalidArgument("magnitude must be finite");
    if (nnz < 1) throw InvalidArgument("nnz must be at least 1");
    if (target_label < 0) throw InvalidArgument("target_label must be non-negative");
    for (Index e : excluded_positions) {
        if (e < 0) throw InvalidArgument("excluded positions must be non-negative");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidArgument("sweep values must be finite");
        if (variable == SweepVariable::poison_ratio && !(v >= 0.0 && v <= 1.0)) {
            throw InvalidArgument("poison ratio sweep values must lie in [0, 1]");
        }
        if (variable == SweepVariable::nnz_entries && !is_count(v)) {
            throw InvalidArgument("nnz sweep values must be positive integers");
        }
    }
    train.validate();
    arch.validate();
    generation.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
    std::vector<std::string> kinds;
    for (auto m : models) kinds.emplace_back(to_string(m));
    return {{"variable", std::string(to_string(variable))},
            {"values", values},
            {"poison_ratio", poison_ratio},
            {"magnitude", magnitude},
            {"nnz", nnz},
            {"placement", std::string(to_string(placement))},
            {"excluded_positions", excluded_positions},
            {"target_label", target_label},
            {"models", kinds},
            {"trials", trials},
            {"seed", seed},
            {"threat_model", std::string(gridbd::to_string(threat_model))},
            {"train", train.to_json()},
            {"architecture", arch.to_json()},
            {"generation", generation.to_json()},
            {"dataset_seed", dataset_seed}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        c.variable = sweep_variable_from_string(j.at("variable").get<std::string>());
        c.values = j.at("values").get<std::vector<double>>();
        c.poison_ratio = j.value("poison_ratio", c.poison_ratio);
        c.magnitude = j.value("magnitude", c.magnitude);
        c.nnz = j.value("nnz", c.nnz);
        c.placement = placement_from_string(j.value("placement", std::string("first")));
        if (j.contains("excluded_positions")) c.excluded_positions = j.at("excluded_positions").get<std::vector<Index>>();
        c.target_label = j.value("target_label", c.target_label);
        if (j.contains("models")) {
            c.models.clear();
            for (const auto& m : j.at("models")) c.models.push_back(model_kind_from_string(m.get<std::string>()));
        }
        c.trials = j.value("trials", c.trials);
        c.seed = j.value("seed", c.seed);
        c.threat_model = threat_model_from_string(j.value("threat_model", std::string("feature_level")));
        if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
        if (j.contains("architecture")) c.arch = Architecture::from_json(j.at("architecture"));
        if (j.contains("generation")) c.generation = GenerationConfig::from_json(j.at("generation"));
        c.dataset_seed = j.value("dataset_seed", c.dataset_seed);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

const PointSummary& ExperimentReport::at(ModelKind model, double value) const {
    for (const auto& p : points) {
        if (p.model == model && p.value == value) return p;
    }
    throw InvalidArgument("report has no point for " + std::string(to_string(model)) + " at " + std::to_string(value));
}

std::string config_hash(const nlohmann::json& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_tag(config.dump())));
    return buf;
}

namespace {

struct Knobs {
    double ratio;
    double magnitude;
    Index nnz;
};

Knobs knobs_at(const ExperimentConfig& c, double value) {
    Knobs k{c.poison_ratio, c.magnitude, c.nnz};
    switch (c.variable) {
        case SweepVariable::poison_ratio: k.ratio = value; break;
        case SweepVariable::trigger_magnitude: k.magnitude = value; break;
        case SweepVariable::nnz_entries: k.nnz = static_cast<Index>(value); break;
    }
    return k;
}

// Mask support for a trial. Random placements take a prefix of one per-trial
// permutation, so larger supports contain the smaller ones.
std::vector<Index> mask_positions(const ExperimentConfig& c, Index d, Index nnz, int trial) {
    std::vector<Index> all;
    for (Index i = 0; i < d; ++i) {
        if (std::find(c.excluded_positions.begin(), c.excluded_positions.end(), i) == c.excluded_positions.end()) {
            all.push_back(i);
        }
    }
    if (nnz > static_cast<Index>(all.size())) {
        throw InvalidArgument("trigger support of " + std::to_string(nnz) + " exceeds the " +
                              std::to_string(all.size()) + " allowed coordinates");
    }
    if (c.placement == MaskPlacement::random) {
        Rng rng = make_rng(c.seed, "mask", {static_cast<std::uint64_t>(trial)});
        shuffle(all, rng);
    }
    all.resize(static_cast<std::size_t>(nnz));
    std::sort(all.begin(), all.end());
    return all;
}

}  // namespace

ExperimentReport run_sweep(const Dataset& base, const ExperimentConfig& config, const GridModel* grid, int threads) {
    config.validate();
    base.validate();
    if (config.target_label >= base.class_count) throw InvalidArgument("target_label out of range for the dataset");
    if (config.threat_model == ThreatModel::measurement_level && !grid) {
        throw InvalidArgument("measurement-level sweeps need the grid");
    }

    MeasurementPoisonContext context;
    context.grid = grid;
    if (grid) context.constraints.limits = grid->limits;
    context.noise_seed = derive_seed(config.seed, "measurements");
    const MeasurementPoisonContext* ctx =
        config.threat_model == ThreatModel::measurement_level ? &context : nullptr;

    const RealMatrix test_x = feature_columns(base, base.split.test);
    const std::vector<int> test_y = labels_of(base, base.split.test);
    const std::size_t values = config.values.size();
    const std::size_t models = config.models.size();
    const auto trials = static_cast<std::size_t>(config.trials);

    // slot[(v * trials + t) * models + m]
    std::vector<TrialResult> slots(values * trials * models);
    parallel_for(values * trials, threads, [&](std::size_t unit) {
        const std::size_t v = unit / trials;
        const int t = static_cast<int>(unit % trials);
        TrialResult* out = &slots[unit * models];
        for (std::size_t m = 0; m < models; ++m) out[m].trial = t;

        std::optional<Dataset> poisoned;
        TriggeredSplit triggered;
        try {
            const Knobs k = knobs_at(config, config.values[v]);
            const auto positions = mask_positions(config, base.feature_dim, k.nnz, t);
            for (std::size_t m = 0; m < models; ++m) out[m].mask_positions = positions;
            Trigger trigger = Trigger::at(base.feature_dim, positions, k.magnitude, config.target_label);
            Rng victim_rng = make_rng(config.seed, "victims", {static_cast<std::uint64_t>(t)});
            PoisonPlan plan;
            plan.poison_ratio = k.ratio;
            plan.victim_indices = select_victims(base, k.ratio, config.target_label, victim_rng);
            plan.trigger = trigger;
            plan.threat_model = config.threat_model;
            plan.seed = config.seed;
            poisoned = poison_dataset(base, plan, ctx, 1);
            triggered = trigger_test_split(base, trigger, config.threat_model, ctx, 1);
        } catch (const std::exception& e) {
            for (std::size_t m = 0; m < models; ++m) out[m].error = e.what();
            return;
        }
        const double scale =
            triggered.achieved_scale.empty()
                ? 1.0
                : std::accumulate(triggered.achieved_scale.begin(), triggered.achieved_scale.end(), 0.0) /
                      static_cast<double>(triggered.achieved_scale.size());
        for (std::size_t m = 0; m < models; ++m) {
            try {
                TrainConfig tc = config.train;
                tc.seed = derive_seed(config.seed, "model",
                                      {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(config.models[m])});
                const ModelParams model = train(config.models[m], *poisoned, tc, config.arch);
                const Predictor predict = predictor_of(model);
                out[m].clean_accuracy = clean_accuracy(predict, test_x, test_y);
                out[m].attack_success_rate =
                    attack_success_rate(predict, triggered.features, triggered.labels, config.target_label);
                out[m].achieved_scale = scale;
            } catch (const std::exception& e) {
                out[m].error = e.what();
            }
        }
    });

    ExperimentReport report;
    report.config = config;
    report.config_hash = config_hash(config.to_json());
    report.grid_hash = base.grid_hash;
    report.dataset_seed = base.seed;
    report.class_count = base.class_count;
    report.train_size = base.split.train.size();
    report.test_size = base.split.test.size();
    for (std::size_t m = 0; m < models; ++m) {
        for (std::size_t v = 0; v < values; ++v) {
            PointSummary p;
            p.model = config.models[m];
            p.value = config.values[v];
            std::vector<double> clean, asr;
            for (std::size_t t = 0; t < trials; ++t) {
                const TrialResult& r = slots[(v * trials + t) * models + m];
                p.trials.push_back(r);
                if (r.error) continue;
                clean.push_back(r.clean_accuracy);
                asr.push_back(r.attack_success_rate);
            }
            p.clean = mean_interval(clean);
            p.asr = mean_interval(asr);
            report.points.push_back(std::move(p));
        }
    }
    return report;
}

ExperimentReport run_sweep(const GridModel& grid, const ExperimentConfig& config, int threads) {
    config.validate();
    const Dataset base = generate_dataset(grid, config.generation, config.dataset_seed, threads);
    return run_sweep(base, config, &grid, threads);
}

namespace {

nlohmann::json interval_json(const MeanInterval& m) {
    return {{"mean", m.mean},
            {"half_width", m.half_width},
            {"lo", std::max(0.0, m.mean - m.half_width)},
            {"hi", std::min(1.0, m.mean + m.half_width)},
            {"n", m.count}};
}

}  // namespace

nlohmann::json report_to_json(const ExperimentReport& report) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : report.points) {
        nlohmann::json trials = nlohmann::json::array();
        for (const auto& t : p.trials) {
            nlohmann::json jt{{"trial", t.trial},
                              {"clean_accuracy", t.clean_accuracy},
                              {"attack_success_rate", t.attack_success_rate},
                              {"achieved_scale", t.achieved_scale},
                              {"mask_positions", t.mask_positions}};
            if (t.error) jt["error"] = *t.error;
            trials.push_back(std::move(jt));
        }
        points.push_back({{"model", std::string(to_string(p.model))},
                          {"value", p.value},
                          {"clean_accuracy", interval_json(p.clean)},
                          {"attack_success_rate", interval_json(p.asr)},
                          {"trials", trials}});
    }
    return {{"provenance",
             {{"config_hash", report.config_hash},
              {"grid_hash", report.grid_hash},
              {"dataset_seed", report.dataset_seed},
              {"class_count", report.class_count},
              {"train_size", report.train_size},
              {"test_size", report.test_size}}},
            {"config", report.config.to_json()},
            {"points", points}};
}

void write_report_csv(const ExperimentReport& report, std::ostream& out) {
    out << "model,value,trials,clean_mean,clean_lo,clean_hi,asr_mean,asr_lo,asr_hi\n";
    char buf[512];
    for (const auto& p : report.points) {
        const auto lo = [](const MeanInterval& m) { return std::max(0.0, m.mean - m.half_width); };
        const auto hi = [](const MeanInterval& m) { return std::min(1.0, m.mean + m.half_width); };
        std::snprintf(buf, sizeof buf, "%s,%.10g,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      std::string(to_string(p.model)).c_str(), p.value, p.clean.count, p.clean.mean, lo(p.clean),
                      hi(p.clean), p.asr.mean, lo(p.asr), hi(p.asr));
        out << buf;
    }
}

ReportFormat report_format_from_string(std::string_view s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    throw InvalidArgument("unknown report format '" + std::string(s) + "'");
}

std::filesystem::path export_report(const ExperimentReport& report, ReportFormat format,
                                    const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("io", "cannot create " + dir.string() + ": " + ec.message());
    const auto path = dir / (format == ReportFormat::json ? "report.json" : "report.csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + path.string());
    if (format == ReportFormat::json) {
        out << report_to_json(report).dump(2) << '\n';
    } else {
        write_report_csv(report, out);
    }
    if (!out) throw Error("io", "write failed for " + path.string());
    return path;
}

}  // namespace gridbd
