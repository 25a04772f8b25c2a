// gridbd: dataset generation, poisoning, training, evaluation, sweeps and
// bad-data detection from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridbd/backdoor.hpp"
#include "gridbd/classifier.hpp"
#include "gridbd/experiment.hpp"
#include "gridbd/fault.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridbd;

namespace {

struct Common {
    std::string grid;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::string format = "json";
    int threads = 1;
};

json read_json(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw Error("io", std::string("cannot open ") + what + " " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string(what) + " " + path + " is not valid JSON: " + e.what());
    }
}

GridModel require_grid(const Common& c) {
    if (c.grid.empty()) throw InvalidArgument("--grid is required");
    return load_grid(c.grid);
}

fs::path out_dir(const Common& c) {
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw Error("io", "cannot create " + c.out + ": " + ec.message());
    return c.out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("io", "cannot write " + path.string());
    out << text;
    if (!out) throw Error("io", "write failed for " + path.string());
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

int run_generate(const Common& c) {
    const GridModel grid = require_grid(c);
    const GenerationConfig cfg = c.config.empty() ? GenerationConfig{} : GenerationConfig::from_json(read_json(c.config, "config"));
    cfg.validate();
    const Dataset ds = generate_dataset(grid, cfg, c.seed.value_or(0), c.threads);
    const fs::path dir = out_dir(c);
    save_dataset(ds, dir / "dataset.json");
    json summary{{"dataset", (dir / "dataset.json").string()},
                 {"samples", ds.samples.size()},
                 {"classes", ds.class_count},
                 {"train", ds.split.train.size()},
                 {"test", ds.split.test.size()},
                 {"grid_hash", ds.grid_hash}};
    if (c.format == "csv") {
        std::ofstream out(dir / "dataset.csv", std::ios::binary);
        if (!out) throw Error("io", "cannot write dataset.csv");
        write_dataset_csv(ds, out);
        summary["csv"] = (dir / "dataset.csv").string();
    }
    print(summary);
    return 0;
}

MeasurementPoisonContext measurement_context(const GridModel& grid, std::uint64_t seed) {
    MeasurementPoisonContext ctx;
    ctx.grid = &grid;
    ctx.constraints.limits = grid.limits;
    ctx.noise_seed = derive_seed(seed, "measurements");
    return ctx;
}

int run_poison(const Common& c, const std::string& dataset_path) {
    if (dataset_path.empty()) throw InvalidArgument("--dataset is required");
    if (c.config.empty()) throw InvalidArgument("--config <poison plan> is required");
    const Dataset ds = load_dataset(dataset_path);
    json plan_json = read_json(c.config, "poison plan");
    if (c.seed) plan_json["seed"] = *c.seed;
    const PoisonPlan plan = poison_plan_from_json(plan_json, ds);
    std::optional<GridModel> grid;
    std::optional<MeasurementPoisonContext> ctx;
    if (plan.threat_model == ThreatModel::measurement_level) {
        grid = require_grid(c);
        ctx = measurement_context(*grid, plan.seed);
    }
    const Dataset poisoned = poison_dataset(ds, plan, ctx ? &*ctx : nullptr, c.threads);
    const fs::path dir = out_dir(c);
    save_dataset(poisoned, dir / "poisoned.json");
    if (c.format == "csv") {
        std::ofstream out(dir / "poisoned.csv", std::ios::binary);
        write_dataset_csv(poisoned, out);
    }
    print({{"dataset", (dir / "poisoned.json").string()},
           {"victims", plan.victim_indices.size()},
           {"plan", poison_plan_to_json(plan)}});
    return 0;
}

int run_train(const Common& c, const std::string& dataset_path, const std::string& model_kind) {
    if (dataset_path.empty()) throw InvalidArgument("--dataset is required");
    const Dataset ds = load_dataset(dataset_path);
    TrainConfig tc;
    Architecture arch;
    if (!c.config.empty()) {
        const json j = read_json(c.config, "train config");
        tc = TrainConfig::from_json(j);
        if (j.contains("architecture")) arch = Architecture::from_json(j.at("architecture"));
    }
    if (c.seed) tc.seed = *c.seed;
    std::vector<double> history;
    const ModelParams model = train(model_kind_from_string(model_kind), ds, tc, arch, &history);
    const fs::path dir = out_dir(c);
    save_model(model, dir / "model.json");
    print({{"checkpoint", (dir / "model.json").string()},
           {"kind", std::string(to_string(model.kind))},
           {"parameters", model.parameter_count()},
           {"final_loss", history.empty() ? 0.0 : history.back()}});
    return 0;
}

int run_evaluate(const Common& c, const std::string& dataset_path, const std::string& checkpoint) {
    if (dataset_path.empty()) throw InvalidArgument("--dataset is required");
    if (checkpoint.empty()) throw InvalidArgument("--checkpoint is required");
    const Dataset ds = load_dataset(dataset_path);
    const ModelParams model = load_model(checkpoint);
    const Predictor predict = predictor_of(model);
    json metrics{{"clean_accuracy", clean_accuracy(predict, feature_columns(ds, ds.split.test),
                                                   labels_of(ds, ds.split.test))},
                 {"test_size", ds.split.test.size()}};
    if (!c.config.empty()) {
        // A poison plan doubles as the trigger description.
        json plan_json = read_json(c.config, "trigger");
        plan_json["ratio"] = 0.0;
        const PoisonPlan plan = poison_plan_from_json(plan_json, ds);
        std::optional<GridModel> grid;
        std::optional<MeasurementPoisonContext> ctx;
        if (plan.threat_model == ThreatModel::measurement_level) {
            grid = require_grid(c);
            ctx = measurement_context(*grid, c.seed.value_or(plan.seed));
        }
        const auto t = trigger_test_split(ds, plan.trigger, plan.threat_model, ctx ? &*ctx : nullptr, c.threads);
        metrics["attack_success_rate"] = attack_success_rate(predict, t.features, t.labels, plan.trigger.target_label);
        metrics["target_label"] = plan.trigger.target_label;
    }
    const fs::path dir = out_dir(c);
    if (c.format == "csv") {
        std::string text = "metric,value\n";
        for (const auto& [k, v] : metrics.items()) text += k + "," + v.dump() + "\n";
        write_text(dir / "metrics.csv", text);
    } else {
        write_text(dir / "metrics.json", metrics.dump(2) + "\n");
    }
    print(metrics);
    return 0;
}

int run_sweep_cmd(const Common& c) {
    if (c.config.empty()) throw InvalidArgument("--config <experiment config> is required");
    const GridModel grid = require_grid(c);
    json j = read_json(c.config, "experiment config");
    if (c.seed) j["seed"] = *c.seed;
    const ExperimentConfig cfg = ExperimentConfig::from_json(j);
    const ExperimentReport report = run_sweep(grid, cfg, c.threads);
    const fs::path path = export_report(report, report_format_from_string(c.format), out_dir(c));
    std::size_t failed = 0;
    for (const auto& p : report.points) {
        for (const auto& t : p.trials) failed += t.error.has_value();
    }
    print({{"report", path.string()}, {"points", report.points.size()}, {"failed_trials", failed}});
    return 0;
}

int run_detect(const Common& c) {
    if (c.config.empty()) throw InvalidArgument("--config <measurement set> is required");
    const GridModel grid = require_grid(c);
    const MeasurementSet m = measurements_from_json(read_json(c.config, "measurement set"));
    const AdmittanceMatrix y = build_admittance(grid);
    const WlsResult est = wls_estimate(y, grid.slack_bus, m, BusState::flat(grid.bus_count, grid.slack_voltage));
    const StateLayout layout{grid.bus_count, grid.slack_bus};
    const BadDataReport r = bad_data_test(est.residuals, m.sigma, layout.size());
    json out{{"flagged", r.flagged},
             {"objective", r.objective},
             {"chi2_threshold", r.chi2_threshold},
             {"degrees_of_freedom", r.degrees_of_freedom},
             {"max_normalized_residual", r.max_normalized_residual},
             {"max_residual_index", r.max_residual_index},
             {"iterations", est.iterations}};
    const fs::path dir = out_dir(c);
    if (c.format == "csv") {
        std::string text = "metric,value\n";
        for (const auto& [k, v] : out.items()) text += k + "," + v.dump() + "\n";
        write_text(dir / "detection.csv", text);
    } else {
        write_text(dir / "detection.json", out.dump(2) + "\n");
    }
    print(out);
    return 0;
}

void fail(const std::string& code, const std::string& message) {
    std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Backdoor poisoning experiments on grid fault localization"};
    app.require_subcommand(1);
    Common common;
    std::string dataset, checkpoint, model_kind = "fcnn";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--grid", common.grid, "grid definition JSON");
        sub->add_option("--config", common.config, "subcommand config JSON");
        sub->add_option("--seed", common.seed, "master seed");
        sub->add_option("--out", common.out, "output directory");
        sub->add_option("--format", common.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
        sub->add_option("--threads", common.threads, "worker threads")->check(CLI::PositiveNumber);
    };
    auto* gen = app.add_subcommand("generate", "simulate a fault dataset");
    auto* poison = app.add_subcommand("poison", "apply a poison plan to a dataset");
    auto* trn = app.add_subcommand("train", "train a victim model");
    auto* eval = app.add_subcommand("evaluate", "clean accuracy and attack success rate");
    auto* sweep = app.add_subcommand("sweep", "run a sweep experiment");
    auto* detect = app.add_subcommand("detect", "bad-data test on a measurement set");
    for (auto* s : {gen, poison, trn, eval, sweep, detect}) add_common(s);
    for (auto* s : {poison, trn, eval}) s->add_option("--dataset", dataset, "dataset JSON");
    trn->add_option("--model", model_kind, "fcnn, cnn or msvm");
    eval->add_option("--checkpoint", checkpoint, "model checkpoint JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail("usage", e.what());
        return 2;
    }

    try {
        if (*gen) return run_generate(common);
        if (*poison) return run_poison(common, dataset);
        if (*trn) return run_train(common, dataset, model_kind);
        if (*eval) return run_evaluate(common, dataset, checkpoint);
        if (*sweep) return run_sweep_cmd(common);
        if (*detect) return run_detect(common);
    } catch (const Error& e) {
        fail(e.code(), e.what());
        return 1;
    } catch (const std::exception& e) {
        fail("internal", e.what());
        return 1;
    }
    return 1;
}
