#pragma once

// Sweep experiments: vary one attack knob (poisoning ratio, trigger magnitude
// or trigger support size), train fresh victims per trial and report clean
// accuracy and attack success rate with Student-t intervals.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gridbd/backdoor.hpp"
#include "gridbd/classifier.hpp"
#include "gridbd/fault.hpp"
#include "gridbd/stats.hpp"

namespace gridbd {

// Fraction of test samples classified correctly.
double clean_accuracy(const Predictor& predict, const RealMatrix& features, const std::vector<int>& labels);

// Fraction of triggered samples whose true label is not the target that land on
// the target. `triggered` holds the already-triggered features; columns whose
// true label is the target are skipped.
double attack_success_rate(const Predictor& predict, const RealMatrix& triggered, const std::vector<int>& true_labels,
                           int target_label);

// Triggered test-split features for every non-target test row, in test order.
struct TriggeredSplit {
    RealMatrix features;
    std::vector<int> labels;
    std::vector<double> achieved_scale;  // 1 for feature-level triggers
};

TriggeredSplit trigger_test_split(const Dataset& dataset, const Trigger& trigger, ThreatModel threat_model,
                                  const MeasurementPoisonContext* context, int threads = 1);

double attack_success_rate(const Predictor& predict, const Dataset& dataset, const Trigger& trigger,
                           ThreatModel threat_model = ThreatModel::feature_level,
                           const MeasurementPoisonContext* context = nullptr);

enum class SweepVariable { poison_ratio, trigger_magnitude, nnz_entries };

std::string_view to_string(SweepVariable v);
SweepVariable sweep_variable_from_string(std::string_view s);

// Where the trigger support sits among the allowed coordinates: the leading
// ones, or a fresh random subset per trial.
enum class MaskPlacement { first, random };

struct ExperimentConfig {
    SweepVariable variable = SweepVariable::poison_ratio;
    std::vector<double> values;
    double poison_ratio = 0.1;
    double magnitude = 150.0;
    Index nnz = 1;
    MaskPlacement placement = MaskPlacement::first;
    // The slack coordinate carries fault current in every fault sample, so a
    // trigger there is never a value clean data takes. Bus 0 is the slack of the bundled grid.
    std::vector<Index> excluded_positions{0};
    int target_label = 0;
    std::vector<ModelKind> models{ModelKind::fcnn, ModelKind::cnn, ModelKind::msvm};
    int trials = 14;
    std::uint64_t seed = 0;
    ThreatModel threat_model = ThreatModel::feature_level;
    TrainConfig train;
    Architecture arch;
    GenerationConfig generation;
    std::uint64_t dataset_seed = 0;

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

struct TrialResult {
    int trial = 0;
    double clean_accuracy = 0.0;
    double attack_success_rate = 0.0;
    double achieved_scale = 1.0;  // mean over triggered test rows
    std::vector<Index> mask_positions;
    std::optional<std::string> error;
};

struct PointSummary {
    ModelKind model = ModelKind::fcnn;
    double value = 0.0;
    std::vector<TrialResult> trials;
    MeanInterval clean;  // over successful trials
    MeanInterval asr;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::string config_hash;
    std::string grid_hash;
    std::uint64_t dataset_seed = 0;
    int class_count = 0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::vector<PointSummary> points;  // model-major, then sweep value

    [[nodiscard]] const PointSummary& at(ModelKind model, double value) const;
};

// Runs every (value, trial) unit on `threads` workers. Seeds are derived from
// (config.seed, trial, model) only, so values share victims, masks and inits
// and the result does not depend on the thread count.
ExperimentReport run_sweep(const Dataset& base, const ExperimentConfig& config, const GridModel* grid,
                           int threads = 1);
// Generates the base dataset from config.generation first.
ExperimentReport run_sweep(const GridModel& grid, const ExperimentConfig& config, int threads = 1);

nlohmann::json report_to_json(const ExperimentReport& report);
void write_report_csv(const ExperimentReport& report, std::ostream& out);

enum class ReportFormat { json, csv };
ReportFormat report_format_from_string(std::string_view s);

// Writes report.json or report.csv into `dir`; returns the file path.
std::filesystem::path export_report(const ExperimentReport& report, ReportFormat format,
                                    const std::filesystem::path& dir);

std::string config_hash(const nlohmann::json& config);

}  // namespace gridbd
