#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridbd/grid.hpp"
#include "gridbd/random.hpp"

namespace gridbd {

enum class FaultType { tp, lg, dlg, ll };

inline constexpr std::array<FaultType, 4> kFaultTypes{FaultType::tp, FaultType::lg, FaultType::dlg, FaultType::ll};

std::string_view to_string(FaultType t);
FaultType fault_type_from_string(std::string_view s);

// Pre- and post-fault bus voltages a feature vector was extracted from.
struct StatePair {
    BusState pre;
    BusState post;
};

struct FaultSample {
    RealVector features;  // psi_q, length d
    int label = 0;        // 0..m-1 faulted line, m = normal operation
    std::optional<FaultType> fault_type;
    std::optional<StatePair> states;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Audit record of which rows were poisoned. Never read by the classifiers.
struct PoisonManifest {
    std::vector<std::size_t> victim_indices;
    int target_label = 0;
    std::string threat_model;
    nlohmann::json plan;
};

struct Dataset {
    std::vector<FaultSample> samples;
    Split split;
    Index feature_dim = 0;
    int class_count = 0;  // m + 1
    std::string grid_hash;
    std::uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();
    std::optional<PoisonManifest> poison_manifest;

    [[nodiscard]] int normal_label() const { return class_count - 1; }

    // Throws when the split or any sample breaks the dataset invariants.
    void validate() const;
};

// Stratified split: every class with at least two samples lands in both parts,
// and the test part holds round((1 - train_fraction) * n) samples.
Split stratified_split(const std::vector<int>& labels, double train_fraction, Rng& rng);

nlohmann::json dataset_to_json(const Dataset& dataset);
Dataset dataset_from_json(const nlohmann::json& j);

void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// One row per sample: f0..f{d-1},label
void write_dataset_csv(const Dataset& dataset, std::ostream& out);

// Rows of the feature matrix for the given indices (one sample per column).
RealMatrix feature_columns(const Dataset& dataset, const std::vector<std::size_t>& indices);
std::vector<int> labels_of(const Dataset& dataset, const std::vector<std::size_t>& indices);

}  // namespace gridbd
