#pragma once

// Victim fault-localization models trained from scratch: a fully connected
// network, a 1-D convolutional network and a one-vs-rest linear SVM.
// Feature batches are column-major: one sample per column.

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "gridbd/dataset.hpp"

namespace gridbd {

enum class ModelKind { fcnn, cnn, msvm };

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

enum class Pooling { global_average, flatten };

struct Architecture {
    std::vector<Index> hidden{128, 64};         // fcnn widths
    std::vector<Index> channels{8, 16, 16, 32};  // cnn conv channels
    Index kernel = 3;
    Pooling pooling = Pooling::flatten;  // global_average drops bus position, which localization needs

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static Architecture from_json(const nlohmann::json& j);
};

// Per-feature affine map x -> (x - mean) / scale.
struct Standardizer {
    RealVector mean;
    RealVector scale;

    // Scale is the population std floored at `min_scale`, so near-constant
    // coordinates are centred but not blown up.
    static Standardizer fit(const RealMatrix& x, double min_scale = 1.0);
    static Standardizer identity(Index d);
    [[nodiscard]] RealMatrix apply(const RealMatrix& x) const;
};

// conv layers: weight (c_out, c_in * kernel), bias c_out
// dense layers: weight (out, in), bias out
struct ModelParams {
    ModelKind kind = ModelKind::fcnn;
    Index input_dim = 0;
    int class_count = 0;
    Architecture arch;
    std::vector<RealMatrix> weights;
    std::vector<RealVector> biases;
    Standardizer normalization;

    void validate() const;
    [[nodiscard]] Index parameter_count() const;
    [[nodiscard]] bool all_finite() const;
    // Same shapes, all zero.
    [[nodiscard]] ModelParams zeros_like() const;
};

ModelParams init_model(ModelKind kind, Index input_dim, int class_count, const Architecture& arch,
                       std::uint64_t seed);

struct TrainConfig {
    int epochs = 200;
    Index batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    std::string optimizer = "sgd";
    double l2 = 1e-4;  // hinge models only

    void validate() const;
    [[nodiscard]] nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Raw class scores (K, n) for already-standardized inputs.
RealMatrix logits(const ModelParams& model, const RealMatrix& x);
RealMatrix softmax_columns(const RealMatrix& logits);

// Mean loss over the batch; fills `grad` (same shapes as model) when given.
// Inputs are already standardized.
double loss_and_gradient(const ModelParams& model, const RealMatrix& x, const std::vector<int>& labels,
                         double l2, ModelParams* grad);

// Mini-batch SGD on raw features; fits the standardizer on `x` first.
ModelParams train(ModelKind kind, const RealMatrix& x, const std::vector<int>& labels, int class_count,
                  const TrainConfig& config, const Architecture& arch = {},
                  std::vector<double>* epoch_loss = nullptr);
// Trains on the dataset's train split.
ModelParams train(ModelKind kind, const Dataset& dataset, const TrainConfig& config, const Architecture& arch = {},
                  std::vector<double>* epoch_loss = nullptr);

struct Prediction {
    int label = 0;
    RealVector scores;  // softmax probabilities for the networks, margins for the SVM
};

// Argmax with ties to the lowest index.
int argmax(const RealVector& scores);

Prediction predict(const ModelParams& model, const RealVector& features);
std::vector<int> predict_batch(const ModelParams& model, const RealMatrix& features);

// Anything that maps raw feature columns to labels.
using Predictor = std::function<std::vector<int>(const RealMatrix&)>;
Predictor predictor_of(const ModelParams& model);

// Largest relative error |a - n| / max(|a|, |n|) between backprop and central
// differences over every parameter; pairs that are both below 1e-10 count as equal.
double gradient_check(const ModelParams& model, const RealMatrix& x, const std::vector<int>& labels, double l2 = 0.0,
                      double step = 1e-5);

nlohmann::json model_to_json(const ModelParams& model);
ModelParams model_from_json(const nlohmann::json& j);
void save_model(const ModelParams& model, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace gridbd
