#include "gridbd/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace gridbd {

std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::fcnn: return "fcnn";
        case ModelKind::cnn: return "cnn";
        case ModelKind::msvm: return "msvm";
    }
    return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
    std::string t(s);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "fcnn") return ModelKind::fcnn;
    if (t == "cnn") return ModelKind::cnn;
    if (t == "msvm" || t == "svm") return ModelKind::msvm;
    throw InvalidArgument("unknown model kind '" + std::string(s) + "'");
}

void Architecture::validate() const {
    for (Index h : hidden) {
        if (h < 1) throw InvalidArgument("hidden widths must be positive");
    }
    if (channels.empty()) throw InvalidArgument("cnn needs at least one conv layer");
    for (Index c : channels) {
        if (c < 1) throw InvalidArgument("conv channels must be positive");
    }
    if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("conv kernel must be a positive odd width");
}

nlohmann::json Architecture::to_json() const {
    return {{"hidden", hidden},
            {"channels", channels},
            {"kernel", kernel},
            {"pooling", pooling == Pooling::global_average ? "global_average" : "flatten"}};
}

Architecture Architecture::from_json(const nlohmann::json& j) {
    Architecture a;
    try {
        if (j.contains("hidden")) a.hidden = j.at("hidden").get<std::vector<Index>>();
        if (j.contains("channels")) a.channels = j.at("channels").get<std::vector<Index>>();
        a.kernel = j.value("kernel", a.kernel);
        const auto pool = j.value("pooling", std::string("flatten"));
        if (pool == "global_average") {
            a.pooling = Pooling::global_average;
        } else if (pool == "flatten") {
            a.pooling = Pooling::flatten;
        } else {
            throw InvalidArgument("unknown pooling '" + pool + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed architecture: ") + e.what());
    }
    a.validate();
    return a;
}

Standardizer Standardizer::fit(const RealMatrix& x, double min_scale) {
    if (x.cols() == 0) throw InvalidArgument("cannot fit a standardizer on zero samples");
    Standardizer s;
    s.mean = x.rowwise().mean();
    const RealMatrix centred = x.colwise() - s.mean;
    const RealVector var = centred.rowwise().squaredNorm() / static_cast<double>(x.cols());
    s.scale = var.cwiseSqrt().cwiseMax(min_scale);
    return s;
}

Standardizer Standardizer::identity(Index d) { return {RealVector::Zero(d), RealVector::Ones(d)}; }

RealMatrix Standardizer::apply(const RealMatrix& x) const {
    require_same_size(mean.size(), x.rows(), "Standardizer::apply");
    return (x.colwise() - mean).array().colwise() / scale.array();
}

namespace {

Index conv_count(const ModelParams& m) { return static_cast<Index>(m.arch.channels.size()); }

// Input width of the final dense layer of a cnn.
Index cnn_head_width(const Architecture& arch, Index input_dim) {
    const Index c = arch.channels.back();
    return arch.pooling == Pooling::global_average ? c : c * input_dim;
}

std::vector<std::pair<Index, Index>> layer_shapes(ModelKind kind, Index d, int k, const Architecture& arch) {
    std::vector<std::pair<Index, Index>> shapes;
    switch (kind) {
        case ModelKind::fcnn: {
            Index in = d;
            for (Index h : arch.hidden) {
                shapes.emplace_back(h, in);
                in = h;
            }
            shapes.emplace_back(k, in);
            break;
        }
        case ModelKind::cnn: {
            Index in = 1;
            for (Index c : arch.channels) {
                shapes.emplace_back(c, in * arch.kernel);
                in = c;
            }
            shapes.emplace_back(k, cnn_head_width(arch, d));
            break;
        }
        case ModelKind::msvm: shapes.emplace_back(k, d); break;
    }
    return shapes;
}

}  // namespace

void ModelParams::validate() const {
    if (input_dim < 1 || class_count < 2) throw InvalidArgument("model needs d >= 1 and K >= 2");
    arch.validate();
    const auto shapes = layer_shapes(kind, input_dim, class_count, arch);
    if (weights.size() != shapes.size() || biases.size() != shapes.size()) {
        throw DimensionError("model has " + std::to_string(weights.size()) + " layers, expected " +
                             std::to_string(shapes.size()));
    }
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        if (weights[l].rows() != shapes[l].first || weights[l].cols() != shapes[l].second ||
            biases[l].size() != shapes[l].first) {
            throw DimensionError("layer " + std::to_string(l) + " has the wrong shape");
        }
    }
    require_same_size(input_dim, normalization.mean.size(), "normalization mean");
    require_same_size(input_dim, normalization.scale.size(), "normalization scale");
}

Index ModelParams::parameter_count() const {
    Index n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

bool ModelParams::all_finite() const {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    }
    return true;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams z = *this;
    for (auto& w : z.weights) w.setZero();
    for (auto& b : z.biases) b.setZero();
    return z;
}

ModelParams init_model(ModelKind kind, Index input_dim, int class_count, const Architecture& arch,
                       std::uint64_t seed) {
    arch.validate();
    ModelParams m;
    m.kind = kind;
    m.input_dim = input_dim;
    m.class_count = class_count;
    m.arch = arch;
    m.normalization = Standardizer::identity(input_dim);
    const auto shapes = layer_shapes(kind, input_dim, class_count, arch);
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        const auto [rows, cols] = shapes[l];
        Rng rng = make_rng(seed, "init", {l});
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        RealMatrix w(rows, cols);
        for (Index i = 0; i < rows; ++i) {
            for (Index j = 0; j < cols; ++j) w(i, j) = uniform(rng, -bound, bound);
        }
        m.weights.push_back(std::move(w));
        m.biases.push_back(RealVector::Zero(rows));
    }
    m.validate();
    return m;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw InvalidArgument("epochs must be positive");
    if (batch_size < 1) throw InvalidArgument("batch size must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning rate must be positive");
    if (!(l2 >= 0.0)) throw InvalidArgument("l2 must be non-negative");
    if (optimizer != "sgd") throw InvalidArgument("unsupported optimizer '" + optimizer + "'");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs},   {"batch_size", batch_size}, {"learning_rate", learning_rate},
            {"seed", seed},       {"optimizer", optimizer},   {"l2", l2}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.seed = j.value("seed", c.seed);
        c.optimizer = j.value("optimizer", c.optimizer);
        c.l2 = j.value("l2", c.l2);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed train config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

RealMatrix relu(const RealMatrix& z) { return z.cwiseMax(0.0); }

// Activations are (channels, L * batch) with column b * L + l.
RealMatrix im2col(const RealMatrix& a, Index length, Index kernel) {
    const Index channels = a.rows();
    const Index batch = a.cols() / length;
    const Index pad = kernel / 2;
    RealMatrix cols = RealMatrix::Zero(channels * kernel, a.cols());
    for (Index c = 0; c < channels; ++c) {
        for (Index j = 0; j < kernel; ++j) {
            const Index row = c * kernel + j;
            for (Index b = 0; b < batch; ++b) {
                for (Index l = 0; l < length; ++l) {
                    const Index src = l + j - pad;
                    if (src >= 0 && src < length) cols(row, b * length + l) = a(c, b * length + src);
                }
            }
        }
    }
    return cols;
}

RealMatrix col2im(const RealMatrix& cols, Index channels, Index length, Index kernel) {
    const Index batch = cols.cols() / length;
    const Index pad = kernel / 2;
    RealMatrix a = RealMatrix::Zero(channels, cols.cols());
    for (Index c = 0; c < channels; ++c) {
        for (Index j = 0; j < kernel; ++j) {
            const Index row = c * kernel + j;
            for (Index b = 0; b < batch; ++b) {
                for (Index l = 0; l < length; ++l) {
                    const Index src = l + j - pad;
                    if (src >= 0 && src < length) a(c, b * length + src) += cols(row, b * length + l);
                }
            }
        }
    }
    return a;
}

struct Forward {
    std::vector<RealMatrix> inputs;  // layer inputs (im2col'd for conv layers)
    std::vector<RealMatrix> pre;     // pre-activations of hidden layers
    RealMatrix scores;
};

Forward forward(const ModelParams& m, const RealMatrix& x) {
    require_same_size(m.input_dim, x.rows(), "model input");
    Forward f;
    const std::size_t layers = m.weights.size();
    switch (m.kind) {
        case ModelKind::msvm:
        case ModelKind::fcnn: {
            RealMatrix a = x;
            for (std::size_t l = 0; l < layers; ++l) {
                RealMatrix z = (m.weights[l] * a).colwise() + m.biases[l];
                f.inputs.push_back(std::move(a));
                if (l + 1 == layers) {
                    f.scores = std::move(z);
                } else {
                    a = relu(z);
                    f.pre.push_back(std::move(z));
                }
            }
            break;
        }
        case ModelKind::cnn: {
            const Index length = m.input_dim;
            const Index batch = x.cols();
            // One input channel: flatten the (d, B) block into (1, d * B).
            RealMatrix a = Eigen::Map<const RealMatrix>(x.data(), 1, length * batch);
            for (Index l = 0; l < conv_count(m); ++l) {
                RealMatrix cols = im2col(a, length, m.arch.kernel);
                RealMatrix z = (m.weights[l] * cols).colwise() + m.biases[l];
                f.inputs.push_back(std::move(cols));
                a = relu(z);
                f.pre.push_back(std::move(z));
            }
            const Index c = a.rows();
            RealMatrix head;
            if (m.arch.pooling == Pooling::global_average) {
                head.resize(c, batch);
                for (Index b = 0; b < batch; ++b) head.col(b) = a.middleCols(b * length, length).rowwise().mean();
            } else {
                head.resize(c * length, batch);
                for (Index b = 0; b < batch; ++b) {
                    for (Index ch = 0; ch < c; ++ch) {
                        head.col(b).segment(ch * length, length) = a.row(ch).segment(b * length, length).transpose();
                    }
                }
            }
            f.scores = (m.weights.back() * head).colwise() + m.biases.back();
            f.inputs.push_back(std::move(head));
            break;
        }
    }
    return f;
}

void check_labels(const std::vector<int>& labels, Index n, int k) {
    require_same_size(n, static_cast<Index>(labels.size()), "labels");
    for (int y : labels) {
        if (y < 0 || y >= k) throw InvalidArgument("label " + std::to_string(y) + " outside [0, K)");
    }
}

}  // namespace

RealMatrix logits(const ModelParams& model, const RealMatrix& x) { return forward(model, x).scores; }

RealMatrix softmax_columns(const RealMatrix& logits) {
    const Eigen::RowVectorXd top = logits.colwise().maxCoeff();
    RealMatrix e = (logits.rowwise() - top).array().exp();
    const Eigen::RowVectorXd sum = e.colwise().sum();
    e.array().rowwise() /= sum.array();
    return e;
}

double loss_and_gradient(const ModelParams& model, const RealMatrix& x, const std::vector<int>& labels,
                         double l2, ModelParams* grad) {
    const Index n = x.cols();
    if (n == 0) throw InvalidArgument("empty batch");
    check_labels(labels, n, model.class_count);
    Forward f = forward(model, x);
    const double inv_n = 1.0 / static_cast<double>(n);

    RealMatrix dscores;
    double loss = 0.0;
    if (model.kind == ModelKind::msvm) {
        // One-vs-rest: the true class wants score >= 1, every other <= -1.
        dscores = RealMatrix::Zero(f.scores.rows(), n);
        for (Index j = 0; j < n; ++j) {
            for (Index k = 0; k < f.scores.rows(); ++k) {
                const double y = k == labels[j] ? 1.0 : -1.0;
                const double margin = 1.0 - y * f.scores(k, j);
                if (margin > 0.0) {
                    loss += margin;
                    dscores(k, j) = -y * inv_n;
                }
            }
        }
        loss *= inv_n;
        loss += 0.5 * l2 * model.weights[0].squaredNorm();
    } else {
        const Eigen::RowVectorXd top = f.scores.colwise().maxCoeff();
        const RealMatrix shifted = f.scores.rowwise() - top;
        const Eigen::RowVectorXd lse = shifted.array().exp().colwise().sum().log();
        dscores = shifted.array().exp().rowwise() / lse.array().exp();
        for (Index j = 0; j < n; ++j) {
            loss -= shifted(labels[j], j) - lse[j];
            dscores(labels[j], j) -= 1.0;
        }
        loss *= inv_n;
        dscores *= inv_n;
    }
    if (!grad) return loss;

    *grad = model.zeros_like();
    const std::size_t layers = model.weights.size();
    RealMatrix delta = std::move(dscores);
    switch (model.kind) {
        case ModelKind::msvm:
            grad->weights[0] = delta * f.inputs[0].transpose() + l2 * model.weights[0];
            grad->biases[0] = delta.rowwise().sum();
            break;
        case ModelKind::fcnn:
            for (std::size_t l = layers; l-- > 0;) {
                grad->weights[l] = delta * f.inputs[l].transpose();
                grad->biases[l] = delta.rowwise().sum();
                if (l == 0) break;
                delta = (model.weights[l].transpose() * delta).cwiseProduct(
                    (f.pre[l - 1].array() > 0.0).cast<double>().matrix());
            }
            break;
        case ModelKind::cnn: {
            const Index length = model.input_dim;
            grad->weights.back() = delta * f.inputs.back().transpose();
            grad->biases.back() = delta.rowwise().sum();
            const RealMatrix dhead = model.weights.back().transpose() * delta;
            const Index c = model.arch.channels.back();
            RealMatrix da(c, length * n);
            for (Index b = 0; b < n; ++b) {
                for (Index ch = 0; ch < c; ++ch) {
                    if (model.arch.pooling == Pooling::global_average) {
                        da.row(ch).segment(b * length, length).setConstant(dhead(ch, b) / static_cast<double>(length));
                    } else {
                        da.row(ch).segment(b * length, length) = dhead.col(b).segment(ch * length, length).transpose();
                    }
                }
            }
            for (Index l = conv_count(model); l-- > 0;) {
                const RealMatrix dz = da.cwiseProduct((f.pre[l].array() > 0.0).cast<double>().matrix());
                grad->weights[l] = dz * f.inputs[l].transpose();
                grad->biases[l] = dz.rowwise().sum();
                if (l == 0) break;
                da = col2im(model.weights[l].transpose() * dz, model.arch.channels[l - 1], length, model.arch.kernel);
            }
            break;
        }
    }
    return loss;
}

namespace {

std::string first_non_finite(const ModelParams& g) {
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        if (!g.weights[l].allFinite()) return "weight " + std::to_string(l);
        if (!g.biases[l].allFinite()) return "bias " + std::to_string(l);
    }
    return "loss";
}

}  // namespace

ModelParams train(ModelKind kind, const RealMatrix& x, const std::vector<int>& labels, int class_count,
                  const TrainConfig& config, const Architecture& arch, std::vector<double>* epoch_loss) {
    config.validate();
    const Index n = x.cols();
    if (n == 0) throw InvalidArgument("training set is empty");
    check_labels(labels, n, class_count);
    if (!x.allFinite()) throw InvalidArgument("training features contain non-finite values");

    ModelParams model = init_model(kind, x.rows(), class_count, arch, derive_seed(config.seed, "model"));
    model.normalization = Standardizer::fit(x);
    const RealMatrix xs = model.normalization.apply(x);
    if (epoch_loss) epoch_loss->clear();

    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    ModelParams grad;
    RealMatrix xb;
    std::vector<int> yb;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng rng = make_rng(config.seed, "shuffle", {static_cast<std::uint64_t>(epoch)});
        shuffle(order, rng);
        double total = 0.0;
        for (Index start = 0; start < n; start += config.batch_size) {
            const Index len = std::min(config.batch_size, n - start);
            xb.resize(xs.rows(), len);
            yb.resize(static_cast<std::size_t>(len));
            for (Index j = 0; j < len; ++j) {
                const Index src = order[static_cast<std::size_t>(start + j)];
                xb.col(j) = xs.col(src);
                yb[static_cast<std::size_t>(j)] = labels[static_cast<std::size_t>(src)];
            }
            const double loss = loss_and_gradient(model, xb, yb, config.l2, &grad);
            if (!std::isfinite(loss) || !grad.all_finite()) {
                throw ConvergenceError("non-finite gradient in " + first_non_finite(grad) + " at epoch " +
                                       std::to_string(epoch) + ", batch starting at " + std::to_string(start));
            }
            for (std::size_t l = 0; l < model.weights.size(); ++l) {
                model.weights[l] -= config.learning_rate * grad.weights[l];
                model.biases[l] -= config.learning_rate * grad.biases[l];
            }
            total += loss * static_cast<double>(len);
        }
        if (epoch_loss) epoch_loss->push_back(total / static_cast<double>(n));
    }
    return model;
}

ModelParams train(ModelKind kind, const Dataset& dataset, const TrainConfig& config, const Architecture& arch,
                  std::vector<double>* epoch_loss) {
    return train(kind, feature_columns(dataset, dataset.split.train), labels_of(dataset, dataset.split.train),
                 dataset.class_count, config, arch, epoch_loss);
}

int argmax(const RealVector& scores) {
    if (scores.size() == 0) throw InvalidArgument("argmax of an empty score vector");
    Index best = 0;
    for (Index k = 1; k < scores.size(); ++k) {
        if (scores[k] > scores[best]) best = k;
    }
    return static_cast<int>(best);
}

Prediction predict(const ModelParams& model, const RealVector& features) {
    require_same_size(model.input_dim, features.size(), "predict");
    const RealMatrix s = logits(model, model.normalization.apply(features));
    Prediction p;
    p.scores = model.kind == ModelKind::msvm ? RealVector(s.col(0)) : RealVector(softmax_columns(s).col(0));
    p.label = argmax(s.col(0));
    return p;
}

std::vector<int> predict_batch(const ModelParams& model, const RealMatrix& features) {
    require_same_size(model.input_dim, features.rows(), "predict_batch");
    std::vector<int> out(static_cast<std::size_t>(features.cols()));
    if (features.cols() == 0) return out;
    const RealMatrix s = logits(model, model.normalization.apply(features));
    for (Index j = 0; j < s.cols(); ++j) out[static_cast<std::size_t>(j)] = argmax(s.col(j));
    return out;
}

Predictor predictor_of(const ModelParams& model) {
    return [model](const RealMatrix& x) { return predict_batch(model, x); };
}

double gradient_check(const ModelParams& model, const RealMatrix& x, const std::vector<int>& labels, double l2,
                      double step) {
    ModelParams analytic;
    loss_and_gradient(model, x, labels, l2, &analytic);
    ModelParams probe = model;
    double worst = 0.0;
    auto compare = [&](double a, double& slot) {
        const double keep = slot;
        slot = keep + step;
        const double up = loss_and_gradient(probe, x, labels, l2, nullptr);
        slot = keep - step;
        const double down = loss_and_gradient(probe, x, labels, l2, nullptr);
        slot = keep;
        const double numeric = (up - down) / (2.0 * step);
        const double scale = std::max(std::abs(a), std::abs(numeric));
        if (scale < 1e-10) return;
        worst = std::max(worst, std::abs(a - numeric) / scale);
    };
    for (std::size_t l = 0; l < probe.weights.size(); ++l) {
        for (Index i = 0; i < probe.weights[l].size(); ++i) compare(analytic.weights[l].data()[i], probe.weights[l].data()[i]);
        for (Index i = 0; i < probe.biases[l].size(); ++i) compare(analytic.biases[l][i], probe.biases[l][i]);
    }
    return worst;
}

namespace {

nlohmann::json tensor_json(const std::string& name, const RealMatrix& m) {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) values.push_back(m(i, j));
    }
    return {{"name", name}, {"shape", {m.rows(), m.cols()}}, {"values", values}};
}

RealMatrix tensor_from_json(const nlohmann::json& j) {
    const auto shape = j.at("shape").get<std::vector<Index>>();
    const auto values = j.at("values").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
        static_cast<std::size_t>(shape[0] * shape[1]) != values.size()) {
        throw DimensionError("tensor " + j.value("name", std::string("?")) + " has inconsistent shape");
    }
    RealMatrix m(shape[0], shape[1]);
    for (Index i = 0; i < shape[0]; ++i) {
        for (Index k = 0; k < shape[1]; ++k) m(i, k) = values[static_cast<std::size_t>(i * shape[1] + k)];
    }
    return m;
}

std::vector<double> as_vector(const RealVector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

nlohmann::json model_to_json(const ModelParams& model) {
    nlohmann::json tensors = nlohmann::json::array();
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        tensors.push_back(tensor_json("w" + std::to_string(l), model.weights[l]));
        tensors.push_back(tensor_json("b" + std::to_string(l), model.biases[l]));
    }
    return {{"kind", std::string(to_string(model.kind))},
            {"input_dim", model.input_dim},
            {"class_count", model.class_count},
            {"architecture", model.arch.to_json()},
            {"normalization", {{"mean", as_vector(model.normalization.mean)},
                               {"scale", as_vector(model.normalization.scale)}}},
            {"tensors", tensors}};
}

ModelParams model_from_json(const nlohmann::json& j) {
    ModelParams m;
    try {
        m.kind = model_kind_from_string(j.at("kind").get<std::string>());
        m.input_dim = j.at("input_dim").get<Index>();
        m.class_count = j.at("class_count").get<int>();
        m.arch = Architecture::from_json(j.at("architecture"));
        const auto mean = j.at("normalization").at("mean").get<std::vector<double>>();
        const auto scale = j.at("normalization").at("scale").get<std::vector<double>>();
        m.normalization.mean = Eigen::Map<const RealVector>(mean.data(), static_cast<Index>(mean.size()));
        m.normalization.scale = Eigen::Map<const RealVector>(scale.data(), static_cast<Index>(scale.size()));
        const auto& tensors = j.at("tensors");
        if (tensors.size() % 2 != 0) throw DimensionError("checkpoint tensors must come in weight/bias pairs");
        for (std::size_t t = 0; t < tensors.size(); t += 2) {
            m.weights.push_back(tensor_from_json(tensors[t]));
            const RealMatrix b = tensor_from_json(tensors[t + 1]);
            m.biases.push_back(Eigen::Map<const RealVector>(b.data(), b.size()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed checkpoint: ") + e.what());
    }
    m.validate();
    if (!m.all_finite()) throw InvalidArgument("checkpoint has non-finite parameters");
    return m;
}

void save_model(const ModelParams& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("io", "cannot write " + path.string());
    out << model_to_json(model).dump() << '\n';
    if (!out) throw Error("io", "write failed for " + path.string());
}

ModelParams load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    return model_from_json(j);
}

}  // namespace gridbd
