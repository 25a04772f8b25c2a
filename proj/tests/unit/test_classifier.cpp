#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "gridbd/classifier.hpp"
#include "gridbd/random.hpp"

using namespace gridbd;

namespace {

// Small architecture so finite differences stay cheap.
Architecture tiny() {
    Architecture a;
    a.hidden = {7, 5};
    a.channels = {3, 4};
    return a;
}

RealMatrix random_matrix(Index r, Index c, Rng& rng, double scale = 1.0) {
    RealMatrix m(r, c);
    for (Index j = 0; j < c; ++j) {
        for (Index i = 0; i < r; ++i) m(i, j) = scale * standard_normal(rng);
    }
    return m;
}

// Non-zero biases keep the ReLU units away from their kink.
ModelParams jittered(ModelKind kind, Index d, int k, std::uint64_t seed) {
    ModelParams m = init_model(kind, d, k, tiny(), seed);
    Rng rng(seed + 1);
    for (auto& b : m.biases) {
        for (Index i = 0; i < b.size(); ++i) b[i] = uniform(rng, -0.3, 0.3);
    }
    return m;
}

// Gaussian blobs around well separated centres.
void blobs(Index d, int k, Index per_class, std::uint64_t seed, RealMatrix& x, std::vector<int>& y) {
    Rng rng(seed);
    const RealMatrix centres = random_matrix(d, k, rng, 4.0);
    x.resize(d, k * per_class);
    y.clear();
    for (int c = 0; c < k; ++c) {
        for (Index i = 0; i < per_class; ++i) {
            const Index col = c * per_class + i;
            x.col(col) = centres.col(c) + random_matrix(d, 1, rng, 0.3);
            y.push_back(c);
        }
    }
}

double accuracy(const ModelParams& m, const RealMatrix& x, const std::vector<int>& y) {
    const auto p = predict_batch(m, x);
    int hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hit += p[i] == y[i];
    return double(hit) / double(y.size());
}

}  // namespace

TEST_CASE("backprop matches central differences for every model") {
    Rng rng(5);
    const Index d = 9;
    const int k = 4;
    const RealMatrix x = random_matrix(d, 6, rng);
    const std::vector<int> labels{0, 3, 1, 2, 3, 0};
    CHECK(gradient_check(jittered(ModelKind::fcnn, d, k, 1), x, labels) < 1e-6);
    CHECK(gradient_check(jittered(ModelKind::cnn, d, k, 2), x, labels) < 1e-6);

    ModelParams gap = init_model(ModelKind::cnn, d, k, [] {
        Architecture a = tiny();
        a.pooling = Pooling::global_average;
        return a;
    }(), 3);
    for (auto& b : gap.biases) b.setConstant(0.1);
    CHECK(gradient_check(gap, x, labels) < 1e-6);

    // the hinge is not differentiable at margin 1; random inputs avoid it almost surely
    CHECK(gradient_check(jittered(ModelKind::msvm, d, k, 4), x, labels, 1e-3) < 1e-6);
}

TEST_CASE("softmax columns are distributions and uniform logits cost ln K") {
    Rng rng(2);
    const RealMatrix z = random_matrix(5, 4, rng, 30.0);
    const RealMatrix p = softmax_columns(z);
    for (Index j = 0; j < p.cols(); ++j) CHECK(p.col(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.allFinite());

    ModelParams m = init_model(ModelKind::fcnn, 3, 6, tiny(), 1);
    m.weights.back().setZero();
    m.biases.back().setZero();
    const RealMatrix x = random_matrix(3, 5, rng);
    CHECK(loss_and_gradient(m, x, {0, 1, 2, 3, 4}, 0.0, nullptr) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("hinge loss of a zero model is K - 1 per sample") {
    // every wrong class contributes max(0, 1 + 0) and the right class max(0, 1 - 0)
    ModelParams m = init_model(ModelKind::msvm, 4, 3, {}, 1).zeros_like();
    Rng rng(1);
    const double loss = loss_and_gradient(m, random_matrix(4, 7, rng), {0, 1, 2, 0, 1, 2, 0}, 0.0, nullptr);
    CHECK(loss == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("argmax breaks ties toward the lowest index") {
    CHECK(argmax(RealVector::Constant(4, 0.25)) == 0);
    RealVector s(4);
    s << 0.1, 0.4, 0.4, 0.1;
    CHECK(argmax(s) == 1);
    CHECK_THROWS_AS(argmax(RealVector()), InvalidArgument);
}

TEST_CASE("each model separates well separated blobs") {
    RealMatrix x;
    std::vector<int> y;
    blobs(10, 5, 40, 9, x, y);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.seed = 4;
    for (ModelKind kind : {ModelKind::fcnn, ModelKind::cnn, ModelKind::msvm}) {
        CAPTURE(to_string(kind));
        std::vector<double> losses;
        const ModelParams m = train(kind, x, y, 5, cfg, tiny(), &losses);
        CHECK(accuracy(m, x, y) >= 0.99);
        CHECK(losses.size() == 60);
        CHECK(losses.back() < losses.front());
    }
}

TEST_CASE("training is reproducible from the seed") {
    RealMatrix x;
    std::vector<int> y;
    blobs(6, 3, 20, 2, x, y);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 17;
    const auto a = model_to_json(train(ModelKind::cnn, x, y, 3, cfg, tiny())).dump();
    const auto b = model_to_json(train(ModelKind::cnn, x, y, 3, cfg, tiny())).dump();
    CHECK(a == b);
    cfg.seed = 18;
    CHECK(model_to_json(train(ModelKind::cnn, x, y, 3, cfg, tiny())).dump() != a);
}

TEST_CASE("checkpoint round trip predicts identically") {
    RealMatrix x;
    std::vector<int> y;
    blobs(8, 4, 10, 3, x, y);
    TrainConfig cfg;
    cfg.epochs = 3;
    for (ModelKind kind : {ModelKind::fcnn, ModelKind::cnn, ModelKind::msvm}) {
        const ModelParams m = train(kind, x, y, 4, cfg, tiny());
        const auto path = std::filesystem::temp_directory_path() / ("gridbd_model_" + std::string(to_string(kind)) + ".json");
        save_model(m, path);
        const ModelParams back = load_model(path);
        std::filesystem::remove(path);
        CHECK(logits(back, back.normalization.apply(x)) == logits(m, m.normalization.apply(x)));
        CHECK(back.parameter_count() == m.parameter_count());
    }
    CHECK_THROWS_AS(model_from_json(nlohmann::json{{"kind", "fcnn"}}), InvalidArgument);
}

TEST_CASE("parameter counts follow the layer shapes") {
    const ModelParams f = init_model(ModelKind::fcnn, 14, 21, {}, 1);
    CHECK(f.parameter_count() == (14 * 128 + 128) + (128 * 64 + 64) + (64 * 21 + 21));
    const ModelParams s = init_model(ModelKind::msvm, 14, 21, {}, 1);
    CHECK(s.parameter_count() == 14 * 21 + 21);
    const ModelParams c = init_model(ModelKind::cnn, 14, 21, {}, 1);
    const Index conv = (8 * 3 + 8) + (16 * 24 + 16) + (16 * 48 + 16) + (32 * 48 + 32);
    CHECK(c.parameter_count() == conv + 32 * 14 * 21 + 21);
}

TEST_CASE("a runaway learning rate is reported, not silently trained") {
    RealMatrix x;
    std::vector<int> y;
    blobs(6, 3, 20, 2, x, y);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.learning_rate = 1e300;  // one step overflows the weights
    try {
        train(ModelKind::fcnn, x, y, 3, cfg, tiny());
        FAIL("expected divergence");
    } catch (const ConvergenceError& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("standardizer floors the scale") {
    RealMatrix x(2, 4);
    x << 1, 2, 3, 4, 10, 10, 10, 10.5;
    const Standardizer s = Standardizer::fit(x, 1.0);
    CHECK(s.mean[0] == doctest::Approx(2.5));
    CHECK(s.scale[0] == doctest::Approx(std::sqrt(1.25)));
    CHECK(s.scale[1] == 1.0);
    CHECK(s.apply(x).row(0).mean() == doctest::Approx(0.0));
}

TEST_CASE("invalid configurations are rejected") {
    TrainConfig cfg;
    cfg.optimizer = "adam";
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    Architecture a;
    a.kernel = 0;
    CHECK_THROWS_AS(a.validate(), InvalidArgument);
    CHECK_THROWS_AS(model_kind_from_string("rnn"), InvalidArgument);
    RealMatrix x = RealMatrix::Zero(3, 2);
    CHECK_THROWS(train(ModelKind::fcnn, x, {0, 5}, 3, TrainConfig{}, tiny()));
}
