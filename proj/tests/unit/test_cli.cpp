#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "gridbd/estimation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int status = 0;
    std::string err;
};

fs::path workdir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "gridbd_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

Run cli(const std::string& args) {
    const fs::path err = workdir() / "stderr.txt";
    const std::string cmd = std::string(GRIDBD_CLI) + " " + args + " > " + (workdir() / "stdout.txt").string() +
                            " 2> " + err.string();
    const int raw = std::system(cmd.c_str());
    Run r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream in(err);
    std::stringstream ss;
    ss << in.rdbuf();
    r.err = ss.str();
    return r;
}

json read(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

void write(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(); }

const std::string grid = testing::data_path("grid14.json").string();

}  // namespace

TEST_CASE("pipeline: generate, poison, train, evaluate") {
    const fs::path d = workdir();
    write(d / "gen.json", {{"sample_count", 200}});
    REQUIRE(cli("generate --grid " + grid + " --config " + (d / "gen.json").string() + " --seed 4 --format csv --out " +
                d.string())
                .status == 0);
    CHECK(fs::exists(d / "dataset.csv"));
    CHECK(read(d / "dataset.json")["records"].size() == 200);

    write(d / "plan.json", {{"ratio", 0.1}, {"target_label", 0}, {"mask_indices", {3}}, {"delta_values", {150.0}}});
    REQUIRE(cli("poison --dataset " + (d / "dataset.json").string() + " --config " + (d / "plan.json").string() +
                " --out " + d.string())
                .status == 0);
    CHECK(fs::exists(d / "poisoned.json"));

    write(d / "train.json", {{"epochs", 3}, {"architecture", {{"hidden", {16, 8}}}}});
    REQUIRE(cli("train --dataset " + (d / "poisoned.json").string() + " --model msvm --config " +
                (d / "train.json").string() + " --out " + d.string())
                .status == 0);
    CHECK(read(d / "model.json")["kind"] == "msvm");

    REQUIRE(cli("evaluate --dataset " + (d / "dataset.json").string() + " --checkpoint " + (d / "model.json").string() +
                " --config " + (d / "plan.json").string() + " --out " + d.string())
                .status == 0);
    const json m = read(d / "metrics.json");
    CHECK(m["clean_accuracy"].get<double>() >= 0.0);
    CHECK(m["attack_success_rate"].get<double>() <= 1.0);

    REQUIRE(cli("evaluate --dataset " + (d / "dataset.json").string() + " --checkpoint " + (d / "model.json").string() +
                " --format csv --out " + d.string())
                .status == 0);
    CHECK(fs::exists(d / "metrics.csv"));
}

TEST_CASE("sweep writes a report in either format") {
    const fs::path d = workdir() / "sweep";
    fs::create_directories(d);
    write(d / "exp.json", {{"variable", "poison_ratio"},
                           {"values", {0.0, 0.1}},
                           {"models", {"msvm"}},
                           {"trials", 2},
                           {"train", {{"epochs", 2}}},
                           {"generation", {{"sample_count", 200}}}});
    REQUIRE(cli("sweep --grid " + grid + " --config " + (d / "exp.json").string() + " --seed 3 --threads 2 --out " +
                d.string())
                .status == 0);
    const json r = read(d / "report.json");
    CHECK(r["points"].size() == 2);
    CHECK(r["config"]["seed"] == 3);
    REQUIRE(cli("sweep --grid " + grid + " --config " + (d / "exp.json").string() + " --format csv --out " + d.string())
                .status == 0);
    CHECK(fs::exists(d / "report.csv"));
}

TEST_CASE("detect flags a gross measurement error") {
    const fs::path d = workdir();
    const auto g = gridbd::load_grid(grid);
    const auto y = gridbd::build_admittance(g);
    const auto u = gridbd::BusState::flat(g.bus_count, g.slack_voltage);
    auto m = gridbd::measure(y, u, gridbd::MeasurementNoise{}, true, nullptr);
    write(d / "clean.json", gridbd::measurements_to_json(m));
    m.z[5] += 1.0;
    write(d / "dirty.json", gridbd::measurements_to_json(m));
    REQUIRE(cli("detect --grid " + grid + " --config " + (d / "clean.json").string() + " --out " + d.string()).status == 0);
    CHECK_FALSE(read(d / "detection.json")["flagged"].get<bool>());
    REQUIRE(cli("detect --grid " + grid + " --config " + (d / "dirty.json").string() + " --out " + d.string()).status == 0);
    CHECK(read(d / "detection.json")["flagged"].get<bool>());
}

TEST_CASE("errors exit nonzero with JSON on stderr") {
    const fs::path d = workdir();
    Run r = cli("generate --grid /nonexistent/grid.json --out " + d.string());
    CHECK(r.status != 0);
    json e = json::parse(r.err);
    CHECK(e["error"]["code"].is_string());

    r = cli("train --dataset " + (d / "dataset.json").string() + " --model rnn --out " + d.string());
    CHECK(r.status != 0);
    CHECK(json::parse(r.err)["error"]["code"] == "invalid_argument");

    r = cli("generate --format xml");
    CHECK(r.status == 2);
    CHECK(json::parse(r.err)["error"]["code"] == "usage");

    r = cli("frobnicate");
    CHECK(r.status != 0);
    CHECK(json::parse(r.err).contains("error"));
}
