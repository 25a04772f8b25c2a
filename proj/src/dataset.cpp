#include "gridbd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

namespace gridbd {

std::string_view to_string(FaultType t) {
    switch (t) {
        case FaultType::tp: return "TP";
        case FaultType::lg: return "LG";
        case FaultType::dlg: return "DLG";
        case FaultType::ll: return "LL";
    }
    return "?";
}

FaultType fault_type_from_string(std::string_view s) {
    for (FaultType t : kFaultTypes) {
        if (to_string(t) == s) return t;
    }
    throw InvalidArgument("unknown fault type '" + std::string(s) + "'");
}

void Dataset::validate() const {
    if (class_count < 1) throw InvalidArgument("dataset has no classes");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.features.size() != feature_dim) {
            throw DimensionError("sample " + std::to_string(i) + " feature length differs from dataset dimension");
        }
        if (s.label < 0 || s.label >= class_count) {
            throw InvalidArgument("sample " + std::to_string(i) + " label out of range");
        }
        if (!s.features.allFinite()) throw InvalidArgument("sample " + std::to_string(i) + " has non-finite features");
    }
    std::vector<int> seen(samples.size(), 0);
    for (const auto* part : {&split.train, &split.test}) {
        for (std::size_t idx : *part) {
            if (idx >= samples.size()) throw InvalidArgument("split index out of range");
            if (seen[idx]++) throw InvalidArgument("split index " + std::to_string(idx) + " appears twice");
        }
    }
    if (split.train.size() + split.test.size() != samples.size()) {
        throw InvalidArgument("split does not cover every sample");
    }
}

Split stratified_split(const std::vector<int>& labels, double train_fraction, Rng& rng) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw InvalidArgument("train fraction must lie in (0, 1)");
    }
    const std::size_t n = labels.size();
    if (n < 2) throw InvalidArgument("too few samples for stratification");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

    const auto test_total = static_cast<std::size_t>(std::llround((1.0 - train_fraction) * static_cast<double>(n)));
    struct Quota {
        int label;
        std::size_t size;
        double exact;
        std::size_t take;
        std::size_t lo, hi;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (auto& [label, idx] : by_class) {
        shuffle(idx, rng);
        const double exact = (1.0 - train_fraction) * static_cast<double>(idx.size());
        Quota q{label, idx.size(), exact, static_cast<std::size_t>(std::floor(exact)), 0, idx.size()};
        if (idx.size() >= 2) {
            q.lo = 1;
            q.hi = idx.size() - 1;
        }
        q.take = std::clamp(q.take, q.lo, q.hi);
        assigned += q.take;
        quotas.push_back(q);
    }

    // Largest-remainder adjustment toward the exact test total.
    while (assigned < test_total) {
        Quota* best = nullptr;
        for (auto& q : quotas) {
            if (q.take >= q.hi) continue;
            if (!best || q.exact - static_cast<double>(q.take) > best->exact - static_cast<double>(best->take)) best = &q;
        }
        if (!best) throw InvalidArgument("too few samples for stratification");
        ++best->take;
        ++assigned;
    }
    while (assigned > test_total) {
        Quota* best = nullptr;
        for (auto& q : quotas) {
            if (q.take <= q.lo) continue;
            if (!best || static_cast<double>(q.take) - q.exact > static_cast<double>(best->take) - best->exact) best = &q;
        }
        if (!best) throw InvalidArgument("too few samples for stratification");
        --best->take;
        --assigned;
    }

    Split split;
    for (const auto& q : quotas) {
        const auto& idx = by_class[q.label];
        split.test.insert(split.test.end(), idx.begin(), idx.begin() + static_cast<long>(q.take));
        split.train.insert(split.train.end(), idx.begin() + static_cast<long>(q.take), idx.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

namespace {

nlohmann::json state_to_json(const BusState& s) {
    auto a = nlohmann::json::array();
    for (Index i = 0; i < s.size(); ++i) a.push_back({s.voltage[i].real(), s.voltage[i].imag()});
    return a;
}

BusState state_from_json(const nlohmann::json& a) {
    BusState s{ComplexVector(static_cast<Index>(a.size()))};
    for (std::size_t i = 0; i < a.size(); ++i) {
        s.voltage[static_cast<Index>(i)] = Complex(a[i].at(0).get<double>(), a[i].at(1).get<double>());
    }
    return s;
}

}  // namespace

nlohmann::json dataset_to_json(const Dataset& d) {
    nlohmann::json j;
    j["header"] = {{"grid_hash", d.grid_hash},
                   {"seed", d.seed},
                   {"config", d.config},
                   {"feature_dim", d.feature_dim},
                   {"class_count", d.class_count}};
    auto& records = j["records"] = nlohmann::json::array();
    for (const auto& s : d.samples) {
        nlohmann::json r;
        r["features"] = std::vector<double>(s.features.data(), s.features.data() + s.features.size());
        r["label"] = s.label;
        r["fault_type"] = s.fault_type ? std::string(to_string(*s.fault_type)) : std::string("NONE");
        if (s.states) {
            r["u0"] = state_to_json(s.states->pre);
            r["u1"] = state_to_json(s.states->post);
        }
        records.push_back(std::move(r));
    }
    j["split"] = {{"train", d.split.train}, {"test", d.split.test}};
    if (d.poison_manifest) {
        const auto& m = *d.poison_manifest;
        j["poison_manifest"] = {{"victim_indices", m.victim_indices},
                                {"target_label", m.target_label},
                                {"threat_model", m.threat_model},
                                {"plan", m.plan}};
    }
    return j;
}

Dataset dataset_from_json(const nlohmann::json& j) {
    Dataset d;
    try {
        const auto& h = j.at("header");
        d.grid_hash = h.value("grid_hash", std::string{});
        d.seed = h.value("seed", std::uint64_t{0});
        d.config = h.value("config", nlohmann::json::object());
        d.feature_dim = h.at("feature_dim").get<Index>();
        d.class_count = h.at("class_count").get<int>();
        for (const auto& r : j.at("records")) {
            FaultSample s;
            const auto f = r.at("features").get<std::vector<double>>();
            s.features = Eigen::Map<const RealVector>(f.data(), static_cast<Index>(f.size()));
            s.label = r.at("label").get<int>();
            const auto t = r.value("fault_type", std::string("NONE"));
            if (t != "NONE") s.fault_type = fault_type_from_string(t);
            if (r.contains("u0") && r.contains("u1")) {
                s.states = StatePair{state_from_json(r.at("u0")), state_from_json(r.at("u1"))};
            }
            d.samples.push_back(std::move(s));
        }
        d.split.train = j.at("split").at("train").get<std::vector<std::size_t>>();
        d.split.test = j.at("split").at("test").get<std::vector<std::size_t>>();
        if (j.contains("poison_manifest")) {
            const auto& m = j.at("poison_manifest");
            d.poison_manifest = PoisonManifest{m.at("victim_indices").get<std::vector<std::size_t>>(),
                                               m.at("target_label").get<int>(),
                                               m.value("threat_model", std::string{}),
                                               m.value("plan", nlohmann::json::object())};
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed dataset: ") + e.what());
    }
    d.validate();
    return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("io", "cannot write " + path.string());
    out << dataset_to_json(dataset).dump() << '\n';
    if (!out) throw Error("io", "write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open dataset " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument("dataset " + path.string() + " is not valid JSON: " + e.what());
    }
    return dataset_from_json(j);
}

void write_dataset_csv(const Dataset& dataset, std::ostream& out) {
    for (Index k = 0; k < dataset.feature_dim; ++k) out << 'f' << k << ',';
    out << "label\n";
    char buf[32];
    for (const auto& s : dataset.samples) {
        for (Index k = 0; k < s.features.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", s.features[k]);
            out << buf << ',';
        }
        out << s.label << '\n';
    }
}

RealMatrix feature_columns(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    RealMatrix x(dataset.feature_dim, static_cast<Index>(indices.size()));
    for (std::size_t c = 0; c < indices.size(); ++c) x.col(static_cast<Index>(c)) = dataset.samples[indices[c]].features;
    return x;
}

std::vector<int> labels_of(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    std::vector<int> y;
    y.reserve(indices.size());
    for (std::size_t i : indices) y.push_back(dataset.samples[i].label);
    return y;
}

}  // namespace gridbd
