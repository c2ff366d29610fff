#pragma once

// Condensed graph (A', X', Y') and its artifact directory:
//   meta.json     sizes, provenance, selected checkpoint
//   adj.f32       m x m float32 weights, row-major
//   features.f32  m x d float32, row-major
//   labels.tsv    one label per line
//   history.csv   per-epoch loss components and validation F1
//   net.f32       structure-net parameters, described by net.json

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "hc/errors.hpp"
#include "hc/graph.hpp"
#include "hc/hyperbolic.hpp"
#include "hc/io.hpp"

namespace hc {

struct CondensedProvenance {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string dataset;
    std::string selection;
};

struct EpochRecord {
    int repeat = 0;
    int epoch = 0;
    bool feature_phase = true;
    double total = 0.0;
    double gradient = 0.0;
    double spectral = 0.0;
    double regularization = 0.0;
    double sgc_loss = 0.0;
    double val_f1 = std::numeric_limits<double>::quiet_NaN();
};

struct CondensedGraph {
    WeightedGraph adjacency;
    Matrix features;
    std::vector<int> labels;
    Index num_classes = 0;
    std::vector<Index> source_nodes;  // original ids the rows were initialised from
    CondensedProvenance provenance;
    double val_f1 = std::numeric_limits<double>::quiet_NaN();
    int best_repeat = -1;
    int best_epoch = -1;

    Index num_nodes() const { return features.rows(); }
};

inline std::vector<Index> label_histogram(const std::vector<int>& labels, Index num_classes) {
    std::vector<Index> h(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw ValidationError("label " + std::to_string(y) + " out of range");
        ++h[static_cast<std::size_t>(y)];
    }
    return h;
}

inline void validate(const CondensedGraph& cg) {
    validate(cg.adjacency);
    if (cg.adjacency.weights.rows() != cg.features.rows()) throw ValidationError("condensed graph: adjacency/feature size mismatch");
    if (static_cast<Index>(cg.labels.size()) != cg.features.rows()) throw ValidationError("condensed graph: label count mismatch");
    if (!cg.features.allFinite()) throw ValidationError("condensed graph: non-finite feature");
    label_histogram(cg.labels, cg.num_classes);
}

namespace io {

inline void write_history(const fs::path& p, const std::vector<EpochRecord>& history) {
    auto out = open_out(p);
    out << "repeat,epoch,phase,total,gradient,spectral,regularization,sgc_loss,val_f1\n";
    out << std::setprecision(10);
    for (const auto& r : history) {
        out << r.repeat << ',' << r.epoch << ',' << (r.feature_phase ? "features" : "structure") << ',' << r.total << ','
            << r.gradient << ',' << r.spectral << ',' << r.regularization << ',' << r.sgc_loss << ',';
        if (!std::isnan(r.val_f1)) out << r.val_f1;
        out << '\n';
    }
}

inline std::vector<EpochRecord> read_history(const fs::path& p) {
    auto in = open_in(p);
    std::string line;
    std::getline(in, line);
    std::vector<EpochRecord> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.emplace_back();
        if (f.size() != 9) throw IoError(p.string() + ":" + std::to_string(lineno) + ": expected 9 columns");
        try {
            EpochRecord r;
            r.repeat = std::stoi(f[0]);
            r.epoch = std::stoi(f[1]);
            r.feature_phase = f[2] == "features";
            r.total = std::stod(f[3]);
            r.gradient = std::stod(f[4]);
            r.spectral = std::stod(f[5]);
            r.regularization = std::stod(f[6]);
            r.sgc_loss = std::stod(f[7]);
            if (!f[8].empty()) r.val_f1 = std::stod(f[8]);
            out.push_back(r);
        } catch (const std::exception&) {
            throw IoError(p.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return out;
}

/// net.json lists tensor names and shapes in storage order; net.f32 holds
/// the concatenated row-major values.
inline void save_net(const HyperbolicStructureNet& net, const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<std::pair<std::string, const Matrix*>> tensors;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        tensors.emplace_back(p + "weight", &layer.weight);
        tensors.emplace_back(p + "bias", &layer.bias);
        tensors.emplace_back(p + "gamma", &layer.gamma);
        tensors.emplace_back(p + "beta", &layer.beta);
        tensors.emplace_back(p + "running_mean", &layer.running_mean);
        tensors.emplace_back(p + "running_var", &layer.running_var);
    }
    tensors.emplace_back("readout.weight", &net.readout_weight);
    tensors.emplace_back("readout.bias", &net.readout_bias);

    json manifest{{"curvature", net.curvature},
                  {"bn_eps", net.bn_eps},
                  {"bn_momentum", net.bn_momentum},
                  {"num_layers", net.layers.size()},
                  {"tensors", json::array()}};
    std::vector<float> flat;
    for (const auto& [name, m] : tensors) {
        manifest["tensors"].push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
        for (Index i = 0; i < m->rows(); ++i)
            for (Index j = 0; j < m->cols(); ++j) flat.push_back(static_cast<float>((*m)(i, j)));
    }
    write_json(dir / "net.json", manifest);
    write_f32(dir / "net.f32", flat.data(), flat.size());
}

inline HyperbolicStructureNet load_net(const fs::path& dir) {
    const json manifest = read_json(dir / "net.json");
    HyperbolicStructureNet net;
    std::vector<json> tensors;
    std::size_t total = 0;
    try {
        net.curvature = manifest.at("curvature").get<double>();
        net.bn_eps = manifest.at("bn_eps").get<double>();
        net.bn_momentum = manifest.at("bn_momentum").get<double>();
        net.layers.resize(manifest.at("num_layers").get<std::size_t>());
        for (const auto& t : manifest.at("tensors")) {
            tensors.push_back(t);
            total += t.at("rows").get<std::size_t>() * t.at("cols").get<std::size_t>();
        }
    } catch (const json::exception& e) {
        throw IoError((dir / "net.json").string() + ": " + e.what());
    }
    const auto flat = read_f32(dir / "net.f32", total);
    std::size_t offset = 0;
    for (const auto& t : tensors) {
        const auto name = t.at("name").get<std::string>();
        const Index rows = t.at("rows").get<Index>(), cols = t.at("cols").get<Index>();
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i)
            for (Index j = 0; j < cols; ++j) m(i, j) = flat[offset++];
        Matrix* target = nullptr;
        if (name == "readout.weight") {
            target = &net.readout_weight;
        } else if (name == "readout.bias") {
            target = &net.readout_bias;
        } else if (name.rfind("layer", 0) == 0) {
            const auto dot = name.find('.');
            const auto l = static_cast<std::size_t>(std::stoul(name.substr(5, dot - 5)));
            if (l >= net.layers.size()) throw IoError("net.json: layer index out of range in " + name);
            auto& layer = net.layers[l];
            const auto field = name.substr(dot + 1);
            if (field == "weight") target = &layer.weight;
            if (field == "bias") target = &layer.bias;
            if (field == "gamma") target = &layer.gamma;
            if (field == "beta") target = &layer.beta;
            if (field == "running_mean") target = &layer.running_mean;
            if (field == "running_var") target = &layer.running_var;
        }
        if (!target) throw IoError("net.json: unknown tensor " + name);
        *target = std::move(m);
    }
    if (!net.all_finite()) throw ValidationError("net.f32: structure net parameters are not finite or leave the ball");
    return net;
}

inline void save_condensed(const CondensedGraph& cg, const fs::path& dir, const std::vector<EpochRecord>& history = {},
                           const HyperbolicStructureNet* net = nullptr, const json& extra = json::object()) {
    validate(cg);
    fs::create_directories(dir);
    json meta{{"num_nodes", cg.num_nodes()},
              {"num_features", cg.features.cols()},
              {"num_classes", cg.num_classes},
              {"config_hash", cg.provenance.config_hash},
              {"seed", cg.provenance.seed},
              {"dataset", cg.provenance.dataset},
              {"selection", cg.provenance.selection},
              {"source_nodes", cg.source_nodes},
              {"best_repeat", cg.best_repeat},
              {"best_epoch", cg.best_epoch}};
    if (!std::isnan(cg.val_f1)) meta["val_f1"] = round_sig(cg.val_f1);
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
    write_json(dir / "meta.json", meta);
    write_matrix_f32(dir / "adj.f32", cg.adjacency.weights);
    write_matrix_f32(dir / "features.f32", cg.features);
    write_labels(dir / "labels.tsv", cg.labels);
    write_history(dir / "history.csv", history);
    if (net) save_net(*net, dir);
}

inline CondensedGraph load_condensed(const fs::path& dir) {
    const json meta = read_json(dir / "meta.json");
    CondensedGraph cg;
    Index m = 0, d = 0;
    try {
        m = meta.at("num_nodes").get<Index>();
        d = meta.at("num_features").get<Index>();
        cg.num_classes = meta.at("num_classes").get<Index>();
        cg.provenance.config_hash = meta.value("config_hash", "");
        cg.provenance.seed = meta.value("seed", std::uint64_t{0});
        cg.provenance.dataset = meta.value("dataset", "");
        cg.provenance.selection = meta.value("selection", "");
        cg.source_nodes = meta.value("source_nodes", std::vector<Index>{});
        cg.best_repeat = meta.value("best_repeat", -1);
        cg.best_epoch = meta.value("best_epoch", -1);
        if (meta.contains("val_f1")) cg.val_f1 = meta.at("val_f1").get<double>();
    } catch (const json::exception& e) {
        throw IoError((dir / "meta.json").string() + ": " + e.what());
    }
    if (m < 2 || d < 1 || cg.num_classes < 1) throw ValidationError("meta.json: invalid condensed sizes");
    cg.adjacency.weights = read_matrix_f32(dir / "adj.f32", m, m);
    cg.features = read_matrix_f32(dir / "features.f32", m, d);
    cg.labels = read_labels(dir / "labels.tsv");
    validate(cg);
    return cg;
}

}  // namespace io
}  // namespace hc
