#pragma once

// Seeded desk-scale graph generators producing complete bundles.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "hc/errors.hpp"
#include "hc/graph.hpp"
#include "hc/rng.hpp"

namespace hc::synth {

struct FeatureSpec {
    Index num_features = 32;
    double signal = 1.0;  // scale of per-class centroids
    double noise = 1.0;   // per-node isotropic noise
};

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
};

struct SbmSpec {
    Index num_nodes = 1000;
    Index blocks = 4;
    double p_in = 0.05;
    double p_out = 0.002;
    FeatureSpec features;
    SplitFractions split;
    std::uint64_t seed = 0;
};

struct BaSpec {
    Index num_nodes = 500;
    Index m = 3;
    Index classes = 4;
    FeatureSpec features;
    SplitFractions split;
    std::uint64_t seed = 0;
};

/// Class-centroid Gaussian features, rounded to float32.
inline FeatureMatrix class_features(const std::vector<int>& labels, Index num_classes, const FeatureSpec& spec, Rng rng) {
    Matrix centroids(num_classes, spec.num_features);
    for (Index c = 0; c < num_classes; ++c)
        for (Index k = 0; k < spec.num_features; ++k) centroids(c, k) = spec.signal * rng.normal();
    FeatureMatrix x(static_cast<Index>(labels.size()), spec.num_features);
    for (Index i = 0; i < x.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        for (Index k = 0; k < spec.num_features; ++k) {
            x(i, k) = static_cast<float>(centroids(y, k) + spec.noise * rng.normal());
        }
    }
    return x;
}

/// Per-class stratified split; every class keeps at least one training node.
inline Split stratified_split(const std::vector<int>& labels, Index num_classes, const SplitFractions& f, Rng rng) {
    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<Index>(i));
    Split s;
    for (auto& members : by_class) {
        rng.shuffle(members);
        const auto n = members.size();
        auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(f.train * static_cast<double>(n)));
        n_train = std::min(n_train, n);
        auto n_val = std::min(n - n_train, static_cast<std::size_t>(f.val * static_cast<double>(n)));
        s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.val.insert(s.val.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                     members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        s.test.insert(s.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), members.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

/// Block sizes differ by at most one; block b gets label b.
inline std::vector<int> block_labels(Index n, Index blocks) {
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i * blocks / n);
    return labels;
}

inline double sbm_expected_edges(const SbmSpec& spec) {
    const auto labels = block_labels(spec.num_nodes, spec.blocks);
    std::vector<double> size(static_cast<std::size_t>(spec.blocks), 0.0);
    for (int y : labels) size[static_cast<std::size_t>(y)] += 1.0;
    double e = 0.0;
    for (std::size_t a = 0; a < size.size(); ++a) {
        e += spec.p_in * size[a] * (size[a] - 1) / 2.0;
        for (std::size_t b = a + 1; b < size.size(); ++b) e += spec.p_out * size[a] * size[b];
    }
    return e;
}

inline GraphBundle sbm(const SbmSpec& spec) {
    if (spec.num_nodes < 2 || spec.blocks < 1 || spec.blocks > spec.num_nodes) throw ConfigError("sbm: invalid sizes");
    if (spec.p_in < 0 || spec.p_in > 1 || spec.p_out < 0 || spec.p_out > 1) throw ConfigError("sbm: probabilities must lie in [0, 1]");
    Rng root(spec.seed);
    Rng erng = root.split("sbm.edges");
    const auto labels = block_labels(spec.num_nodes, spec.blocks);
    std::vector<Edge> edges;
    for (Index u = 0; u < spec.num_nodes; ++u) {
        for (Index v = u + 1; v < spec.num_nodes; ++v) {
            const double p = labels[static_cast<std::size_t>(u)] == labels[static_cast<std::size_t>(v)] ? spec.p_in : spec.p_out;
            if (erng.uniform() < p) edges.emplace_back(u, v);
        }
    }
    auto x = class_features(labels, spec.blocks, spec.features, root.split("sbm.features"));
    auto split = stratified_split(labels, spec.blocks, spec.split, root.split("sbm.split"));
    return make_bundle("sbm", spec.num_nodes, spec.blocks, edges, std::move(x), labels, std::move(split));
}

/// Barabási–Albert preferential attachment seeded with a complete graph on m
/// nodes, so the edge count is m(m-1)/2 + m(n-m).
inline GraphBundle barabasi_albert(const BaSpec& spec) {
    if (spec.m < 1 || spec.num_nodes <= spec.m) throw ConfigError("barabasi_albert: need 1 <= m < num_nodes");
    if (spec.classes < 1 || spec.classes > spec.num_nodes) throw ConfigError("barabasi_albert: invalid class count");
    Rng root(spec.seed);
    Rng erng = root.split("ba.edges");
    std::vector<Edge> edges;
    std::vector<Index> endpoints;  // node repeated once per incident edge
    for (Index u = 0; u < spec.m; ++u) {
        for (Index v = u + 1; v < spec.m; ++v) {
            edges.emplace_back(u, v);
            endpoints.push_back(u);
            endpoints.push_back(v);
        }
    }
    for (Index v = spec.m; v < spec.num_nodes; ++v) {
        std::vector<Index> targets;
        while (static_cast<Index>(targets.size()) < spec.m) {
            Index t;
            if (endpoints.empty()) {
                t = static_cast<Index>(erng.below(static_cast<std::uint64_t>(v)));
            } else {
                t = endpoints[erng.below(endpoints.size())];
            }
            if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
        }
        for (Index t : targets) {
            edges.emplace_back(t, v);
            endpoints.push_back(t);
            endpoints.push_back(v);
        }
    }
    const auto labels = block_labels(spec.num_nodes, spec.classes);
    auto x = class_features(labels, spec.classes, spec.features, root.split("ba.features"));
    auto split = stratified_split(labels, spec.classes, spec.split, root.split("ba.split"));
    return make_bundle("ba", spec.num_nodes, spec.classes, edges, std::move(x), labels, std::move(split));
}

}  // namespace hc::synth
