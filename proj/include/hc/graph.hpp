#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hc/errors.hpp"

namespace hc {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Edge = std::pair<Index, Index>;

struct Split {
    std::vector<Index> train;
    std::vector<Index> val;
    std::vector<Index> test;
};

/// Undirected attributed graph with node labels and a node split.
/// Immutable once built through make_bundle() or load_bundle().
struct GraphBundle {
    std::string name;
    Index num_nodes = 0;
    Index num_features = 0;
    Index num_classes = 0;
    SparseMatrix adjacency;  // symmetric 0/1, zero diagonal, CSR
    FeatureMatrix features;  // num_nodes x num_features
    std::vector<int> labels;
    Split split;

    Index num_edges() const { return adjacency.nonZeros() / 2; }

    /// Undirected edges (u < v) in row-major order.
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(static_cast<std::size_t>(num_edges()));
        for (Index u = 0; u < adjacency.outerSize(); ++u) {
            for (SparseMatrix::InnerIterator it(adjacency, u); it; ++it) {
                if (it.col() > u) out.emplace_back(u, it.col());
            }
        }
        return out;
    }

    bool has_edge(Index u, Index v) const { return adjacency.coeff(u, v) != 0.0; }

    Matrix features_dense() const { return features.cast<double>(); }
};

/// Dense symmetric weight matrix in [0, 1] with a zero diagonal.
struct WeightedGraph {
    Matrix weights;

    Index num_nodes() const { return weights.rows(); }
};

namespace detail {

inline std::string fmt_index_error(const char* what, Index value, Index bound) {
    std::ostringstream os;
    os << what << " " << value << " out of range [0, " << bound << ")";
    return os.str();
}

}  // namespace detail

inline void validate_split(const Split& s, Index num_nodes) {
    if (s.train.empty()) throw ValidationError("split: train set is empty");
    std::vector<char> seen(static_cast<std::size_t>(num_nodes), 0);
    for (const auto* part : {&s.train, &s.val, &s.test}) {
        for (Index i : *part) {
            if (i < 0 || i >= num_nodes) throw ValidationError(detail::fmt_index_error("split: node", i, num_nodes));
            if (seen[static_cast<std::size_t>(i)]) {
                throw ValidationError("split: node " + std::to_string(i) + " appears more than once");
            }
            seen[static_cast<std::size_t>(i)] = 1;
        }
    }
}

inline void validate(const GraphBundle& g) {
    if (g.num_nodes <= 0 || g.num_features <= 0 || g.num_classes <= 0) {
        throw ValidationError("bundle: num_nodes, num_features and num_classes must be positive");
    }
    const auto& a = g.adjacency;
    if (a.rows() != g.num_nodes || a.cols() != g.num_nodes) throw ValidationError("bundle: adjacency shape");
    for (Index u = 0; u < a.outerSize(); ++u) {
        for (SparseMatrix::InnerIterator it(a, u); it; ++it) {
            if (it.col() == u) throw ValidationError("bundle: self-loop at node " + std::to_string(u));
            if (it.value() != 1.0) throw ValidationError("bundle: adjacency entries must be 0/1");
            if (a.coeff(it.col(), u) != 1.0) throw ValidationError("bundle: adjacency is not symmetric");
        }
    }
    if (g.features.rows() != g.num_nodes || g.features.cols() != g.num_features) {
        throw ValidationError("bundle: feature block shape does not match meta");
    }
    if (!g.features.allFinite()) {
        for (Index i = 0; i < g.features.rows(); ++i) {
            if (!g.features.row(i).allFinite()) {
                throw ValidationError("bundle: non-finite feature in row " + std::to_string(i));
            }
        }
    }
    if (static_cast<Index>(g.labels.size()) != g.num_nodes) throw ValidationError("bundle: label count");
    std::vector<Index> counts(static_cast<std::size_t>(g.num_classes), 0);
    for (std::size_t i = 0; i < g.labels.size(); ++i) {
        const int y = g.labels[i];
        if (y < 0 || y >= g.num_classes) {
            throw ValidationError(detail::fmt_index_error("bundle: label", y, g.num_classes) + " at node " +
                                  std::to_string(i));
        }
        ++counts[static_cast<std::size_t>(y)];
    }
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) throw ValidationError("bundle: class " + std::to_string(c) + " has no nodes");
    }
    validate_split(g.split, g.num_nodes);
}

/// Symmetric 0/1 CSR adjacency from an undirected edge list; self-loops and
/// duplicates are dropped.
inline SparseMatrix adjacency_from_edges(Index n, const std::vector<Edge>& edges) {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(edges.size() * 2);
    for (const auto& [u, v] : edges) {
        if (u < 0 || u >= n) throw ValidationError(detail::fmt_index_error("edge endpoint", u, n));
        if (v < 0 || v >= n) throw ValidationError(detail::fmt_index_error("edge endpoint", v, n));
        if (u == v) continue;
        trip.emplace_back(u, v, 1.0);
        trip.emplace_back(v, u, 1.0);
    }
    SparseMatrix a(n, n);
    // duplicates collapse to a single 1
    a.setFromTriplets(trip.begin(), trip.end(), [](double, double) { return 1.0; });
    a.makeCompressed();
    return a;
}

inline GraphBundle make_bundle(std::string name, Index num_nodes, Index num_classes, const std::vector<Edge>& edges,
                               FeatureMatrix features, std::vector<int> labels, Split split) {
    GraphBundle g;
    g.name = std::move(name);
    g.num_nodes = num_nodes;
    g.num_features = features.cols();
    g.num_classes = num_classes;
    g.adjacency = adjacency_from_edges(num_nodes, edges);
    g.features = std::move(features);
    g.labels = std::move(labels);
    g.split = std::move(split);
    validate(g);
    return g;
}

inline void validate(const WeightedGraph& w) {
    const auto& m = w.weights;
    if (m.rows() != m.cols()) throw ValidationError("weighted graph: matrix must be square");
    for (Index i = 0; i < m.rows(); ++i) {
        if (m(i, i) != 0.0) throw ValidationError("weighted graph: non-zero diagonal");
        for (Index j = 0; j < m.cols(); ++j) {
            if (m(i, j) != m(j, i)) throw ValidationError("weighted graph: not symmetric");
            if (!(m(i, j) >= 0.0 && m(i, j) <= 1.0)) throw ValidationError("weighted graph: weight outside [0, 1]");
        }
    }
}

/// D^-1/2 (A [+ I]) D^-1/2 for a sparse 0/1 adjacency. Isolated nodes keep a
/// zero row when self-loops are off.
inline SparseMatrix normalized_adjacency(const SparseMatrix& a, bool add_self_loops) {
    const Index n = a.rows();
    SparseMatrix m = a;
    if (add_self_loops) {
        SparseMatrix eye(n, n);
        eye.setIdentity();
        m = m + eye;
    }
    Vector deg = Vector::Zero(n);
    for (Index u = 0; u < m.outerSize(); ++u) {
        for (SparseMatrix::InnerIterator it(m, u); it; ++it) deg(u) += it.value();
    }
    Vector dinv = deg.unaryExpr([](double d) { return d > 0 ? 1.0 / std::sqrt(d) : 0.0; });
    for (Index u = 0; u < m.outerSize(); ++u) {
        for (SparseMatrix::InnerIterator it(m, u); it; ++it) it.valueRef() *= dinv(u) * dinv(it.col());
    }
    m.makeCompressed();
    return m;
}

inline SparseMatrix normalized_adjacency(const GraphBundle& g, bool add_self_loops) {
    return normalized_adjacency(g.adjacency, add_self_loops);
}

/// Dense counterpart for weighted graphs.
inline Matrix normalized_adjacency(const Matrix& w, bool add_self_loops) {
    Matrix m = w;
    if (add_self_loops) m.diagonal().array() += 1.0;
    Vector deg = m.rowwise().sum();
    Vector dinv = deg.unaryExpr([](double d) { return d > 0 ? 1.0 / std::sqrt(d) : 0.0; });
    return dinv.asDiagonal() * m * dinv.asDiagonal();
}

inline std::vector<Index> class_distribution(const GraphBundle& g, const std::vector<Index>& indices) {
    std::vector<Index> counts(static_cast<std::size_t>(g.num_classes), 0);
    for (Index i : indices) {
        if (i < 0 || i >= g.num_nodes) throw ValidationError(detail::fmt_index_error("class_distribution: node", i, g.num_nodes));
        ++counts[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])];
    }
    return counts;
}

/// Nodes of `pool` grouped by label, each group in ascending node order.
inline std::vector<std::vector<Index>> nodes_by_class(const GraphBundle& g, std::vector<Index> pool) {
    std::sort(pool.begin(), pool.end());
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(g.num_classes));
    for (Index i : pool) out[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])].push_back(i);
    return out;
}

/// Subgraph induced by `nodes` (order preserved) as a dense 0/1 weight matrix.
inline WeightedGraph induced_subgraph(const GraphBundle& g, const std::vector<Index>& nodes) {
    const Index k = static_cast<Index>(nodes.size());
    std::vector<Index> pos(static_cast<std::size_t>(g.num_nodes), -1);
    for (Index i = 0; i < k; ++i) pos[static_cast<std::size_t>(nodes[static_cast<std::size_t>(i)])] = i;
    WeightedGraph w{Matrix::Zero(k, k)};
    for (Index i = 0; i < k; ++i) {
        for (SparseMatrix::InnerIterator it(g.adjacency, nodes[static_cast<std::size_t>(i)]); it; ++it) {
            const Index j = pos[static_cast<std::size_t>(it.col())];
            if (j >= 0) w.weights(i, j) = 1.0;
        }
    }
    return w;
}

}  // namespace hc
