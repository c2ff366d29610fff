#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hc/errors.hpp"
#include "hc/graph.hpp"
#include "hc/rng.hpp"

namespace hc {

enum class SpectralSource { unnormalized_laplacian, normalized_adjacency };

struct SpectralCache {
    Vector eigenvalues;   // ascending
    Matrix eigenvectors;  // num_nodes x k, orthonormal columns; rows are node embeddings
    SpectralSource source = SpectralSource::unnormalized_laplacian;
};

struct EigenOptions {
    Index dense_threshold = 3000;
    Index max_basis = 400;  // Lanczos vectors kept per run
    int max_restarts = 40;
    double tol = 1e-10;  // residual bound relative to the operator's 1-norm
    std::uint64_t seed = 0x5eed;
};

/// L = D - A.
inline SparseMatrix laplacian(const SparseMatrix& a) {
    const Index n = a.rows();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(a.nonZeros() + n));
    for (Index u = 0; u < a.outerSize(); ++u) {
        double deg = 0.0;
        for (SparseMatrix::InnerIterator it(a, u); it; ++it) {
            deg += it.value();
            trip.emplace_back(u, it.col(), -it.value());
        }
        if (deg != 0.0) trip.emplace_back(u, u, deg);
    }
    SparseMatrix l(n, n);
    l.setFromTriplets(trip.begin(), trip.end());
    l.makeCompressed();
    return l;
}

inline SparseMatrix laplacian(const GraphBundle& g) { return laplacian(g.adjacency); }

inline double one_norm(const SparseMatrix& m) {
    Vector col = Vector::Zero(m.cols());
    for (Index u = 0; u < m.outerSize(); ++u)
        for (SparseMatrix::InnerIterator it(m, u); it; ++it) col(it.col()) += std::abs(it.value());
    return col.size() ? col.maxCoeff() : 0.0;
}

namespace detail {

struct EigenPairs {
    Vector values;
    Matrix vectors;
};

/// Flip each column so its largest-magnitude entry is positive (first such
/// entry on ties).
inline void canonical_signs(Matrix& v) {
    for (Index j = 0; j < v.cols(); ++j) {
        Index arg = 0;
        double best = -1.0;
        for (Index i = 0; i < v.rows(); ++i) {
            if (std::abs(v(i, j)) > best) {
                best = std::abs(v(i, j));
                arg = i;
            }
        }
        if (v(arg, j) < 0) v.col(j) = -v.col(j);
    }
}

using MatVec = std::function<void(const Vector&, Vector&)>;

/// Lanczos with full reorthogonalisation for the `want` algebraically
/// smallest eigenpairs of a symmetric operator. Converged pairs are locked
/// and later runs are restricted to their orthogonal complement, which
/// recovers repeated eigenvalues a single Krylov space cannot see. A final
/// run verifies that nothing below the k-th locked value was missed.
inline EigenPairs lanczos_smallest(const MatVec& op, Index n, Index want, double op_norm, const EigenOptions& opt) {
    Rng rng(opt.seed);
    const double tol = opt.tol * std::max(op_norm, 1e-300);
    Matrix locked(n, 0);
    std::vector<double> locked_vals;

    auto project_out = [&](Vector& w) {
        if (locked.cols() > 0) {
            w -= locked * (locked.transpose() * w);
            w -= locked * (locked.transpose() * w);
        }
    };

    auto lock = [&](double value, const Vector& vec) {
        locked.conservativeResize(Eigen::NoChange, locked.cols() + 1);
        locked.col(locked.cols() - 1) = vec;
        locked_vals.push_back(value);
    };

    std::vector<double> last_residuals;
    Vector start = Vector::Zero(n);
    bool have_start = false;
    for (int run = 0; run < opt.max_restarts; ++run) {
        const Index free_dim = n - locked.cols();
        if (free_dim <= 0) break;
        const bool verifying = static_cast<Index>(locked_vals.size()) >= want;
        const Index need = verifying ? 1 : want - static_cast<Index>(locked_vals.size());

        Vector q = have_start ? start : Vector(Vector::NullaryExpr(n, [&] { return rng.normal(); }));
        have_start = false;
        project_out(q);
        if (q.norm() < 1e-12) {
            q = Vector::NullaryExpr(n, [&] { return rng.normal(); });
            project_out(q);
        }
        q.normalize();

        const Index m = std::min(opt.max_basis, free_dim);
        Matrix basis(n, m);
        std::vector<double> alpha, beta;
        Vector w(n);
        Index steps = 0;
        bool invariant = false;
        Eigen::SelfAdjointEigenSolver<Matrix> tri;
        auto solve_tridiag = [&](Index k) {
            Matrix t = Matrix::Zero(k, k);
            for (Index i = 0; i < k; ++i) {
                t(i, i) = alpha[static_cast<std::size_t>(i)];
                if (i + 1 < k) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
            }
            tri.compute(t);
        };
        auto converged_count = [&](Index k, double b) {
            Index c = 0;
            for (Index i = 0; i < std::min(k, need); ++i) {
                if (std::abs(b * tri.eigenvectors()(k - 1, i)) <= tol) ++c;
                else break;
            }
            return c;
        };

        for (Index j = 0; j < m; ++j) {
            basis.col(j) = q;
            op(q, w);
            project_out(w);
            const double a = q.dot(w);
            alpha.push_back(a);
            // full reorthogonalisation, twice for stability
            for (int pass = 0; pass < 2; ++pass) {
                w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
                project_out(w);
            }
            const double b = w.norm();
            beta.push_back(b);
            steps = j + 1;
            if (b <= 1e-12 * std::max(op_norm, 1.0)) {
                invariant = true;
                break;
            }
            if (steps >= need && (steps % 10 == 0 || steps == m)) {
                solve_tridiag(steps);
                if (converged_count(steps, b) >= need) break;
            }
            q = w / b;
        }
        solve_tridiag(steps);
        const double blast = invariant ? 0.0 : beta.back();
        const Index got = invariant ? std::min(need, steps) : converged_count(steps, blast);

        last_residuals.clear();
        for (Index i = 0; i < std::min(need, steps); ++i) {
            last_residuals.push_back(std::abs(blast * tri.eigenvectors()(steps - 1, i)));
        }
        const Matrix ritz = basis.leftCols(steps) * tri.eigenvectors().leftCols(std::min(need, steps));

        if (got == 0) {
            // explicit restart from the current best approximations
            start = ritz.rowwise().sum();
            have_start = start.norm() > 1e-12;
            continue;
        }
        if (verifying) {
            const double theta = tri.eigenvalues()(0);
            std::vector<double> sorted = locked_vals;
            std::sort(sorted.begin(), sorted.end());
            if (theta >= sorted[static_cast<std::size_t>(want - 1)] - std::sqrt(tol)) break;
        }
        for (Index i = 0; i < got; ++i) {
            Vector v = ritz.col(i);
            project_out(v);
            v.normalize();
            lock(tri.eigenvalues()(i), v);
        }
    }

    if (static_cast<Index>(locked_vals.size()) < want && static_cast<Index>(locked_vals.size()) < n) {
        std::ostringstream os;
        os << "lanczos: no convergence after " << opt.max_restarts << " runs; locked " << locked_vals.size() << "/"
           << want << " pairs, last Ritz residuals:";
        for (double r : last_residuals) os << ' ' << r;
        throw NumericalError(os.str());
    }

    std::vector<Index> order(locked_vals.size());
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        return locked_vals[static_cast<std::size_t>(a)] < locked_vals[static_cast<std::size_t>(b)];
    });
    const Index k = std::min<Index>(want, static_cast<Index>(order.size()));
    EigenPairs out{Vector(k), Matrix(n, k)};
    for (Index i = 0; i < k; ++i) {
        out.values(i) = locked_vals[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        out.vectors.col(i) = locked.col(order[static_cast<std::size_t>(i)]);
    }
    // Rayleigh-Ritz over the locked block tidies up near-degenerate mixing.
    Matrix h = out.vectors.transpose() * [&] {
        Matrix av(n, k);
        Vector y(n);
        for (Index i = 0; i < k; ++i) {
            op(out.vectors.col(i), y);
            av.col(i) = y;
        }
        return av;
    }();
    Eigen::SelfAdjointEigenSolver<Matrix> small(0.5 * (h + h.transpose()));
    out.values = small.eigenvalues();
    out.vectors = out.vectors * small.eigenvectors();
    return out;
}

}  // namespace detail

/// The k algebraically smallest eigenpairs of a symmetric sparse matrix.
inline SpectralCache smallest_eigenvectors(const SparseMatrix& l, Index k_eig, const EigenOptions& opt = {},
                                           SpectralSource source = SpectralSource::unnormalized_laplacian) {
    const Index n = l.rows();
    if (k_eig < 1 || k_eig > n) throw DomainError("smallest_eigenvectors: need 1 <= k_eig <= num_nodes");
    SpectralCache cache;
    cache.source = source;
    if (n <= opt.dense_threshold) {
        Eigen::SelfAdjointEigenSolver<Matrix> es{Matrix(l)};
        if (es.info() != Eigen::Success) throw NumericalError("smallest_eigenvectors: dense eigensolver failed");
        cache.eigenvalues = es.eigenvalues().head(k_eig);
        cache.eigenvectors = es.eigenvectors().leftCols(k_eig);
    } else {
        auto op = [&l](const Vector& x, Vector& y) { y.noalias() = l * x; };
        auto pairs = detail::lanczos_smallest(op, n, k_eig, one_norm(l), opt);
        cache.eigenvalues = std::move(pairs.values);
        cache.eigenvectors = std::move(pairs.vectors);
    }
    detail::canonical_signs(cache.eigenvectors);
    return cache;
}

/// The two largest eigenvalues of a symmetric sparse matrix (descending).
inline std::pair<double, double> two_largest_eigenvalues(const SparseMatrix& m, const EigenOptions& opt = {}) {
    const Index n = m.rows();
    if (n < 2) throw DomainError("two_largest_eigenvalues: need at least 2 nodes");
    if (n <= opt.dense_threshold) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(m), Eigen::EigenvaluesOnly);
        return {es.eigenvalues()(n - 1), es.eigenvalues()(n - 2)};
    }
    auto op = [&m](const Vector& x, Vector& y) { y.noalias() = -(m * x); };
    auto pairs = detail::lanczos_smallest(op, n, 2, one_norm(m), opt);
    return {-pairs.values(0), -pairs.values(1)};
}

enum class SimilarityKind { cosine_eigen };

struct SimilarityScores {
    Vector mean_similarity;
    double epsilon = 1e-10;
};

/// Mean algebraic-Jaccard similarity of every node against all nodes:
///   S_ij = v_i.v_j / (|v_i||v_j| + eps),  mean_i = (1/n) sum_j S_ij
/// where v_i is row i of the eigenvector block. The n x n matrix is never
/// formed: for rows with |v| >= norm_floor the eps term is expanded as a
/// geometric series folded into three weighted row sums; the rare tiny rows
/// are handled pairwise.
inline SimilarityScores algebraic_jaccard_scores(const SpectralCache& cache, double epsilon = 1e-10,
                                                 SimilarityKind kind = SimilarityKind::cosine_eigen) {
    (void)kind;
    const Matrix& v = cache.eigenvectors;
    const Index n = v.rows();
    const Vector norms = v.rowwise().norm();
    const double norm_floor = std::max(1e-3, std::sqrt(epsilon) * 10.0);
    constexpr int kTerms = 4;  // series terms: error ~ (eps / floor^2)^kTerms

    std::vector<Index> regular, tiny;
    for (Index j = 0; j < n; ++j) (norms(j) >= norm_floor ? regular : tiny).push_back(j);

    // folded[m] = sum_{j regular} v_j / |v_j|^(m+1)
    Matrix folded = Matrix::Zero(kTerms, v.cols());
    for (Index j : regular) {
        double inv = 1.0 / norms(j);
        double p = inv;
        for (int m = 0; m < kTerms; ++m) {
            folded.row(m) += v.row(j) * p;
            p *= inv;
        }
    }

    auto pair = [&](Index i, Index j) { return v.row(i).dot(v.row(j)) / (norms(i) * norms(j) + epsilon); };

    SimilarityScores out;
    out.epsilon = epsilon;
    out.mean_similarity = Vector::Zero(n);
    for (Index i = 0; i < n; ++i) {
        double total = 0.0;
        if (norms(i) >= norm_floor) {
            // 1/(a b + e) = sum_m (-e)^m / (a b)^(m+1)
            const double inv_a = 1.0 / norms(i);
            double coef = inv_a;
            for (int m = 0; m < kTerms; ++m) {
                total += coef * v.row(i).dot(folded.row(m));
                coef *= -epsilon * inv_a;
            }
            for (Index j : tiny) total += pair(i, j);
        } else if (norms(i) > 0.0) {
            for (Index j = 0; j < n; ++j) total += pair(i, j);
        }
        out.mean_similarity(i) = total / static_cast<double>(n);
    }
    return out;
}

struct SelectionResult {
    std::vector<Index> selected;  // class 0 block first; within a class by descending score
    std::vector<Index> per_class_budget;
    Matrix init_features;  // rows aligned with `selected`
};

/// Scores are compared on a 1e-12 grid; equal keys fall back to node id.
inline double score_key(double s) { return std::round(s * 1e12); }

/// Per class, the budget[c] training nodes with highest mean similarity
/// (ties broken by ascending node id).
inline SelectionResult select_nodes(const GraphBundle& g, const SimilarityScores& scores, const std::vector<Index>& budget) {
    if (static_cast<Index>(budget.size()) != g.num_classes) throw ConfigError("select_nodes: budget length must equal num_classes");
    if (scores.mean_similarity.size() != g.num_nodes) throw DomainError("select_nodes: score vector length");
    const auto groups = nodes_by_class(g, g.split.train);
    SelectionResult res;
    res.per_class_budget = budget;
    for (Index c = 0; c < g.num_classes; ++c) {
        auto pool = groups[static_cast<std::size_t>(c)];
        const Index want = budget[static_cast<std::size_t>(c)];
        if (want < 0 || want > static_cast<Index>(pool.size())) {
            throw ConfigError("select_nodes: budget " + std::to_string(want) + " for class " + std::to_string(c) +
                              " exceeds its " + std::to_string(pool.size()) + " training nodes");
        }
        std::stable_sort(pool.begin(), pool.end(), [&](Index a, Index b) {
            const double sa = score_key(scores.mean_similarity(a)), sb = score_key(scores.mean_similarity(b));
            if (sa != sb) return sa > sb;
            return a < b;
        });
        res.selected.insert(res.selected.end(), pool.begin(), pool.begin() + want);
    }
    res.init_features.resize(static_cast<Index>(res.selected.size()), g.num_features);
    for (std::size_t k = 0; k < res.selected.size(); ++k) {
        res.init_features.row(static_cast<Index>(k)) = g.features.row(res.selected[k]).cast<double>();
    }
    return res;
}

/// Seeded class-stratified random selection (reference behaviour without
/// spectral guidance).
inline SelectionResult select_random(const GraphBundle& g, const std::vector<Index>& budget, Rng rng) {
    if (static_cast<Index>(budget.size()) != g.num_classes) throw ConfigError("select_random: budget length must equal num_classes");
    const auto groups = nodes_by_class(g, g.split.train);
    SelectionResult res;
    res.per_class_budget = budget;
    for (Index c = 0; c < g.num_classes; ++c) {
        const auto& pool = groups[static_cast<std::size_t>(c)];
        const Index want = budget[static_cast<std::size_t>(c)];
        if (want > static_cast<Index>(pool.size())) {
            throw ConfigError("select_random: budget for class " + std::to_string(c) + " exceeds its training nodes");
        }
        for (auto k : rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(want))) res.selected.push_back(pool[k]);
    }
    res.init_features.resize(static_cast<Index>(res.selected.size()), g.num_features);
    for (std::size_t k = 0; k < res.selected.size(); ++k) {
        res.init_features.row(static_cast<Index>(k)) = g.features.row(res.selected[k]).cast<double>();
    }
    return res;
}

/// 1 - lambda_2 of the self-loop-free symmetrically normalised adjacency.
inline double spectral_gap(const Matrix& weights) {
    if (weights.rows() < 2) throw DomainError("spectral_gap: need at least 2 nodes");
    const Matrix m = normalized_adjacency(weights, false);
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    return 1.0 - es.eigenvalues()(m.rows() - 2);
}

inline double spectral_gap(const WeightedGraph& w) { return spectral_gap(w.weights); }

inline double spectral_gap(const GraphBundle& g, const EigenOptions& opt = {}) {
    if (g.num_nodes < 2) throw DomainError("spectral_gap: need at least 2 nodes");
    return 1.0 - two_largest_eigenvalues(normalized_adjacency(g, false), opt).second;
}

}  // namespace hc
