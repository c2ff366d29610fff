#pragma once

// Link prediction, membership-inference attacks, statistics and export.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "hc/autodiff.hpp"
#include "hc/condensed.hpp"
#include "hc/errors.hpp"
#include "hc/graph.hpp"
#include "hc/io.hpp"
#include "hc/optim.hpp"
#include "hc/rng.hpp"

namespace hc {

// ---------------------------------------------------------------------------
// edge split

struct EdgeSplit {
    std::vector<Edge> train_pos, val_pos, test_pos;
    std::vector<Edge> train_neg, val_neg, test_neg;

    std::size_t num_negatives() const { return train_neg.size() + val_neg.size() + test_neg.size(); }
};

inline std::uint64_t pair_key(Index u, Index v, Index n) {
    if (u > v) std::swap(u, v);
    return static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(v);
}

/// `count` distinct node pairs (u < v) outside `excluded`, uniformly at random.
inline std::vector<Edge> sample_non_edges(Index n, std::size_t count, const std::unordered_set<std::uint64_t>& excluded, Rng& rng) {
    const auto total_pairs = static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(n - 1) / 2;
    if (total_pairs < excluded.size() || total_pairs - excluded.size() < count) {
        throw SamplingError("not enough non-edges: need " + std::to_string(count) + ", have " +
                            std::to_string(total_pairs > excluded.size() ? total_pairs - excluded.size() : 0));
    }
    const std::uint64_t available = total_pairs - excluded.size();
    std::vector<Edge> out;
    out.reserve(count);
    if (available <= 4 * static_cast<std::uint64_t>(count)) {
        std::vector<Edge> pool;
        for (Index u = 0; u < n; ++u)
            for (Index v = u + 1; v < n; ++v)
                if (!excluded.count(pair_key(u, v, n))) pool.emplace_back(u, v);
        for (auto k : rng.sample_without_replacement(pool.size(), count)) out.push_back(pool[k]);
        return out;
    }
    std::unordered_set<std::uint64_t> taken;
    while (out.size() < count) {
        const auto u = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        const auto v = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        if (u == v) continue;
        const auto key = pair_key(u, v, n);
        if (excluded.count(key) || !taken.insert(key).second) continue;
        out.emplace_back(std::min(u, v), std::max(u, v));
    }
    return out;
}

inline std::unordered_set<std::uint64_t> edge_keys(const GraphBundle& g) {
    std::unordered_set<std::uint64_t> keys;
    for (const auto& [u, v] : g.edges()) keys.insert(pair_key(u, v, g.num_nodes));
    return keys;
}

/// Positive edges shuffled into train/val/test; each partition gets as many
/// sampled non-edges as positives.
inline EdgeSplit split_edges(const GraphBundle& g, Rng rng, double train_frac = 0.7, double val_frac = 0.1) {
    if (train_frac <= 0 || val_frac < 0 || train_frac + val_frac >= 1) throw ConfigError("split_edges: invalid fractions");
    auto edges = g.edges();
    if (edges.size() < 3) throw EvaluationError("split_edges: graph needs at least 3 edges");
    Rng pos_rng = rng.split("split.positives");
    pos_rng.shuffle(edges);
    const auto e = edges.size();
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(e)));
    const auto n_val = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(e)));
    EdgeSplit s;
    s.train_pos.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val_pos.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train), edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test_pos.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), edges.end());
    Rng neg_rng = rng.split("split.negatives");
    const auto neg = sample_non_edges(g.num_nodes, e, edge_keys(g), neg_rng);
    s.train_neg.assign(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val_neg.assign(neg.begin() + static_cast<std::ptrdiff_t>(n_train), neg.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test_neg.assign(neg.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), neg.end());
    return s;
}

// ---------------------------------------------------------------------------
// propagation and GCN

/// Fixed normalised propagation D^-1/2 (A + I) D^-1/2, sparse or dense.
class Propagation {
public:
    static Propagation sparse(const SparseMatrix& adjacency) {
        Propagation p;
        p.sparse_ = std::make_shared<const SparseMatrix>(normalized_adjacency(adjacency, true));
        return p;
    }
    static Propagation dense(const Matrix& weights) {
        Propagation p;
        p.dense_ = normalized_adjacency(weights, true);
        return p;
    }

    Index nodes() const { return sparse_ ? sparse_->rows() : dense_.rows(); }

    ad::Var apply(const ad::Var& h) const {
        return sparse_ ? ad::spmm(sparse_, h) : ad::matmul(h.tape().constant(dense_), h);
    }
    Matrix apply(const Matrix& h) const { return sparse_ ? Matrix(*sparse_ * h) : Matrix(dense_ * h); }

private:
    std::shared_ptr<const SparseMatrix> sparse_;
    Matrix dense_;
};

/// Two graph-convolution layers: P relu(P X W1 + b1) W2 + b2.
struct Gcn {
    Matrix w1, b1, w2, b2;

    static Gcn init(Index in, Index hidden, Index out, Rng rng) {
        auto glorot = [&](Index r, Index c) {
            const double bound = std::sqrt(6.0 / static_cast<double>(r + c));
            return Matrix(Matrix::NullaryExpr(r, c, [&] { return rng.uniform(-bound, bound); }));
        };
        return {glorot(in, hidden), Matrix::Zero(1, hidden), glorot(hidden, out), Matrix::Zero(1, out)};
    }

    std::vector<Matrix*> params() { return {&w1, &b1, &w2, &b2}; }
    bool all_finite() const { return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite(); }
};

struct GcnVars {
    ad::Var w1, b1, w2, b2;
    std::vector<ad::Var> all() const { return {w1, b1, w2, b2}; }
};

inline GcnVars bind(ad::Tape& t, const Gcn& m) {
    return {t.parameter(m.w1), t.parameter(m.b1), t.parameter(m.w2), t.parameter(m.b2)};
}

inline ad::Var gcn_forward(const Propagation& p, const ad::Var& x, const GcnVars& v) {
    ad::Var h = ad::relu(ad::add(p.apply(ad::matmul(x, v.w1)), v.b1));
    return ad::add(p.apply(ad::matmul(h, v.w2)), v.b2);
}

inline Matrix gcn_forward(const Propagation& p, const Matrix& x, const Gcn& m) {
    Matrix h = p.apply(Matrix(x * m.w1)).rowwise() + m.b1.row(0);
    h = h.cwiseMax(0.0);
    return p.apply(Matrix(h * m.w2)).rowwise() + m.b2.row(0);
}

// ---------------------------------------------------------------------------
// link prediction

struct LpConfig {
    Index hidden = 128;
    int epochs = 100;
    double lr = 0.001;
    double edge_threshold = 0.5;  // condensed weights above this are positives
};

struct LpModel {
    Gcn encoder;
    double final_loss = 0.0;
};

inline Vector pair_logits(const Matrix& emb, const std::vector<Edge>& pairs) {
    Vector out(static_cast<Index>(pairs.size()));
    for (std::size_t k = 0; k < pairs.size(); ++k) out(static_cast<Index>(k)) = emb.row(pairs[k].first).dot(emb.row(pairs[k].second));
    return out;
}

inline ad::Var pair_logits(const ad::Var& emb, const std::vector<Edge>& pairs) {
    std::vector<Index> us, vs;
    for (const auto& [u, v] : pairs) {
        us.push_back(u);
        vs.push_back(v);
    }
    return ad::sum_cols(ad::mul(ad::gather_rows(emb, us), ad::gather_rows(emb, vs)));
}

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Full-batch BCE on positive/negative pairs with Adam.
inline LpModel train_lp(const Propagation& prop, const Matrix& x, const std::vector<Edge>& pos, const std::vector<Edge>& neg,
                        const LpConfig& cfg, Rng rng) {
    if (pos.empty()) throw EvaluationError("train_lp: no positive training edges; try a lower edge threshold");
    if (x.rows() != prop.nodes()) throw DomainError("train_lp: feature rows do not match the graph");
    LpModel model{Gcn::init(x.cols(), cfg.hidden, cfg.hidden, rng.split("lp.weights")), 0.0};
    std::vector<Edge> pairs = pos;
    pairs.insert(pairs.end(), neg.begin(), neg.end());
    Vector targets = Vector::Zero(static_cast<Index>(pairs.size()));
    targets.head(static_cast<Index>(pos.size())).setOnes();
    Adam opt(cfg.lr);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ad::Tape tape;
        const GcnVars v = bind(tape, model.encoder);
        ad::Var loss = ad::bce_with_logits(pair_logits(gcn_forward(prop, tape.constant(x), v), pairs), targets);
        if (!std::isfinite(loss.scalar())) throw NumericalError("train_lp: non-finite loss at epoch " + std::to_string(epoch));
        const auto grads = tape.backward(loss);
        std::vector<Matrix> g;
        for (const auto& p : v.all()) g.push_back(grads.wrt(p));
        opt.step(model.encoder.params(), g);
        model.final_loss = loss.scalar();
    }
    return model;
}

/// Message-passing graph of an edge split: train positives only.
inline SparseMatrix train_adjacency(const GraphBundle& g, const EdgeSplit& split) {
    return adjacency_from_edges(g.num_nodes, split.train_pos);
}

inline LpModel train_lp(const GraphBundle& g, const EdgeSplit& split, const LpConfig& cfg, Rng rng) {
    return train_lp(Propagation::sparse(train_adjacency(g, split)), g.features_dense(), split.train_pos, split.train_neg, cfg, rng);
}

/// Supervision from the condensed graph alone: pairs with weight above the
/// threshold are positives, the remaining pairs negatives.
inline LpModel train_lp(const CondensedGraph& cg, const LpConfig& cfg, Rng rng) {
    std::vector<Edge> pos, neg;
    const Matrix& w = cg.adjacency.weights;
    for (Index i = 0; i < w.rows(); ++i)
        for (Index j = i + 1; j < w.cols(); ++j) (w(i, j) > cfg.edge_threshold ? pos : neg).emplace_back(i, j);
    return train_lp(Propagation::dense(w), cg.features, pos, neg, cfg, rng);
}

/// Sigmoid link probabilities; symmetric in (u, v).
inline Vector lp_scores(const LpModel& m, const Propagation& prop, const Matrix& x, const std::vector<Edge>& pairs) {
    return pair_logits(gcn_forward(prop, x, m.encoder), pairs).unaryExpr([](double z) { return sigmoid(z); });
}

/// F1 with "positive iff score > threshold".
inline double binary_f1(const Vector& pos_scores, const Vector& neg_scores, double threshold = 0.5) {
    const double tp = static_cast<double>((pos_scores.array() > threshold).count());
    const double fp = static_cast<double>((neg_scores.array() > threshold).count());
    const double fn = static_cast<double>(pos_scores.size()) - tp;
    return tp == 0.0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
}

// ---------------------------------------------------------------------------
// run summaries

struct MetricReport {
    std::string metric;
    std::vector<double> runs;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation

    static MetricReport from(std::string metric, std::vector<double> runs) {
        MetricReport r{std::move(metric), std::move(runs), 0.0, 0.0};
        if (r.runs.empty()) return r;
        r.mean = std::accumulate(r.runs.begin(), r.runs.end(), 0.0) / static_cast<double>(r.runs.size());
        double ss = 0.0;
        for (double v : r.runs) ss += (v - r.mean) * (v - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(r.runs.size()));
        return r;
    }

    /// Percent with two decimals, e.g. "77.36±0.99".
    std::string format() const {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * mean, 100.0 * std);
        return buf;
    }
};

using AttackReport = MetricReport;

enum class LpPartition { val, test };

/// LP F1 over seeded runs. Each run draws a fresh edge split of `g`; the
/// model is trained on `g` itself or, when given, on the condensed graph,
/// and always scored on `g`'s held-out edges.
inline MetricReport evaluate_lp(const GraphBundle& g, const CondensedGraph* condensed, int runs, std::uint64_t seed,
                                const LpConfig& cfg = {}, LpPartition part = LpPartition::test) {
    if (runs < 1) throw ConfigError("evaluate_lp: runs must be positive");
    Rng root(seed);
    const Matrix x = g.features_dense();
    std::vector<double> f1;
    for (int r = 0; r < runs; ++r) {
        const auto split = split_edges(g, root.split("lp.split", static_cast<std::uint64_t>(r)));
        const Rng init = root.split("lp.train", static_cast<std::uint64_t>(r));
        const auto model = condensed ? train_lp(*condensed, cfg, init) : train_lp(g, split, cfg, init);
        const auto prop = Propagation::sparse(train_adjacency(g, split));
        const auto& pos = part == LpPartition::val ? split.val_pos : split.test_pos;
        const auto& neg = part == LpPartition::val ? split.val_neg : split.test_neg;
        f1.push_back(binary_f1(lp_scores(model, prop, x, pos), lp_scores(model, prop, x, neg)));
    }
    return MetricReport::from("f1", std::move(f1));
}

// ---------------------------------------------------------------------------
// node classifier (MIA target)

struct ClassifierConfig {
    Index hidden = 128;
    int epochs = 200;
    double lr = 0.01;
    double weight_decay = 5e-4;
};

inline Gcn train_classifier(const Propagation& prop, const Matrix& x, const std::vector<Index>& nodes, const std::vector<int>& labels,
                            Index num_classes, const ClassifierConfig& cfg, Rng rng) {
    if (nodes.empty() || nodes.size() != labels.size()) throw DomainError("train_classifier: bad training set");
    Gcn model = Gcn::init(x.cols(), cfg.hidden, num_classes, rng.split("clf.weights"));
    Adam opt(cfg.lr, cfg.weight_decay);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        ad::Tape tape;
        const GcnVars v = bind(tape, model);
        ad::Var loss = ad::softmax_cross_entropy(ad::gather_rows(gcn_forward(prop, tape.constant(x), v), nodes), labels);
        if (!std::isfinite(loss.scalar())) throw NumericalError("train_classifier: non-finite loss at epoch " + std::to_string(epoch));
        const auto grads = tape.backward(loss);
        std::vector<Matrix> g;
        for (const auto& p : v.all()) g.push_back(grads.wrt(p));
        opt.step(model.params(), g);
    }
    return model;
}

inline Gcn train_classifier(const GraphBundle& g, const ClassifierConfig& cfg, Rng rng) {
    std::vector<int> y;
    for (Index i : g.split.train) y.push_back(g.labels[static_cast<std::size_t>(i)]);
    return train_classifier(Propagation::sparse(g.adjacency), g.features_dense(), g.split.train, y, g.num_classes, cfg, rng);
}

inline Gcn train_classifier(const CondensedGraph& cg, const ClassifierConfig& cfg, Rng rng) {
    std::vector<Index> nodes(static_cast<std::size_t>(cg.num_nodes()));
    std::iota(nodes.begin(), nodes.end(), Index{0});
    return train_classifier(Propagation::dense(cg.adjacency.weights), cg.features, nodes, cg.labels, cg.num_classes, cfg, rng);
}

/// Highest softmax probability per node.
inline Vector max_confidence(const Gcn& model, const Propagation& prop, const Matrix& x) {
    const Matrix logits = gcn_forward(prop, x, model);
    Vector out(logits.rows());
    for (Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        out(i) = 1.0 / (logits.row(i).array() - m).exp().sum();
    }
    return out;
}

// ---------------------------------------------------------------------------
// threshold attacks

enum class AttackMetric { accuracy, f1 };

/// Threshold t maximising accuracy of "member iff score > t" over the
/// observed score values; ties prefer the larger t.
inline double fit_threshold(const std::vector<double>& scores, const std::vector<bool>& member) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    const auto members = static_cast<double>(std::count(member.begin(), member.end(), true));
    double below_members = 0.0, below_non = 0.0;  // counts with score <= t
    double best_acc = -1.0, best_t = scores.empty() ? 0.0 : scores[order.front()];
    for (std::size_t k = 0; k < order.size();) {
        const double t = scores[order[k]];
        while (k < order.size() && scores[order[k]] == t) {
            (member[order[k]] ? below_members : below_non) += 1.0;
            ++k;
        }
        const double acc = (members - below_members) + below_non;
        if (acc >= best_acc) {
            best_acc = acc;
            best_t = t;
        }
    }
    return best_t;
}

/// Balanced member/non-member samples per run, split into a calibration half
/// (threshold fitting) and an evaluation half (reported metric).
inline MetricReport threshold_attack(const Vector& member_scores, const Vector& nonmember_scores, int runs, Rng rng,
                                     AttackMetric metric) {
    const auto k = static_cast<std::size_t>(std::min(member_scores.size(), nonmember_scores.size()));
    if (k < 2) throw SamplingError("threshold_attack: need at least two members and two non-members");
    std::vector<double> values;
    for (int r = 0; r < runs; ++r) {
        Rng run = rng.split("attack.run", static_cast<std::uint64_t>(r));
        struct Sample {
            double score;
            bool member;
        };
        std::vector<Sample> all;
        for (auto i : run.sample_without_replacement(static_cast<std::size_t>(member_scores.size()), k))
            all.push_back({member_scores(static_cast<Index>(i)), true});
        for (auto i : run.sample_without_replacement(static_cast<std::size_t>(nonmember_scores.size()), k))
            all.push_back({nonmember_scores(static_cast<Index>(i)), false});
        run.shuffle(all);
        const std::size_t half = all.size() / 2;
        std::vector<double> cs;
        std::vector<bool> cm;
        for (std::size_t i = 0; i < half; ++i) {
            cs.push_back(all[i].score);
            cm.push_back(all[i].member);
        }
        const double t = fit_threshold(cs, cm);
        double tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = half; i < all.size(); ++i) {
            const bool pred = all[i].score > t;
            if (pred && all[i].member) ++tp;
            if (pred && !all[i].member) ++fp;
            if (!pred && all[i].member) ++fn;
            if (!pred && !all[i].member) ++tn;
        }
        if (metric == AttackMetric::accuracy) {
            values.push_back((tp + tn) / (tp + tn + fp + fn));
        } else {
            values.push_back(tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn));
        }
    }
    return MetricReport::from(metric == AttackMetric::accuracy ? "accuracy" : "f1", std::move(values));
}

/// LMIA: members are the split's training edges, non-members are fresh
/// non-edges never used in training. Scores come from the target on `g`.
inline AttackReport attack_lmia(const LpModel& target, const GraphBundle& g, const EdgeSplit& split, int runs, Rng rng) {
    auto excluded = edge_keys(g);
    for (const auto* part : {&split.train_neg, &split.val_neg, &split.test_neg})
        for (const auto& [u, v] : *part) excluded.insert(pair_key(u, v, g.num_nodes));
    Rng neg_rng = rng.split("lmia.nonmembers");
    const auto non_members = sample_non_edges(g.num_nodes, split.train_pos.size(), excluded, neg_rng);
    const auto prop = Propagation::sparse(train_adjacency(g, split));
    const Matrix x = g.features_dense();
    return threshold_attack(lp_scores(target, prop, x, split.train_pos), lp_scores(target, prop, x, non_members), runs,
                            rng.split("lmia.runs"), AttackMetric::f1);
}

/// MIA: members are training nodes, non-members test nodes; the attacker
/// sees the target's confidence with features propagated over `g`.
inline AttackReport attack_mia(const Gcn& target, const GraphBundle& g, int runs, Rng rng) {
    const Vector conf = max_confidence(target, Propagation::sparse(g.adjacency), g.features_dense());
    Vector mem(static_cast<Index>(g.split.train.size())), non(static_cast<Index>(g.split.test.size()));
    for (std::size_t i = 0; i < g.split.train.size(); ++i) mem(static_cast<Index>(i)) = conf(g.split.train[i]);
    for (std::size_t i = 0; i < g.split.test.size(); ++i) non(static_cast<Index>(i)) = conf(g.split.test[i]);
    return threshold_attack(mem, non, runs, rng.split("mia.runs"), AttackMetric::accuracy);
}

// ---------------------------------------------------------------------------
// statistics and export

struct GraphStats {
    Index nodes = 0;
    Index edges = 0;
    double density = 0.0;
};

inline double density(Index nodes, Index edges) {
    if (nodes < 2) return 0.0;
    return 2.0 * static_cast<double>(edges) / (static_cast<double>(nodes) * static_cast<double>(nodes - 1));
}

inline GraphStats stats(const GraphBundle& g) { return {g.num_nodes, g.num_edges(), density(g.num_nodes, g.num_edges())}; }

/// Weighted graphs count pairs with weight above the threshold.
inline GraphStats stats(const WeightedGraph& w, double threshold = 0.5) {
    const Index n = w.weights.rows();
    Index e = 0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            if (w.weights(i, j) > threshold) ++e;
    return {n, e, density(n, e)};
}

inline constexpr double kMaxPenWidth = 5.0;

/// Undirected DOT graph; pen width is kMaxPenWidth * weight and edges with
/// weight <= threshold are omitted.
inline void export_dot(const WeightedGraph& w, const std::vector<int>& labels, const std::filesystem::path& path,
                       double threshold = 0.0) {
    auto out = io::open_out(path);
    out << "graph condensed {\n";
    for (Index i = 0; i < w.weights.rows(); ++i) {
        out << "  " << i;
        if (static_cast<std::size_t>(i) < labels.size()) out << " [label=\"" << i << " (y=" << labels[static_cast<std::size_t>(i)] << ")\"]";
        out << ";\n";
    }
    char buf[32];
    for (Index i = 0; i < w.weights.rows(); ++i) {
        for (Index j = i + 1; j < w.weights.cols(); ++j) {
            const double v = w.weights(i, j);
            if (!(v > threshold)) continue;
            std::snprintf(buf, sizeof buf, "%.4f", kMaxPenWidth * v);
            out << "  " << i << " -- " << j << " [penwidth=" << buf << "];\n";
        }
    }
    out << "}\n";
    if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// efficiency and reports

struct Efficiency {
    double seconds = 0.0;
    std::uintmax_t bytes = 0;
};

/// Wall-clock of an `epochs`-long LP training run plus on-disk size of `artifact`.
inline Efficiency measure_efficiency(const GraphBundle& g, const std::filesystem::path& artifact, int epochs = 1000,
                                     std::uint64_t seed = 0) {
    LpConfig cfg;
    cfg.epochs = epochs;
    Rng root(seed);
    const auto split = split_edges(g, root.split("eff.split"));
    const auto start = std::chrono::steady_clock::now();
    train_lp(g, split, cfg, root.split("eff.train"));
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    return {dt.count(), io::disk_bytes(artifact)};
}

inline Efficiency measure_efficiency(const CondensedGraph& cg, const std::filesystem::path& artifact, int epochs = 1000,
                                     std::uint64_t seed = 0, double edge_threshold = 0.5) {
    LpConfig cfg;
    cfg.epochs = epochs;
    cfg.edge_threshold = edge_threshold;
    const auto start = std::chrono::steady_clock::now();
    train_lp(cg, cfg, Rng(seed).split("eff.train"));
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    return {dt.count(), io::disk_bytes(artifact)};
}

/// {task, dataset, rate, runs, mean, std} with six significant digits.
inline nlohmann::json report_json(const std::string& task, const std::string& dataset, double rate, const MetricReport& r) {
    std::vector<double> runs;
    for (double v : r.runs) runs.push_back(io::round_sig(v));
    nlohmann::json j{{"task", task}, {"dataset", dataset}, {"metric", r.metric}, {"runs", runs},
                     {"mean", io::round_sig(r.mean)}, {"std", io::round_sig(r.std)}};
    j["rate"] = std::isnan(rate) ? nlohmann::json(nullptr) : nlohmann::json(io::round_sig(rate));
    return j;
}

}  // namespace hc
