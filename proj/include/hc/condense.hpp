#pragma once

// The condensation loop: spectral node selection, SGC gradient matching,
// spectral-gap matching and alternating feature/structure updates.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "hc/autodiff.hpp"
#include "hc/condensed.hpp"
#include "hc/errors.hpp"
#include "hc/eval.hpp"
#include "hc/graph.hpp"
#include "hc/hyperbolic.hpp"
#include "hc/optim.hpp"
#include "hc/rng.hpp"
#include "hc/sgc.hpp"
#include "hc/spectral.hpp"

namespace hc {

struct CondenseConfig {
    double reduction_rate = 0.01;
    int repeats = 1;
    int epochs = 600;
    double lr_feat = 0.1;
    double lr_struct = 0.0001;
    double lr_sgc = 0.01;
    double beta = 0.1;
    int tau1 = 40;
    int tau2 = 10;
    double curvature = -0.1;
    int sgc_layers = 2;
    Index hidden_units = 256;
    int structure_layers = 2;
    int outer_loops = 10;
    int inner_loops = 1;
    Index k_eig = 0;                  // 0: num_classes + 1
    Index per_class_sample_size = 0;  // 0: max(256, 10 * budget[c])
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::string selection = "jaccard";  // jaccard | random
    bool strict_algorithm = false;
    int checkpoint_every = 50;
    int val_runs = 1;
    double edge_threshold = 0.5;
    Index dense_threshold = 3000;
    std::uint64_t seed = 0;

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError(m); };
        if (!(reduction_rate > 0.0 && reduction_rate < 1.0)) fail("reduction_rate must lie in (0, 1)");
        if (repeats < 1) fail("repeats must be positive");
        if (tau1 < 1 || tau2 < 1) fail("tau1 and tau2 must be at least 1");
        if (epochs < tau1 + tau2) fail("epochs must be at least tau1 + tau2");
        for (double lr : {lr_feat, lr_struct, lr_sgc})
            if (!(lr > 0.0) || !std::isfinite(lr)) fail("learning rates must be positive");
        if (!(beta >= 0.0)) fail("beta must be non-negative");
        if (!(curvature < 0.0)) fail("curvature must be negative");
        if (sgc_layers < 0 || hidden_units < 1 || structure_layers < 1) fail("layer sizes must be positive");
        if (outer_loops < 1 || inner_loops < 0) fail("outer_loops must be positive and inner_loops non-negative");
        if (k_eig < 0 || per_class_sample_size < 0) fail("k_eig and per_class_sample_size must be non-negative");
        if (!(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0)) fail("invalid momentum or weight_decay");
        if (selection != "jaccard" && selection != "random") fail("selection must be 'jaccard' or 'random'");
        if (checkpoint_every < 1 || val_runs < 0) fail("checkpoint_every must be positive and val_runs non-negative");
        if (!(edge_threshold >= 0.0 && edge_threshold < 1.0)) fail("edge_threshold must lie in [0, 1)");
    }
};

// ---------------------------------------------------------------------------
// key=value configuration

struct ConfigKey {
    std::string name;
    std::string help;
    std::function<void(CondenseConfig&, const std::string&)> set;
    std::function<std::string(const CondenseConfig&)> get;
};

namespace config_detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        T out;
        if constexpr (std::is_same_v<T, double>) {
            out = std::stod(v, &used);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
            out = std::stoull(v, &used);
        } else {
            out = static_cast<T>(std::stoll(v, &used));
        }
        if (used != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

template <typename T>
ConfigKey number_key(std::string name, std::string help, T CondenseConfig::*field) {
    const std::string n = name;
    return {std::move(name), std::move(help), [n, field](CondenseConfig& c, const std::string& v) { c.*field = parse_number<T>(n, v); },
            [field](const CondenseConfig& c) {
                if constexpr (std::is_same_v<T, double>) {
                    return fmt(c.*field);
                } else {
                    return std::to_string(c.*field);
                }
            }};
}

}  // namespace config_detail

/// Every configurable field, in canonical order.
inline const std::vector<ConfigKey>& config_keys() {
    using config_detail::number_key;
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        k.push_back(number_key("reduction_rate", "fraction of training nodes kept", &CondenseConfig::reduction_rate));
        k.push_back(number_key("repeats", "independent condensation repeats", &CondenseConfig::repeats));
        k.push_back(number_key("epochs", "epochs per repeat", &CondenseConfig::epochs));
        k.push_back(number_key("lr_feat", "feature learning rate", &CondenseConfig::lr_feat));
        k.push_back(number_key("lr_struct", "structure-net learning rate", &CondenseConfig::lr_struct));
        k.push_back(number_key("lr_sgc", "SGC learning rate", &CondenseConfig::lr_sgc));
        k.push_back(number_key("beta", "weight of the adjacency Frobenius norm", &CondenseConfig::beta));
        k.push_back(number_key("tau1", "feature-update epochs per cycle", &CondenseConfig::tau1));
        k.push_back(number_key("tau2", "structure-update epochs per cycle", &CondenseConfig::tau2));
        k.push_back(number_key("curvature", "Poincare ball curvature (negative)", &CondenseConfig::curvature));
        k.push_back(number_key("sgc_layers", "SGC propagation depth", &CondenseConfig::sgc_layers));
        k.push_back(number_key("hidden_units", "hidden width of the SGC and structure net", &CondenseConfig::hidden_units));
        k.push_back(number_key("structure_layers", "hidden layers of the structure net", &CondenseConfig::structure_layers));
        k.push_back(number_key("outer_loops", "SGC re-initialisations per repeat", &CondenseConfig::outer_loops));
        k.push_back(number_key("inner_loops", "SGC steps per epoch", &CondenseConfig::inner_loops));
        k.push_back(number_key("k_eig", "Laplacian eigenvectors for selection (0: classes + 1)", &CondenseConfig::k_eig));
        k.push_back(number_key("per_class_sample_size", "original nodes sampled per class (0: max(256, 10 budget))",
                               &CondenseConfig::per_class_sample_size));
        k.push_back(number_key("momentum", "structure-net momentum", &CondenseConfig::momentum));
        k.push_back(number_key("weight_decay", "structure-net weight decay", &CondenseConfig::weight_decay));
        k.push_back({"selection", "node selection: jaccard or random",
                     [](CondenseConfig& c, const std::string& v) { c.selection = v; },
                     [](const CondenseConfig& c) { return c.selection; }});
        k.push_back({"strict_algorithm", "rebuild A' inside the class loop",
                     [](CondenseConfig& c, const std::string& v) { c.strict_algorithm = config_detail::parse_bool("strict_algorithm", v); },
                     [](const CondenseConfig& c) { return std::string(c.strict_algorithm ? "true" : "false"); }});
        k.push_back(number_key("checkpoint_every", "epochs between validation checkpoints", &CondenseConfig::checkpoint_every));
        k.push_back(number_key("val_runs", "link-prediction runs per checkpoint (0: keep last)", &CondenseConfig::val_runs));
        k.push_back(number_key("edge_threshold", "A' weight above which a pair counts as an edge", &CondenseConfig::edge_threshold));
        k.push_back(number_key("dense_threshold", "largest graph solved with the dense eigensolver", &CondenseConfig::dense_threshold));
        k.push_back(number_key("seed", "random seed", &CondenseConfig::seed));
        return k;
    }();
    return keys;
}

inline void set_config_value(CondenseConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& k : config_keys()) {
        if (k.name == key) {
            k.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

/// Applies "key = value" lines; '#' starts a comment.
inline void apply_config_text(CondenseConfig& cfg, const std::string& text, const std::string& source = "config") {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
        set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

inline void apply_config_file(CondenseConfig& cfg, const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(cfg, ss.str(), p.string());
}

/// Canonical "key = value" listing of every field.
inline std::string config_to_text(const CondenseConfig& cfg) {
    std::string out;
    for (const auto& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
    return out;
}

inline std::string config_hash(const CondenseConfig& cfg) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config_to_text(cfg))));
    return buf;
}

// ---------------------------------------------------------------------------
// budget and initialisation

/// round(rate * total) nodes split across classes in proportion to `counts`
/// by largest remainder, with at least one node per class.
inline std::vector<Index> budget_from_counts(const std::vector<Index>& counts, double rate) {
    if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("budget: rate must lie in (0, 1]");
    Index n = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] < 1) throw ConfigError("budget: class " + std::to_string(c) + " has no training nodes");
        n += counts[c];
    }
    const auto classes = static_cast<Index>(counts.size());
    const auto total = static_cast<Index>(std::llround(rate * static_cast<double>(n)));
    if (total < classes) {
        throw ConfigError("budget: rate " + config_detail::fmt(rate) + " keeps " + std::to_string(total) + " of " + std::to_string(n) +
                          " training nodes, fewer than the " + std::to_string(classes) + " classes");
    }
    std::vector<Index> budget(counts.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    Index assigned = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const double quota = static_cast<double>(total) * static_cast<double>(counts[c]) / static_cast<double>(n);
        budget[c] = static_cast<Index>(std::floor(quota));
        assigned += budget[c];
        remainders.emplace_back(quota - std::floor(quota), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (Index k = 0; k < total - assigned; ++k) ++budget[remainders[static_cast<std::size_t>(k)].second];
    for (std::size_t c = 0; c < budget.size(); ++c) {
        if (budget[c] > 0) continue;
        // take one node from the largest class allocation (lowest id on ties)
        std::size_t donor = 0;
        for (std::size_t d = 1; d < budget.size(); ++d)
            if (budget[d] > budget[donor]) donor = d;
        --budget[donor];
        budget[c] = 1;
    }
    return budget;
}

inline std::vector<Index> budget_from_rate(const GraphBundle& g, double rate) {
    return budget_from_counts(class_distribution(g, g.split.train), rate);
}

/// Selection-ordered rows: features X_S, labels from the class blocks.
inline CondensedGraph init_condensed(const GraphBundle& g, const std::vector<Index>& budget, const SelectionResult& sel) {
    Index total = 0;
    for (auto b : budget) total += b;
    if (static_cast<Index>(sel.selected.size()) != total || sel.init_features.rows() != total) {
        throw DomainError("init_condensed: selection does not match the budget");
    }
    CondensedGraph cg;
    cg.num_classes = g.num_classes;
    cg.features = sel.init_features;
    cg.source_nodes = sel.selected;
    for (Index v : sel.selected) cg.labels.push_back(g.labels[static_cast<std::size_t>(v)]);
    if (label_histogram(cg.labels, g.num_classes) != budget) throw DomainError("init_condensed: selection labels do not match the budget");
    cg.adjacency.weights = Matrix::Zero(total, total);
    return cg;
}

inline SelectionResult select_for_condensation(const GraphBundle& g, const std::vector<Index>& budget, const CondenseConfig& cfg,
                                               SimilarityScores* scores_out = nullptr) {
    if (cfg.selection == "random") return select_random(g, budget, Rng(cfg.seed).split("selection"));
    const Index k = cfg.k_eig > 0 ? std::min(cfg.k_eig, g.num_nodes) : std::min(g.num_classes + 1, g.num_nodes);
    EigenOptions opt;
    opt.dense_threshold = cfg.dense_threshold;
    opt.seed = cfg.seed;
    auto scores = algebraic_jaccard_scores(smallest_eigenvectors(laplacian(g), k, opt));
    auto sel = select_nodes(g, scores, budget);
    if (scores_out) *scores_out = std::move(scores);
    return sel;
}

// ---------------------------------------------------------------------------
// loss terms

/// 1 - lambda_2 of the subgraph induced by `nodes`.
inline double sampled_spectral_gap(const GraphBundle& g, const std::vector<Index>& nodes, const EigenOptions& opt = {}) {
    if (nodes.size() < 2) throw DomainError("sampled_spectral_gap: need at least 2 nodes");
    std::vector<Index> local(static_cast<std::size_t>(g.num_nodes), -1);
    for (std::size_t k = 0; k < nodes.size(); ++k) local[static_cast<std::size_t>(nodes[k])] = static_cast<Index>(k);
    std::vector<Edge> edges;
    for (Index u : nodes) {
        for (SparseMatrix::InnerIterator it(g.adjacency, u); it; ++it) {
            const Index v = local[static_cast<std::size_t>(it.col())];
            const Index lu = local[static_cast<std::size_t>(u)];
            if (v >= 0 && lu < v) edges.emplace_back(lu, v);
        }
    }
    const SparseMatrix a = adjacency_from_edges(static_cast<Index>(nodes.size()), edges);
    return 1.0 - two_largest_eigenvalues(normalized_adjacency(a, false), opt).second;
}

/// |(1 - lambda_2') - S_sampling| with lambda_2' taken from the self-loop-free
/// normalisation of A'.
inline ad::Var spectral_loss(const ad::Var& adjacency, double sampling_gap) {
    ad::Var gap = ad::add_scalar(ad::neg(ad::second_largest_eigenvalue(normalize_dense(adjacency))), 1.0);
    return ad::abs(ad::add_scalar(gap, -sampling_gap));
}

inline double spectral_loss(const WeightedGraph& synth, const WeightedGraph& sampled) {
    return std::abs(spectral_gap(synth) - spectral_gap(sampled));
}

/// Original-graph side of one class for one epoch.
struct ClassBatch {
    int label = 0;
    std::vector<Index> nodes;
    SgcGradient real;
};

struct EpochBatch {
    std::vector<ClassBatch> classes;
    double sampling_gap = 0.0;
};

struct LossTerms {
    ad::Var adjacency;
    ad::Var total, gradient, spectral, regularization;
};

/// Accumulates, per class c, L_gradient(c) + L_spectral + beta |A'|_F.
inline LossTerms condensation_loss(const ad::Var& features, const HyperbolicStructureNet& net, const NetVars& phi, const SgcModel& sgc,
                                   const std::vector<int>& labels, const EpochBatch& batch, const CondenseConfig& cfg,
                                   std::vector<hyp::BatchStats>* stats = nullptr) {
    ad::Tape& tape = features.tape();
    LossTerms out;
    out.gradient = tape.constant_scalar(0.0);
    out.spectral = tape.constant_scalar(0.0);
    out.regularization = tape.constant_scalar(0.0);

    ad::Var adj, z, spec, reg;
    auto build = [&] {
        if (stats) stats->clear();
        adj = synth_adjacency(features, net, phi, stats);
        z = sgc_propagate(adj, features, sgc.depth);
        spec = spectral_loss(adj, batch.sampling_gap);
        reg = ad::scale(ad::frobenius_norm(adj), cfg.beta);
    };
    if (!cfg.strict_algorithm) build();
    for (const auto& cb : batch.classes) {
        if (cfg.strict_algorithm) build();
        std::vector<Index> rows;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cb.label) rows.push_back(static_cast<Index>(i));
        if (rows.empty() || cb.nodes.empty()) continue;
        const std::vector<int> ys(rows.size(), cb.label);
        ad::Var g = gradient_matching_loss(cb.real, sgc_gradient(sgc, ad::gather_rows(z, rows), ys));
        for (const auto* v : {&g, &spec, &reg}) {
            if (!std::isfinite(v->scalar())) throw NumericalError("condense: non-finite loss term for class " + std::to_string(cb.label));
        }
        out.gradient = ad::add(out.gradient, g);
        out.spectral = ad::add(out.spectral, spec);
        out.regularization = ad::add(out.regularization, reg);
    }
    if (!adj.valid()) build();
    out.adjacency = adj;
    out.total = ad::add(ad::add(out.gradient, out.spectral), out.regularization);
    return out;
}

// ---------------------------------------------------------------------------
// optimisation

/// Per-class original sample sizes: max(256, 10 budget[c]) capped at the class size.
inline std::vector<Index> sample_sizes(const std::vector<Index>& class_sizes, const std::vector<Index>& budget, Index override_size) {
    std::vector<Index> out;
    for (std::size_t c = 0; c < class_sizes.size(); ++c) {
        const Index want = override_size > 0 ? override_size : std::max<Index>(256, 10 * budget[c]);
        out.push_back(std::min(want, class_sizes[c]));
    }
    return out;
}

/// Momentum buffers for the structure net.
struct StructureOptimizer {
    std::vector<Matrix> buffers;
    std::vector<Vector> bias_buffers;

    void step(HyperbolicStructureNet& net, const NetVars& vars, const ad::Gradients& grads, const CondenseConfig& cfg) {
        std::vector<std::pair<Matrix*, ad::Var>> euclid;
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            euclid.emplace_back(&net.layers[l].weight, vars.layers[l].weight);
            euclid.emplace_back(&net.layers[l].gamma, vars.layers[l].gamma);
            euclid.emplace_back(&net.layers[l].beta, vars.layers[l].beta);
        }
        euclid.emplace_back(&net.readout_weight, vars.readout_weight);
        euclid.emplace_back(&net.readout_bias, vars.readout_bias);
        buffers.resize(euclid.size());
        for (std::size_t k = 0; k < euclid.size(); ++k) {
            momentum_step(*euclid[k].first, grads.wrt(euclid[k].second), buffers[k], cfg.lr_struct, cfg.momentum, cfg.weight_decay);
        }
        bias_buffers.resize(net.layers.size());
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            Vector b = net.layers[l].bias.row(0).transpose();
            const Vector g = grads.wrt(vars.layers[l].bias).row(0).transpose();
            riemannian_step(b, g, bias_buffers[l], net.curvature, cfg.lr_struct, cfg.momentum);
            net.layers[l].bias = b.transpose();
        }
    }
};

/// Scores a candidate condensed graph; higher is better.
using Validator = std::function<double(const CondensedGraph&)>;

struct CondenseResult {
    CondensedGraph graph;
    HyperbolicStructureNet net;
    std::vector<EpochRecord> history;
    std::vector<Index> budget;
    SelectionResult selection;
};

inline bool is_feature_epoch(int epoch, const CondenseConfig& cfg) { return epoch % (cfg.tau1 + cfg.tau2) < cfg.tau1; }

/// Everything a repeat needs from the original graph, computed once.
struct CondenseProblem {
    const GraphBundle* graph = nullptr;
    CondenseConfig cfg;
    CondensedGraph init;
    Matrix z_full;  // S^K X over the full original graph
    std::vector<std::vector<Index>> groups;
    std::vector<Index> sample_sizes;
    EigenOptions gap_options;
};

struct RepeatOutcome {
    CondensedGraph best;
    HyperbolicStructureNet net;
    std::vector<EpochRecord> history;
    double score = -std::numeric_limits<double>::infinity();
};

/// One repeat: fresh structure net and SGC from the repeat's stream, X'
/// reset to the selected features. Keeps the first checkpoint with the
/// highest validator score (the last one without a validator).
inline RepeatOutcome condense_repeat(const CondenseProblem& p, int rep, const Validator& validator) {
    const auto& cfg = p.cfg;
    const auto& g = *p.graph;
    const auto& labels = p.init.labels;
    const Rng rr = Rng(cfg.seed).split("repeat", static_cast<std::uint64_t>(rep));
    const int reinit_every = std::max(1, cfg.epochs / cfg.outer_loops);

    RepeatOutcome out;
    bool have_best = false;
    Matrix xs = p.init.features;
    HyperbolicStructureNet net =
        HyperbolicStructureNet::init(g.num_features, cfg.hidden_units, cfg.structure_layers, cfg.curvature, rr.split("structure"));
    StructureOptimizer opt;
    SgcModel sgc = SgcModel::init(g.num_features, cfg.hidden_units, g.num_classes, cfg.sgc_layers, rr.split("sgc", 0));
    std::vector<Index> cached_union;
    double cached_gap = 0.0;

    for (int t = 0; t < cfg.epochs; ++t) {
        if (t > 0 && t % reinit_every == 0 && t / reinit_every < cfg.outer_loops) {
            sgc = SgcModel::init(g.num_features, cfg.hidden_units, g.num_classes, cfg.sgc_layers,
                                 rr.split("sgc", static_cast<std::uint64_t>(t / reinit_every)));
        }

        // original-graph side
        EpochBatch batch;
        Rng sampler = rr.split("sample", static_cast<std::uint64_t>(t));
        std::vector<Index> all_nodes;
        for (std::size_t c = 0; c < p.groups.size(); ++c) {
            ClassBatch cb;
            cb.label = static_cast<int>(c);
            for (auto k : sampler.sample_without_replacement(p.groups[c].size(), static_cast<std::size_t>(p.sample_sizes[c])))
                cb.nodes.push_back(p.groups[c][k]);
            std::sort(cb.nodes.begin(), cb.nodes.end());
            Matrix zc(static_cast<Index>(cb.nodes.size()), p.z_full.cols());
            for (std::size_t i = 0; i < cb.nodes.size(); ++i) zc.row(static_cast<Index>(i)) = p.z_full.row(cb.nodes[i]);
            cb.real = sgc_gradient(sgc, zc, std::vector<int>(cb.nodes.size(), cb.label));
            all_nodes.insert(all_nodes.end(), cb.nodes.begin(), cb.nodes.end());
            batch.classes.push_back(std::move(cb));
        }
        std::sort(all_nodes.begin(), all_nodes.end());
        if (all_nodes != cached_union) {
            cached_gap = sampled_spectral_gap(g, all_nodes, p.gap_options);
            cached_union = std::move(all_nodes);
        }
        batch.sampling_gap = cached_gap;

        // condensed side
        const bool feature_phase = is_feature_epoch(t, cfg);
        ad::Tape tape;
        ad::Var xv = feature_phase ? tape.parameter(xs) : tape.constant(xs);
        const NetVars phi = bind(tape, net, !feature_phase);
        std::vector<hyp::BatchStats> stats;
        const LossTerms terms = condensation_loss(xv, net, phi, sgc, labels, batch, cfg, &stats);
        if (!std::isfinite(terms.total.scalar())) {
            throw NumericalError("condense: non-finite loss at epoch " + std::to_string(t) + " of repeat " + std::to_string(rep));
        }
        const Matrix adj = terms.adjacency.value();
        ad::Tape vt;
        const Matrix zs = sgc_propagate(vt.constant(adj), vt.constant(xs), cfg.sgc_layers).value();
        const auto grads = tape.backward(terms.total);
        if (feature_phase) {
            xs -= cfg.lr_feat * grads.wrt(xv);
        } else {
            opt.step(net, phi, grads, cfg);
            if (!net.all_finite()) throw NumericalError("condense: structure net diverged at epoch " + std::to_string(t));
        }
        update_running_stats(net, stats);

        EpochRecord rec;
        rec.repeat = rep;
        rec.epoch = t;
        rec.feature_phase = feature_phase;
        rec.total = terms.total.scalar();
        rec.gradient = terms.gradient.scalar();
        rec.spectral = terms.spectral.scalar();
        rec.regularization = terms.regularization.scalar();

        // theta steps on the condensed task loss at this epoch's pre-update A', X'
        rec.sgc_loss = sgc_task_loss(sgc, zs, labels);
        for (int k = 0; k < cfg.inner_loops; ++k) sgc_step(sgc, sgc_gradient(sgc, zs, labels), cfg.lr_sgc);
        if (!sgc.all_finite()) throw NumericalError("condense: SGC weights diverged at epoch " + std::to_string(t));

        if ((t + 1) % cfg.checkpoint_every == 0 || t + 1 == cfg.epochs) {
            CondensedGraph cand = p.init;
            cand.features = xs;
            cand.adjacency = synth_adjacency(xs, net);
            cand.best_repeat = rep;
            cand.best_epoch = t + 1;
            const double score = validator ? validator(cand) : static_cast<double>(t);
            if (validator) rec.val_f1 = score;
            if (!have_best || score > out.score) {
                have_best = true;
                out.score = score;
                if (validator) cand.val_f1 = score;
                out.best = std::move(cand);
                out.net = net;
            }
        }
        out.history.push_back(rec);
    }
    return out;
}

/// Full condensation. `validator` ranks checkpoints; without it the last
/// checkpoint of the last repeat is kept. Repeats run on up to `threads`
/// workers; the result does not depend on the thread count.
inline CondenseResult condense(const GraphBundle& g, const CondenseConfig& cfg, const Validator& validator = {}, int threads = 1) {
    cfg.validate();
    CondenseResult res;
    res.budget = budget_from_rate(g, cfg.reduction_rate);
    res.selection = select_for_condensation(g, res.budget, cfg);

    CondenseProblem p;
    p.graph = &g;
    p.cfg = cfg;
    p.init = init_condensed(g, res.budget, res.selection);
    if (p.init.num_nodes() < 2) throw ConfigError("condense: the budget must contain at least 2 nodes");
    p.z_full = sgc_propagate(g.adjacency, g.features_dense(), cfg.sgc_layers);
    p.groups = nodes_by_class(g, g.split.train);
    std::vector<Index> class_sizes;
    for (const auto& grp : p.groups) class_sizes.push_back(static_cast<Index>(grp.size()));
    p.sample_sizes = sample_sizes(class_sizes, res.budget, cfg.per_class_sample_size);
    p.gap_options.dense_threshold = std::min<Index>(cfg.dense_threshold, 400);
    p.gap_options.seed = cfg.seed;

    std::vector<RepeatOutcome> outcomes(static_cast<std::size_t>(cfg.repeats));
    const int workers = std::clamp(threads, 1, cfg.repeats);
    if (workers == 1) {
        for (int rep = 0; rep < cfg.repeats; ++rep) outcomes[static_cast<std::size_t>(rep)] = condense_repeat(p, rep, validator);
    } else {
        std::atomic<int> next{0};
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.repeats));
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int rep = next++; rep < cfg.repeats; rep = next++) {
                    try {
                        outcomes[static_cast<std::size_t>(rep)] = condense_repeat(p, rep, validator);
                    } catch (...) {
                        errors[static_cast<std::size_t>(rep)] = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    std::size_t best = 0;
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
        if (validator ? outcomes[r].score > outcomes[best].score : true) best = r;
        res.history.insert(res.history.end(), outcomes[r].history.begin(), outcomes[r].history.end());
    }
    res.graph = std::move(outcomes[best].best);
    res.net = std::move(outcomes[best].net);
    res.graph.provenance = {config_hash(cfg), cfg.seed, g.name, cfg.selection};
    return res;
}

/// Checkpoints ranked by validation LP F1 on the original graph.
inline Validator lp_validator(const GraphBundle& g, const CondenseConfig& cfg) {
    if (cfg.val_runs == 0) return {};
    LpConfig lp;
    lp.edge_threshold = cfg.edge_threshold;
    return [&g, lp, runs = cfg.val_runs, seed = cfg.seed](const CondensedGraph& cand) {
        try {
            return evaluate_lp(g, &cand, runs, seed, lp, LpPartition::val).mean;
        } catch (const EvaluationError&) {
            return 0.0;  // no above-threshold pairs to learn from
        }
    };
}

}  // namespace hc
