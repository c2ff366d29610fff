#include <gtest/gtest.h>

#include "hc/condense.hpp"
#include "hc/gradcheck.hpp"
#include "hc/synth.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace hc;
using hc::testing::condensation_gradient_checks;
using hc::testing::TempDir;
using hc::testing::tiny_instance;

namespace {

GraphBundle sbm300(std::uint64_t seed) {
    synth::SbmSpec spec;
    spec.num_nodes = 300;
    spec.blocks = 4;
    spec.p_in = 0.08;
    spec.p_out = 0.004;
    spec.features.num_features = 16;
    spec.seed = seed;
    return synth::sbm(spec);
}

CondenseConfig small_config(std::uint64_t seed) {
    CondenseConfig cfg;
    cfg.reduction_rate = 0.05;  // 12 of 240 training nodes
    cfg.epochs = 50;
    cfg.hidden_units = 32;
    cfg.val_runs = 0;
    cfg.seed = seed;
    return cfg;
}

GraphBundle from_edges(Index n, const std::vector<Edge>& edges) {
    Split s;
    for (Index i = 0; i < n; ++i) s.train.push_back(i);
    return make_bundle("g", n, 1, edges, FeatureMatrix::Ones(n, 1), std::vector<int>(static_cast<std::size_t>(n), 0), s);
}

Matrix dense_of(const GraphBundle& g) { return Matrix(g.adjacency); }

}  // namespace

// ---------------------------------------------------------------------------
// configuration

TEST(Config, DefaultsValidateAndRoundTrip) {
    CondenseConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    CondenseConfig back;
    back.seed = 99;
    apply_config_text(back, config_to_text(cfg));
    EXPECT_EQ(config_to_text(back), config_to_text(cfg));
    EXPECT_EQ(config_hash(back), config_hash(cfg));
    back.lr_feat = 0.02;
    EXPECT_NE(config_hash(back), config_hash(cfg));
}

TEST(Config, ParsesCommentsAndRejectsBadInput) {
    CondenseConfig cfg;
    apply_config_text(cfg, "# comment\n epochs = 120  \nselection=random # trailing\n\nstrict_algorithm = true\n");
    EXPECT_EQ(cfg.epochs, 120);
    EXPECT_EQ(cfg.selection, "random");
    EXPECT_TRUE(cfg.strict_algorithm);
    EXPECT_THROW(apply_config_text(cfg, "nonsense = 1"), ConfigError);
    EXPECT_THROW(apply_config_text(cfg, "epochs = 1.5"), ConfigError);
    EXPECT_THROW(apply_config_text(cfg, "epochs"), ConfigError);
    EXPECT_THROW(apply_config_text(cfg, "seed = -3"), ConfigError);
    CondenseConfig bad;
    bad.curvature = 0.1;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = CondenseConfig{};
    bad.selection = "kcenter";
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = CondenseConfig{};
    bad.epochs = 30;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Config, EveryFieldHasAKey) {
    std::set<std::string> names;
    for (const auto& k : config_keys()) {
        EXPECT_TRUE(names.insert(k.name).second) << k.name;
        EXPECT_FALSE(k.help.empty()) << k.name;
    }
    EXPECT_EQ(names.size(), 26u);
}

// ---------------------------------------------------------------------------
// budget

TEST(Budget, TableRowsFromLabeledRates) {
    struct Row {
        Index train;
        double labeled_rate;
        Index total_nodes;
        double overall_rate;
        Index want;
    };
    const std::vector<Row> rows{
        {11002, 0.005, 13752, 0.004, 55},  {11002, 0.01, 13752, 0.008, 110},  {11002, 0.02, 13752, 0.016, 220},
        {6120, 0.01, 7650, 0.008, 61},     {6120, 0.02, 7650, 0.016, 122},    {6120, 0.05, 7650, 0.04, 306},
        {1117, 0.019, 1395, 0.015, 21},    {1117, 0.038, 1395, 0.03, 42},     {1117, 0.075, 1395, 0.06, 84},
        {15511, 0.0014, 19389, 0.0011, 22}, {15511, 0.007, 19389, 0.0056, 109}, {15511, 0.014, 19389, 0.0112, 217},
    };
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        const auto b = budget_from_counts({r.train}, r.labeled_rate);
        EXPECT_EQ(b[0], r.want) << "row " << k;
        // the unlabeled-rate column agrees except where its rounding falls on the other side
        if (k != 9) EXPECT_EQ(std::llround(r.overall_rate * static_cast<double>(r.total_nodes)), r.want) << "row " << k;
    }
}

TEST(Budget, LargestRemainderAcrossClasses) {
    const std::vector<Index> counts{5000, 3000, 1500, 1000, 502};
    const auto b = budget_from_counts(counts, 0.005);
    EXPECT_EQ(std::accumulate(b.begin(), b.end(), Index{0}), 55);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const double quota = 55.0 * static_cast<double>(counts[c]) / 11002.0;
        EXPECT_LT(std::abs(static_cast<double>(b[c]) - quota), 1.0) << "class " << c;
    }
    EXPECT_EQ(b, (std::vector<Index>{25, 15, 7, 5, 3}));
}

TEST(Budget, EveryClassGetsAtLeastOneNode) {
    const auto b = budget_from_counts({1000, 1000, 3}, 0.005);
    EXPECT_EQ(b, (std::vector<Index>{4, 5, 1}));
    EXPECT_THROW(budget_from_counts({100, 100, 100}, 0.005), ConfigError);
    EXPECT_THROW(budget_from_counts({100, 0}, 0.5), ConfigError);
    EXPECT_THROW(budget_from_counts({100}, 0.0), ConfigError);
}

// ---------------------------------------------------------------------------
// spectral loss

TEST(SpectralLoss, CompleteVersusDisconnected) {
    const auto k3 = from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
    const auto two = from_edges(4, {{0, 1}, {2, 3}});
    EXPECT_NEAR(spectral_loss(WeightedGraph{dense_of(k3)}, WeightedGraph{dense_of(two)}), 1.5, 1e-12);
    EXPECT_NEAR(sampled_spectral_gap(two, {0, 1, 2, 3}), 0.0, 1e-12);
    EXPECT_NEAR(sampled_spectral_gap(k3, {0, 1, 2}), 1.5, 1e-12);
    ad::Tape tape;
    EXPECT_NEAR(spectral_loss(tape.constant(dense_of(k3)), 0.0).scalar(), 1.5, 1e-12);
}

TEST(SpectralLoss, EqualGraphsGiveZeroAndRelabelingIsInvariant) {
    Rng rng(1);
    const auto g = hc::testing::random_bundle(rng, 25, 2, 0.2);
    std::vector<Index> all(25);
    std::iota(all.begin(), all.end(), Index{0});
    const Matrix a = dense_of(g);
    ad::Tape tape;
    EXPECT_NEAR(spectral_loss(tape.constant(a), sampled_spectral_gap(g, all)).scalar(), 0.0, 1e-12);

    std::vector<Index> perm = all;
    rng.shuffle(perm);
    Matrix p = Matrix::Zero(25, 25);
    for (Index i = 0; i < 25; ++i) p(i, perm[static_cast<std::size_t>(i)]) = 1.0;
    const Matrix pa = p * a * p.transpose();
    const WeightedGraph other{Matrix(dense_of(hc::testing::random_bundle(rng, 18, 2, 0.3)))};
    EXPECT_NEAR(spectral_loss(WeightedGraph{a}, other), spectral_loss(WeightedGraph{pa}, other), 1e-12);
    EXPECT_NEAR(sampled_spectral_gap(g, perm), sampled_spectral_gap(g, all), 1e-12);
}

TEST(SpectralLoss, SampledGapUsesInducedSubgraph) {
    const auto g = from_edges(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {2, 3}, {4, 5}});
    EXPECT_NEAR(sampled_spectral_gap(g, {0, 1, 2}), 1.5, 1e-12);
    EXPECT_NEAR(sampled_spectral_gap(g, {0, 1, 4, 5}), 0.0, 1e-12);
    EigenOptions lanczos;
    lanczos.dense_threshold = 0;
    Rng rng(2);
    const auto big = hc::testing::random_bundle(rng, 120, 3, 0.08);
    std::vector<Index> nodes;
    for (Index i = 0; i < 120; i += 2) nodes.push_back(i);
    const auto sub = induced_subgraph(big, nodes);
    EXPECT_NEAR(sampled_spectral_gap(big, nodes, lanczos), spectral_gap(sub), 1e-8);
}

// ---------------------------------------------------------------------------
// condensation loss


TEST(CondensationLoss, DecomposesIntoTerms) {
    const auto t = tiny_instance();
    ad::Tape tape;
    const auto terms = condensation_loss(tape.constant(t.x), t.net, bind(tape, t.net, false), t.sgc, t.labels, t.batch, t.cfg);
    EXPECT_NEAR(terms.total.scalar(), terms.gradient.scalar() + terms.spectral.scalar() + terms.regularization.scalar(), 1e-12);
    EXPECT_NEAR(terms.regularization.scalar(), 2 * t.cfg.beta * terms.adjacency.value().norm(), 1e-12);
    auto strict = t.cfg;
    strict.strict_algorithm = true;
    ad::Tape tape2;
    const auto s = condensation_loss(tape2.constant(t.x), t.net, bind(tape2, t.net, false), t.sgc, t.labels, t.batch, strict);
    EXPECT_NEAR(s.total.scalar(), terms.total.scalar(), 1e-12);
}

TEST(CondensationLoss, GradientWrtFeaturesAndStructureNet) {
    const auto t = tiny_instance();
    for (const auto& [name, rep] : condensation_gradient_checks(t)) EXPECT_TRUE(rep.passed) << name << ": " << rep.describe();
}

// ---------------------------------------------------------------------------
// the loop

TEST(Schedule, WindowArithmetic) {
    CondenseConfig cfg;
    cfg.tau1 = 40;
    cfg.tau2 = 10;
    for (int start = 0; start < 200; start += 7) {
        int feat = 0;
        for (int t = start; t < start + 50; ++t) feat += is_feature_epoch(t, cfg) ? 1 : 0;
        EXPECT_EQ(feat, 40) << "window at " << start;
    }
    for (int t = 0; t < 50; ++t) EXPECT_EQ(is_feature_epoch(t, cfg), t < 40);
}

TEST(Condense, RunsScheduleAndKeepsLabels) {
    const auto g = sbm300(1);
    const auto cfg = small_config(1);
    const auto res = condense(g, cfg);
    ASSERT_EQ(res.history.size(), 50u);
    for (int t = 0; t < 50; ++t) {
        const auto& r = res.history[static_cast<std::size_t>(t)];
        EXPECT_EQ(r.epoch, t);
        EXPECT_EQ(r.feature_phase, t < 40);
        EXPECT_NEAR(r.total, r.gradient + r.spectral + r.regularization, 1e-6);
    }
    EXPECT_EQ(res.graph.num_nodes(), 12);
    EXPECT_EQ(label_histogram(res.graph.labels, 4), res.budget);
    std::vector<int> init_labels;
    for (Index v : res.selection.selected) init_labels.push_back(g.labels[static_cast<std::size_t>(v)]);
    EXPECT_EQ(res.graph.labels, init_labels);
    EXPECT_EQ(res.graph.best_epoch, 50);
    EXPECT_NO_THROW(validate(res.graph));
    const Matrix& w = res.graph.adjacency.weights;
    EXPECT_EQ((w - w.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(w.diagonal().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Condense, BetaZeroRemovesRegularization) {
    const auto g = sbm300(2);
    auto cfg = small_config(2);
    cfg.beta = 0.0;
    const auto res = condense(g, cfg);
    for (const auto& r : res.history) {
        EXPECT_EQ(r.regularization, 0.0);
        EXPECT_NEAR(r.total, r.gradient + r.spectral, 1e-12);
    }
}

TEST(Condense, LossDecreasesOnSbm) {
    int decreased = 0;
    std::string detail;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto res = condense(sbm300(100 + seed), small_config(seed));
        const double first = res.history.front().total, last = res.history.back().total;
        if (last < first) ++decreased;
        detail += " " + std::to_string(first) + "->" + std::to_string(last);
    }
    EXPECT_GE(decreased, 9) << detail;
}

TEST(Condense, DeterministicArtifacts) {
    const auto g = sbm300(3);
    auto cfg = small_config(3);
    cfg.epochs = 60;
    cfg.checkpoint_every = 20;
    cfg.val_runs = 1;
    TempDir tmp;
    for (const char* name : {"a", "b"}) {
        const auto res = condense(g, cfg, lp_validator(g, cfg));
        io::save_condensed(res.graph, tmp / name, res.history, &res.net);
    }
    for (const char* f : {"meta.json", "adj.f32", "features.f32", "labels.tsv", "history.csv", "net.json", "net.f32"}) {
        EXPECT_EQ(hc::testing::slurp(tmp / "a" / f), hc::testing::slurp(tmp / "b" / f)) << f;
    }
}

TEST(Condense, CheckpointSelectionUsesValidator) {
    const auto g = sbm300(4);
    auto cfg = small_config(4);
    cfg.epochs = 100;
    cfg.checkpoint_every = 25;
    cfg.repeats = 2;
    std::vector<std::pair<int, int>> seen;
    const auto res = condense(g, cfg, [&](const CondensedGraph& c) {
        seen.emplace_back(c.best_repeat, c.best_epoch);
        return c.best_repeat == 1 && c.best_epoch == 50 ? 1.0 : 0.5;
    });
    EXPECT_EQ(seen.size(), 8u);
    EXPECT_EQ(res.graph.best_repeat, 1);
    EXPECT_EQ(res.graph.best_epoch, 50);
    EXPECT_EQ(res.graph.val_f1, 1.0);

    const auto tie = condense(g, cfg, [](const CondensedGraph&) { return 0.7; });
    EXPECT_EQ(tie.graph.best_repeat, 0);
    EXPECT_EQ(tie.graph.best_epoch, 25);
}

TEST(Condense, RandomSelectionAndRoundTrip) {
    const auto g = sbm300(5);
    auto cfg = small_config(5);
    cfg.selection = "random";
    const auto res = condense(g, cfg);
    EXPECT_EQ(res.graph.provenance.selection, "random");
    EXPECT_EQ(res.graph.provenance.config_hash, config_hash(cfg));
    TempDir tmp;
    io::save_condensed(res.graph, tmp.path(), res.history, &res.net);
    const auto back = io::load_condensed(tmp.path());
    EXPECT_EQ(back.labels, res.graph.labels);
    EXPECT_EQ(back.source_nodes, res.graph.source_nodes);
    EXPECT_LE((back.adjacency.weights - res.graph.adjacency.weights).cwiseAbs().maxCoeff(), 1e-7);
    const auto hist = io::read_history(tmp / "history.csv");
    ASSERT_EQ(hist.size(), res.history.size());
    EXPECT_NEAR(hist.back().total, res.history.back().total, 1e-8);
    const auto net = io::load_net(tmp.path());
    EXPECT_EQ(net.layers.size(), res.net.layers.size());
}
