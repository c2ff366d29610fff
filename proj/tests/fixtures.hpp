#pragma once

#include <functional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "hc/condense.hpp"
#include "hc/gradcheck.hpp"
#include "test_util.hpp"

namespace hc::testing {

/// 10 condensed nodes over a 40-node graph; small enough for coordinate-wise finite differences.
struct TinyInstance {
    GraphBundle g;
    CondenseConfig cfg;
    HyperbolicStructureNet net;
    SgcModel sgc;
    Matrix x;
    std::vector<int> labels;
    EpochBatch batch;
};

inline TinyInstance tiny_instance() {
    TinyInstance t;
    Rng rng(11);
    t.g = hc::testing::random_bundle(rng, 40, 2, 0.15, true, 3);
    t.cfg.hidden_units = 6;
    t.cfg.beta = 0.3;
    t.net = HyperbolicStructureNet::init(3, 6, 2, t.cfg.curvature, Rng(12));
    for (auto& l : t.net.layers) {
        l.bias.setConstant(0.05);
        l.gamma = Matrix::NullaryExpr(1, 6, [&] { return 1.0 + 0.2 * rng.normal(); });
        l.beta = Matrix::NullaryExpr(1, 6, [&] { return 0.3 + 0.1 * rng.normal(); });
    }
    t.sgc = SgcModel::init(3, 6, 2, 2, Rng(13));
    t.x = Matrix::NullaryExpr(10, 3, [&] { return rng.normal(); });
    t.labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    const Matrix z = sgc_propagate(t.g.adjacency, t.g.features_dense(), 2);
    const auto groups = nodes_by_class(t.g, t.g.split.train);
    std::vector<Index> all;
    for (int c = 0; c < 2; ++c) {
        ClassBatch cb;
        cb.label = c;
        cb.nodes = groups[static_cast<std::size_t>(c)];
        Matrix zc(static_cast<Index>(cb.nodes.size()), z.cols());
        for (std::size_t i = 0; i < cb.nodes.size(); ++i) zc.row(static_cast<Index>(i)) = z.row(cb.nodes[i]);
        cb.real = sgc_gradient(t.sgc, zc, std::vector<int>(cb.nodes.size(), c));
        all.insert(all.end(), cb.nodes.begin(), cb.nodes.end());
        t.batch.classes.push_back(std::move(cb));
    }
    std::sort(all.begin(), all.end());
    t.batch.sampling_gap = sampled_spectral_gap(t.g, all);
    return t;
}


/// Finite-difference checks of the total condensation loss w.r.t. X' and every structure-net tensor.
inline std::vector<std::pair<std::string, GradCheckReport>> condensation_gradient_checks(const TinyInstance& t, GradCheckOptions opt = {}) {
    std::vector<std::pair<std::string, GradCheckReport>> out;
    out.emplace_back("features", check_gradients(
                                     [&](ad::Tape& tape, const ad::Var& x) {
                                         return condensation_loss(x, t.net, bind(tape, t.net, false), t.sgc, t.labels, t.batch, t.cfg).total;
                                     },
                                     t.x, opt));
    using Selector = std::function<Matrix&(HyperbolicStructureNet&)>;
    using VarSelector = std::function<ad::Var(const NetVars&)>;
    std::vector<std::tuple<std::string, Selector, VarSelector>> tensors;
    for (std::size_t l = 0; l < t.net.layers.size(); ++l) {
        const auto s = std::to_string(l);
        tensors.emplace_back("weight" + s, [l](HyperbolicStructureNet& n) -> Matrix& { return n.layers[l].weight; },
                             [l](const NetVars& v) { return v.layers[l].weight; });
        tensors.emplace_back("bias" + s, [l](HyperbolicStructureNet& n) -> Matrix& { return n.layers[l].bias; },
                             [l](const NetVars& v) { return v.layers[l].bias; });
        tensors.emplace_back("gamma" + s, [l](HyperbolicStructureNet& n) -> Matrix& { return n.layers[l].gamma; },
                             [l](const NetVars& v) { return v.layers[l].gamma; });
        tensors.emplace_back("beta" + s, [l](HyperbolicStructureNet& n) -> Matrix& { return n.layers[l].beta; },
                             [l](const NetVars& v) { return v.layers[l].beta; });
    }
    tensors.emplace_back("readout_weight", [](HyperbolicStructureNet& n) -> Matrix& { return n.readout_weight; },
                         [](const NetVars& v) { return v.readout_weight; });
    tensors.emplace_back("readout_bias", [](HyperbolicStructureNet& n) -> Matrix& { return n.readout_bias; },
                         [](const NetVars& v) { return v.readout_bias; });
    for (const auto& [name, sel, vsel] : tensors) {
        auto value = [&, sel = sel](const Matrix& p) {
            auto net = t.net;
            sel(net) = p;
            ad::Tape tape;
            return condensation_loss(tape.constant(t.x), net, bind(tape, net, false), t.sgc, t.labels, t.batch, t.cfg).total.scalar();
        };
        auto grad = [&, sel = sel, vsel = vsel](const Matrix& p) {
            auto net = t.net;
            sel(net) = p;
            ad::Tape tape;
            const auto vars = bind(tape, net, true);
            const auto terms = condensation_loss(tape.constant(t.x), net, vars, t.sgc, t.labels, t.batch, t.cfg);
            return tape.backward(terms.total).wrt(vsel(vars));
        };
        auto copy = t.net;
        out.emplace_back(name, check_gradients(value, grad, sel(copy), opt));
    }
    return out;
}

}  // namespace hc::testing
