#pragma once

// Poincaré-ball geometry with curvature kappa < 0 (c = |kappa|, ball radius
// 1/sqrt(c)) and the edge-weight network that turns condensed node features
// into a dense symmetric adjacency.

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hc/autodiff.hpp"
#include "hc/errors.hpp"
#include "hc/graph.hpp"
#include "hc/rng.hpp"

namespace hc {

/// Log-map inputs are clamped to sqrt(c)|y| <= 1 - kBallClamp.
inline constexpr double kBallClamp = 1e-7;
/// Every manifold-valued output is projected to sqrt(c)|y| <= 1 - kBallProject,
/// which keeps points strictly inside the clamp radius.
inline constexpr double kBallProject = 2e-7;

struct PoincarePoint {
    Vector coords;
    double curvature = -1.0;

    double sqrt_c() const { return std::sqrt(-curvature); }
};

inline void check_curvature(double kappa) {
    if (!(kappa < 0.0) || !std::isfinite(kappa)) throw DomainError("curvature must be a finite negative number");
}

/// sqrt(c)|x| < 1 - kBallClamp.
inline bool inside_ball(const Vector& coords, double kappa) {
    return coords.allFinite() && coords.norm() * std::sqrt(-kappa) < 1.0 - kBallClamp;
}

namespace hyp_detail {

/// phi(r) and phi'(r)/r for the origin exponential map x -> tanh(a|x|) x / (a|x|),
/// with the output radius capped at (1 - kBallProject)/a.
inline std::pair<double, double> expmap_radial(double r, double a) {
    const double t = a * r;
    if (t < 1e-3) {
        const double t2 = t * t;
        return {1.0 - t2 / 3.0 + 2.0 * t2 * t2 / 15.0, a * a * (-2.0 / 3.0 + 8.0 * t2 / 15.0)};
    }
    const double cap = (1.0 - kBallProject) / a;
    const double th = std::tanh(t);
    if (th / a >= cap) return {cap / r, -cap / (r * r * r)};
    const double sech2 = 1.0 - th * th;
    return {th / t, (t * sech2 - th) / (a * r * r * r)};
}

/// phi(r) and phi'(r)/r for the origin logarithmic map with the input radius
/// clamped to (1 - kBallClamp)/a.
inline std::pair<double, double> logmap_radial(double r, double a) {
    const double t = a * r;
    if (t < 1e-3) {
        const double t2 = t * t;
        return {1.0 + t2 / 3.0 + t2 * t2 / 5.0, a * a * (2.0 / 3.0 + 4.0 * t2 / 5.0)};
    }
    const double clamp = (1.0 - kBallClamp) / a;
    if (r > clamp) {
        const double k = std::atanh(a * clamp) / a;
        return {k / r, -k / (r * r * r)};
    }
    const double at = std::atanh(t);
    return {at / t, 1.0 / (r * r * (1.0 - t * t)) - at / (a * r * r * r)};
}

inline std::pair<double, double> project_radial(double r, double a) {
    const double cap = (1.0 - kBallProject) / a;
    if (r <= cap) return {1.0, 0.0};
    return {cap / r, -cap / (r * r * r)};
}

}  // namespace hyp_detail

// ---------------------------------------------------------------------------
// point-level API

/// Exponential map at the origin, scaled for curvature kappa. Inputs with
/// |x| < 1e-12 map to the origin exactly.
inline PoincarePoint exp_map_origin(const Vector& x, double kappa) {
    check_curvature(kappa);
    const double a = std::sqrt(-kappa);
    const double r = x.norm();
    if (r < 1e-12) return {Vector::Zero(x.size()), kappa};
    return {x * hyp_detail::expmap_radial(r, a).first, kappa};
}

inline Vector log_map_origin(const PoincarePoint& p) {
    const double a = p.sqrt_c();
    const double r = p.coords.norm();
    if (r == 0.0) return Vector::Zero(p.coords.size());
    return p.coords * hyp_detail::logmap_radial(r, a).first;
}

inline Vector project_to_ball(const Vector& y, double kappa) {
    const double r = y.norm();
    if (r == 0.0) return y;
    return y * hyp_detail::project_radial(r, std::sqrt(-kappa)).first;
}

inline PoincarePoint mobius_add(const PoincarePoint& x, const PoincarePoint& y) {
    if (x.curvature != y.curvature) throw DomainError("mobius_add: curvature mismatch");
    const double c = -x.curvature;
    const double xy = x.coords.dot(y.coords);
    const double x2 = x.coords.squaredNorm();
    const double y2 = y.coords.squaredNorm();
    const Vector num = (1.0 + 2.0 * c * xy + c * y2) * x.coords + (1.0 - c * x2) * y.coords;
    const double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    return {project_to_ball(num / den, x.curvature), x.curvature};
}

/// W (out x in) applied through the origin tangent space.
inline PoincarePoint mobius_matvec(const Matrix& w, const PoincarePoint& p) {
    if (w.cols() != p.coords.size()) throw DomainError("mobius_matvec: dimension mismatch");
    return exp_map_origin(w * log_map_origin(p), p.curvature);
}

/// (W ⊗ p) ⊕ b.
inline PoincarePoint mobius_linear(const PoincarePoint& p, const Matrix& w, const PoincarePoint& b) {
    if (w.rows() != b.coords.size()) throw DomainError("mobius_linear: bias dimension mismatch");
    return mobius_add(mobius_matvec(w, p), b);
}

inline PoincarePoint hyperbolic_relu(const PoincarePoint& p) {
    return exp_map_origin(log_map_origin(p).cwiseMax(0.0), p.curvature);
}

/// Conformal factor 2 / (1 - c|x|^2).
inline double conformal_factor(const Vector& x, double kappa) { return 2.0 / (1.0 + kappa * x.squaredNorm()); }

/// Exponential map at an arbitrary base point (used as the Riemannian retraction).
inline PoincarePoint exp_map(const PoincarePoint& base, const Vector& v) {
    const double a = base.sqrt_c();
    const double vn = v.norm();
    if (vn < 1e-15) return base;
    const double lam = conformal_factor(base.coords, base.curvature);
    const Vector step = std::tanh(a * lam * vn / 2.0) * v / (a * vn);
    return mobius_add(base, {project_to_ball(step, base.curvature), base.curvature});
}

// ---------------------------------------------------------------------------
// batched tape-level ops: each row of a Var is one point

namespace hyp {

inline ad::Var expmap0(const ad::Var& x, double kappa) {
    const double a = std::sqrt(-kappa);
    return ad::radial(x, "expmap0", [a](double r) { return hyp_detail::expmap_radial(r, a); });
}

inline ad::Var logmap0(const ad::Var& y, double kappa) {
    const double a = std::sqrt(-kappa);
    return ad::radial(y, "logmap0", [a](double r) { return hyp_detail::logmap_radial(r, a); });
}

inline ad::Var project(const ad::Var& y, double kappa) {
    const double a = std::sqrt(-kappa);
    return ad::radial(y, "project_ball", [a](double r) { return hyp_detail::project_radial(r, a); });
}

/// Row-wise x ⊕ y; y may be a single (1 x D) point broadcast over rows.
inline ad::Var mobius_add(const ad::Var& x, const ad::Var& y, double kappa) {
    using namespace ad;
    const double c = -kappa;
    Var xy = sum_cols(mul(x, y));
    Var x2 = sum_cols(square(x));
    Var y2 = sum_cols(square(y));
    Var coef_x = add_scalar(add(scale(xy, 2.0 * c), scale(y2, c)), 1.0);
    Var coef_y = add_scalar(scale(x2, -c), 1.0);
    Var num = add(mul(x, coef_x), mul(y, coef_y));
    Var den = add_scalar(add(scale(xy, 2.0 * c), scale(mul(x2, y2), c * c)), 1.0);
    return project(div(num, den), kappa);
}

/// Row-wise exp0(log0(x) W) ⊕ b with W stored (in x out).
inline ad::Var mobius_linear(const ad::Var& x, const ad::Var& w, const ad::Var& b, double kappa) {
    return mobius_add(expmap0(ad::matmul(logmap0(x, kappa), w), kappa), b, kappa);
}

inline ad::Var relu(const ad::Var& x, double kappa) { return expmap0(ad::relu(logmap0(x, kappa)), kappa); }

struct BatchStats {
    Matrix mean;
    Matrix var;
};

/// Tangent-space batch normalisation: log0, standardise each feature over
/// the rows, affine gamma/beta, exp0. With `frozen` set, its mean and var
/// replace the batch statistics.
inline ad::Var batch_norm(const ad::Var& x, const ad::Var& gamma, const ad::Var& beta, double kappa, double eps,
                          BatchStats* stats = nullptr, const BatchStats* frozen = nullptr) {
    using namespace ad;
    Var t = logmap0(x, kappa);
    Var mu, var;
    if (frozen) {
        mu = t.tape().constant(frozen->mean);
        var = t.tape().constant(frozen->var);
    } else {
        const double inv_n = 1.0 / static_cast<double>(x.rows());
        mu = scale(sum_rows(t), inv_n);
        var = scale(sum_rows(square(sub(t, mu))), inv_n);
    }
    Var normed = mul(sub(t, mu), safe_rsqrt(add_scalar(var, eps)));
    if (stats) {
        stats->mean = mu.value();
        stats->var = var.value();
    }
    return expmap0(add(mul(normed, gamma), beta), kappa);
}

}  // namespace hyp

// ---------------------------------------------------------------------------
// structure network

struct HypLayer {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out, point in the ball
    Matrix gamma;   // 1 x out
    Matrix beta;    // 1 x out
    Matrix running_mean;
    Matrix running_var;
};

/// f_hyp: per hidden layer Möbius linear -> hyperbolic batch norm ->
/// hyperbolic ReLU, then a scalar affine readout of the origin log-map.
struct HyperbolicStructureNet {
    double curvature = -0.1;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
    bool use_running_stats = false;  // evaluation mode for batch norm
    std::vector<HypLayer> layers;
    Matrix readout_weight;  // hidden x 1
    Matrix readout_bias;    // 1 x 1

    Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }

    /// `feature_dim` is the node feature width; edge inputs are twice that.
    static HyperbolicStructureNet init(Index feature_dim, Index hidden, int num_layers, double kappa, Rng rng) {
        check_curvature(kappa);
        if (feature_dim < 1 || hidden < 1 || num_layers < 1) throw ConfigError("structure net: sizes must be positive");
        HyperbolicStructureNet net;
        net.curvature = kappa;
        Index fan_in = 2 * feature_dim;
        for (int l = 0; l < num_layers; ++l) {
            HypLayer layer;
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            layer.weight = Matrix::NullaryExpr(fan_in, hidden, [&] { return rng.uniform(-bound, bound); });
            layer.bias = Matrix::Zero(1, hidden);
            layer.gamma = Matrix::Ones(1, hidden);
            layer.beta = Matrix::Zero(1, hidden);
            layer.running_mean = Matrix::Zero(1, hidden);
            layer.running_var = Matrix::Ones(1, hidden);
            net.layers.push_back(std::move(layer));
            fan_in = hidden;
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        net.readout_weight = Matrix::NullaryExpr(fan_in, 1, [&] { return rng.uniform(-bound, bound); });
        net.readout_bias = Matrix::Zero(1, 1);
        return net;
    }

    bool all_finite() const {
        for (const auto& l : layers) {
            if (!l.weight.allFinite() || !l.bias.allFinite() || !l.gamma.allFinite() || !l.beta.allFinite()) return false;
            if (!inside_ball(l.bias.row(0).transpose(), curvature)) return false;
        }
        return readout_weight.allFinite() && readout_bias.allFinite();
    }
};

/// Tape handles for every trainable tensor of the net.
struct NetVars {
    struct Layer {
        ad::Var weight, bias, gamma, beta;
    };
    std::vector<Layer> layers;
    ad::Var readout_weight, readout_bias;
};

inline NetVars bind(ad::Tape& tape, const HyperbolicStructureNet& net, bool trainable) {
    auto mk = [&](const Matrix& m) { return trainable ? tape.parameter(m) : tape.constant(m); };
    NetVars v;
    for (const auto& l : net.layers) v.layers.push_back({mk(l.weight), mk(l.bias), mk(l.gamma), mk(l.beta)});
    v.readout_weight = mk(net.readout_weight);
    v.readout_bias = mk(net.readout_bias);
    return v;
}

/// Observer for instrumented forward passes: (layer index, stage name, value).
using ForwardProbe = std::function<void(int, const char*, const Matrix&)>;

namespace hyp_detail {

inline void check_finite(const ad::Var& v, int layer, const char* stage) {
    if (!v.value().allFinite()) {
        throw NumericalError("structure net: non-finite activation in layer " + std::to_string(layer) + " (" + stage + ")");
    }
}

}  // namespace hyp_detail

/// Scalar score per row of `edges` (rows are points in the 2d-dim ball).
/// When `stats_out` is non-null it receives each layer's batch statistics.
inline ad::Var edge_scores(const HyperbolicStructureNet& net, const NetVars& vars, const ad::Var& edges,
                           std::vector<hyp::BatchStats>* stats_out = nullptr, const ForwardProbe& probe = {}) {
    const double k = net.curvature;
    ad::Var h = edges;
    if (probe) probe(-1, "input", h.value());
    for (std::size_t l = 0; l < vars.layers.size(); ++l) {
        const auto& lv = vars.layers[l];
        const int li = static_cast<int>(l);
        h = hyp::mobius_linear(h, lv.weight, lv.bias, k);
        hyp_detail::check_finite(h, li, "mobius_linear");
        if (probe) probe(li, "mobius_linear", h.value());
        hyp::BatchStats st;
        const hyp::BatchStats running{net.layers[l].running_mean, net.layers[l].running_var};
        h = hyp::batch_norm(h, lv.gamma, lv.beta, k, net.bn_eps, stats_out ? &st : nullptr,
                            net.use_running_stats ? &running : nullptr);
        if (stats_out) stats_out->push_back(std::move(st));
        hyp_detail::check_finite(h, li, "batch_norm");
        if (probe) probe(li, "batch_norm", h.value());
        h = hyp::relu(h, k);
        hyp_detail::check_finite(h, li, "relu");
        if (probe) probe(li, "relu", h.value());
    }
    ad::Var s = ad::add(ad::matmul(hyp::logmap0(h, k), vars.readout_weight), vars.readout_bias);
    hyp_detail::check_finite(s, static_cast<int>(vars.layers.size()), "readout");
    return s;
}

/// Ordered pairs (i, j), i != j, in row-major order, and for each pair the
/// position of its reverse (j, i).
struct PairIndex {
    std::vector<Index> first, second, reverse;

    explicit PairIndex(Index m) {
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < m; ++j)
                if (i != j) {
                    first.push_back(i);
                    second.push_back(j);
                }
        auto pos = [m](Index i, Index j) { return i * (m - 1) + (j < i ? j : j - 1); };
        reverse.resize(first.size());
        for (std::size_t k = 0; k < first.size(); ++k) reverse[k] = pos(second[k], first[k]);
    }
};

/// Dense symmetric A' (m x m) on the tape:
///   h = exp0(x'), e_ij = exp0([log0 h_i ; log0 h_j]),
///   a'_ij = sigmoid((f(e_ij) + f(e_ji)) / 2), zero diagonal.
/// Concatenation happens in the origin tangent space.
inline ad::Var synth_adjacency(const ad::Var& features, const HyperbolicStructureNet& net, const NetVars& vars,
                               std::vector<hyp::BatchStats>* stats_out = nullptr, const ForwardProbe& probe = {}) {
    const Index m = features.rows();
    if (m < 2) throw DomainError("synth_adjacency: need at least 2 condensed nodes");
    if (2 * features.cols() != net.input_dim()) throw DomainError("synth_adjacency: feature width does not match the net");
    if (!features.value().allFinite()) throw NumericalError("synth_adjacency: non-finite features");
    const double k = net.curvature;
    const PairIndex pairs(m);
    ad::Var h = hyp::expmap0(features, k);
    if (probe) probe(-1, "node_embedding", h.value());
    ad::Var t = hyp::logmap0(h, k);
    ad::Var e = hyp::expmap0(ad::concat_cols(ad::gather_rows(t, pairs.first), ad::gather_rows(t, pairs.second)), k);
    ad::Var s = edge_scores(net, vars, e, stats_out, probe);
    ad::Var sym = ad::scale(ad::add(s, ad::gather_rows(s, pairs.reverse)), 0.5);
    return ad::scatter(ad::sigmoid(sym), pairs.first, pairs.second, m, m);
}

/// Value-only evaluation.
inline WeightedGraph synth_adjacency(const Matrix& features, const HyperbolicStructureNet& net) {
    ad::Tape tape;
    NetVars vars = bind(tape, net, false);
    return WeightedGraph{synth_adjacency(tape.constant(features), net, vars).value()};
}

/// Folds the latest batch statistics into the running estimates.
inline void update_running_stats(HyperbolicStructureNet& net, const std::vector<hyp::BatchStats>& stats) {
    for (std::size_t l = 0; l < stats.size() && l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        layer.running_mean = (1.0 - net.bn_momentum) * layer.running_mean + net.bn_momentum * stats[l].mean;
        layer.running_var = (1.0 - net.bn_momentum) * layer.running_var + net.bn_momentum * stats[l].var;
    }
}

}  // namespace hc
