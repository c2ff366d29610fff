#pragma once

// Simplified graph convolution: logits = S^K X theta1 theta2 with
// S = D^-1/2 (A + I) D^-1/2. Gradients w.r.t. theta are closed-form.

#include <cmath>
#include <vector>

#include "hc/autodiff.hpp"
#include "hc/errors.hpp"
#include "hc/graph.hpp"
#include "hc/rng.hpp"

namespace hc {

struct SgcModel {
    int depth = 2;
    Matrix theta1;  // features x hidden
    Matrix theta2;  // hidden x classes

    static SgcModel init(Index features, Index hidden, Index classes, int depth, Rng rng) {
        if (features < 1 || hidden < 1 || classes < 1 || depth < 0) throw ConfigError("sgc: sizes must be positive");
        SgcModel m;
        m.depth = depth;
        const double b1 = 1.0 / std::sqrt(static_cast<double>(features));
        const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
        m.theta1 = Matrix::NullaryExpr(features, hidden, [&] { return rng.uniform(-b1, b1); });
        m.theta2 = Matrix::NullaryExpr(hidden, classes, [&] { return rng.uniform(-b2, b2); });
        return m;
    }

    Index num_classes() const { return theta2.cols(); }
    Matrix logits(const Matrix& z) const { return (z * theta1) * theta2; }
    bool all_finite() const { return theta1.allFinite() && theta2.allFinite(); }
};

/// One block per weight matrix.
struct SgcGradient {
    Matrix d_theta1, d_theta2;

    Vector flatten() const {
        Vector v(d_theta1.size() + d_theta2.size());
        v << Eigen::Map<const Vector>(d_theta1.data(), d_theta1.size()), Eigen::Map<const Vector>(d_theta2.data(), d_theta2.size());
        return v;
    }
};

struct SgcGradientVars {
    ad::Var d_theta1, d_theta2;
};

/// S^K X over a sparse graph.
inline Matrix sgc_propagate(const SparseMatrix& adjacency, const Matrix& x, int depth) {
    const SparseMatrix s = normalized_adjacency(adjacency, true);
    Matrix z = x;
    for (int k = 0; k < depth; ++k) z = s * z;
    return z;
}

/// D^-1/2 M D^-1/2 of a dense weighted adjacency on the tape; rows with zero
/// degree stay zero.
inline ad::Var normalize_dense(const ad::Var& weights) {
    ad::Var dinv = ad::safe_rsqrt(ad::sum_cols(weights));
    return ad::mul(ad::mul(weights, dinv), ad::transpose(dinv));
}

/// S'^K X' for a dense weighted adjacency on the tape, with self-loops added.
inline ad::Var sgc_propagate(const ad::Var& weights, const ad::Var& x, int depth) {
    const Index m = weights.rows();
    ad::Var s = normalize_dense(ad::add(weights, weights.tape().constant(Matrix::Identity(m, m))));
    ad::Var z = x;
    for (int k = 0; k < depth; ++k) z = ad::matmul(s, z);
    return z;
}

namespace sgc_detail {

inline Matrix one_hot(const std::vector<int>& labels, Index classes) {
    Matrix y = Matrix::Zero(static_cast<Index>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) throw DomainError("sgc: label out of range");
        y(static_cast<Index>(i), labels[i]) = 1.0;
    }
    return y;
}

inline Matrix softmax(const Matrix& logits) {
    Matrix p = logits;
    for (Index i = 0; i < p.rows(); ++i) {
        p.row(i) = (p.row(i).array() - p.row(i).maxCoeff()).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

}  // namespace sgc_detail

/// Mean softmax cross-entropy of the model on propagated rows `z`.
inline double sgc_task_loss(const SgcModel& model, const Matrix& z, const std::vector<int>& labels) {
    if (labels.empty()) throw DomainError("sgc_task_loss: empty batch");
    const Matrix logits = model.logits(z);
    double loss = 0.0;
    for (Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        loss += std::log((logits.row(i).array() - m).exp().sum()) + m - logits(i, labels[static_cast<std::size_t>(i)]);
    }
    return loss / static_cast<double>(labels.size());
}

/// d(task loss)/d theta:  G = (softmax(Z t1 t2) - Y) / N,
///   d t2 = (Z t1)^T G,  d t1 = Z^T G t2^T.
inline SgcGradient sgc_gradient(const SgcModel& model, const Matrix& z, const std::vector<int>& labels) {
    if (labels.empty()) throw DomainError("sgc_gradient: empty batch");
    const Matrix h = z * model.theta1;
    const Matrix g = (sgc_detail::softmax(h * model.theta2) - sgc_detail::one_hot(labels, model.num_classes())) /
                     static_cast<double>(labels.size());
    return {z.transpose() * (g * model.theta2.transpose()), h.transpose() * g};
}

/// Same closed form recorded on the tape, differentiable w.r.t. `z`.
inline SgcGradientVars sgc_gradient(const SgcModel& model, const ad::Var& z, const std::vector<int>& labels) {
    if (labels.empty()) throw DomainError("sgc_gradient: empty batch");
    using namespace ad;
    Tape& t = z.tape();
    Var t1 = t.constant(model.theta1);
    Var t2t = t.constant(model.theta2.transpose());
    Var h = matmul(z, t1);
    Var p = softmax_rows(matmul(h, t.constant(model.theta2)));
    Var g = scale(sub(p, t.constant(sgc_detail::one_hot(labels, model.num_classes()))), 1.0 / static_cast<double>(labels.size()));
    return {matmul(transpose(z), matmul(g, t2t)), matmul(transpose(h), g)};
}

/// 1 - cos(a, b) with the zero-norm convention: 0 when both vanish, 1 when
/// exactly one does.
inline double cosine_distance(const Matrix& a, const Matrix& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 && nb == 0.0) return 0.0;
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - a.cwiseProduct(b).sum() / (na * nb);
}

inline ad::Var cosine_distance(const Matrix& a, const ad::Var& b) {
    ad::Tape& t = b.tape();
    const double na = a.norm(), nb = b.value().norm();
    if (na == 0.0 && nb == 0.0) return t.constant_scalar(0.0);
    if (na == 0.0 || nb == 0.0) return t.constant_scalar(1.0);
    ad::Var dot = ad::sum(ad::mul(t.constant(a), b));
    return ad::add_scalar(ad::neg(ad::div(dot, ad::scale(ad::frobenius_norm(b), na))), 1.0);
}

/// Sum over weight blocks of the cosine distance.
inline double gradient_matching_loss(const SgcGradient& real, const SgcGradient& synth) {
    return cosine_distance(real.d_theta1, synth.d_theta1) + cosine_distance(real.d_theta2, synth.d_theta2);
}

inline ad::Var gradient_matching_loss(const SgcGradient& real, const SgcGradientVars& synth) {
    return ad::add(cosine_distance(real.d_theta1, synth.d_theta1), cosine_distance(real.d_theta2, synth.d_theta2));
}

inline void sgc_step(SgcModel& model, const SgcGradient& grad, double lr) {
    model.theta1 -= lr * grad.d_theta1;
    model.theta2 -= lr * grad.d_theta2;
}

}  // namespace hc
