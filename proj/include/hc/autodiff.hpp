#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records primitive operations in execution order; Var is a cheap handle
// (tape pointer + node index). Values are stored in double precision. Each
// primitive registers a backward rule that receives the output gradient and
// accumulates into its parents. A Tape is meant to live for one optimisation
// step: construct, evaluate, call backward(), let it go out of scope.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hc/errors.hpp"

namespace hc::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tape;
class Backprop;

class Var {
public:
    Var() = default;

    bool valid() const { return tape_ != nullptr; }
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }

    const Matrix& value() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    double scalar() const { return value()(0, 0); }
    bool requires_grad() const;

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Result of Tape::backward. Unreached nodes report a zero gradient.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(std::vector<Matrix> grads, std::vector<std::pair<Index, Index>> shapes)
        : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

    Matrix wrt(const Var& v) const {
        const auto& g = grads_.at(v.id());
        if (g.size() == 0) {
            const auto [r, c] = shapes_.at(v.id());
            return Matrix::Zero(r, c);
        }
        return g;
    }

private:
    std::vector<Matrix> grads_;
    std::vector<std::pair<Index, Index>> shapes_;
};

using BackwardFn = std::function<void(const Matrix& grad_out, Backprop& bp)>;

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape() { live_nodes_ -= static_cast<long>(nodes_.size()); }

    Var constant(Matrix value) { return push(std::move(value), "constant", false, {}, nullptr); }
    Var constant_scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }
    Var parameter(Matrix value) { return push(std::move(value), "parameter", true, {}, nullptr, true); }

    /// Records a primitive. requires_grad is inherited from the parents; when
    /// none of them requires a gradient the backward rule is dropped.
    Var record(Matrix value, const char* op, std::vector<std::size_t> parents, BackwardFn fn) {
        bool rg = false;
        for (auto p : parents) rg = rg || nodes_[p].requires_grad;
        return push(std::move(value), op, rg, std::move(parents), rg ? std::move(fn) : nullptr);
    }

    /// Like record() but without a derivative; reaching it in backward() throws.
    Var record_nondifferentiable(Matrix value, const char* op, std::vector<std::size_t> parents) {
        bool rg = false;
        for (auto p : parents) rg = rg || nodes_[p].requires_grad;
        Var v = push(std::move(value), op, rg, std::move(parents), nullptr);
        nodes_[v.id()].differentiable = false;
        return v;
    }

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Every parent index precedes its consumer.
    bool topologically_ordered() const {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            for (auto p : nodes_[i].parents) {
                if (p >= i) return false;
            }
        }
        return true;
    }

    Gradients backward(const Var& loss);

    /// Nodes alive across all tapes in the process.
    static long live_nodes() { return live_nodes_.load(); }

private:
    friend class Backprop;

    struct Node {
        Matrix value;
        const char* op;
        bool requires_grad;
        bool is_leaf;
        bool differentiable = true;
        std::vector<std::size_t> parents;
        BackwardFn backward;
    };

    Var push(Matrix value, const char* op, bool rg, std::vector<std::size_t> parents, BackwardFn fn,
             bool leaf = false) {
        nodes_.push_back(Node{std::move(value), op, rg, leaf || parents.empty(), true, std::move(parents),
                              std::move(fn)});
        ++live_nodes_;
        return Var(this, nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    inline static std::atomic<long> live_nodes_{0};
};

class Backprop {
public:
    Backprop(Tape& tape, std::vector<Matrix>& grads) : tape_(tape), grads_(grads) {}

    const Matrix& value(std::size_t id) const { return tape_.nodes_[id].value; }
    bool wants(std::size_t id) const { return tape_.nodes_[id].requires_grad; }

    void accumulate(std::size_t id, const Matrix& g) {
        if (!wants(id)) return;
        auto& dst = grads_[id];
        if (dst.size() == 0) {
            dst = g;
        } else {
            dst += g;
        }
    }

private:
    Tape& tape_;
    std::vector<Matrix>& grads_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

inline Gradients Tape::backward(const Var& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
        throw DomainError("backward: loss must be a 1x1 scalar node");
    }
    std::vector<Matrix> grads(nodes_.size());
    std::vector<std::pair<Index, Index>> shapes(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        shapes[i] = {nodes_[i].value.rows(), nodes_[i].value.cols()};
    }
    grads[loss.id()] = Matrix::Ones(1, 1);
    Backprop bp(*this, grads);
    for (std::size_t k = loss.id() + 1; k-- > 0;) {
        Node& node = nodes_[k];
        if (!node.requires_grad || node.is_leaf || grads[k].size() == 0) continue;
        if (!node.differentiable || !node.backward) {
            throw UnsupportedOpError(std::string("backward: no derivative rule for primitive '") + node.op + "'");
        }
        node.backward(grads[k], bp);
    }
    return Gradients(std::move(grads), std::move(shapes));
}

// ---------------------------------------------------------------------------
// broadcasting helpers

namespace detail {

inline std::pair<Index, Index> broadcast_shape(const Matrix& a, const Matrix& b, const char* op) {
    auto dim = [op](Index x, Index y) {
        if (x == y || y == 1) return x;
        if (x == 1) return y;
        throw DomainError(std::string(op) + ": incompatible shapes for broadcasting");
    };
    return {dim(a.rows(), b.rows()), dim(a.cols(), b.cols())};
}

inline Matrix expand(const Matrix& m, Index rows, Index cols) {
    if (m.rows() == rows && m.cols() == cols) return m;
    return m.replicate(rows / m.rows(), cols / m.cols());
}

inline Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
    if (g.rows() == rows && g.cols() == cols) return g;
    Matrix out = g;
    if (rows == 1 && out.rows() != 1) out = out.colwise().sum().eval();
    if (cols == 1 && out.cols() != 1) out = out.rowwise().sum().eval();
    return out;
}

inline void same_tape(const Var& a, const Var& b) {
    if (&a.tape() != &b.tape()) throw DomainError("autodiff: operands recorded on different tapes");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary (with row/column/scalar broadcasting)

inline Var add(const Var& a, const Var& b) {
    detail::same_tape(a, b);
    const auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "add");
    Matrix out = detail::expand(a.value(), r, c) + detail::expand(b.value(), r, c);
    const auto ia = a.id(), ib = b.id();
    const auto sa = std::pair{a.rows(), a.cols()}, sb = std::pair{b.rows(), b.cols()};
    return a.tape().record(std::move(out), "add", {ia, ib}, [=](const Matrix& g, Backprop& bp) {
        bp.accumulate(ia, detail::reduce_to(g, sa.first, sa.second));
        bp.accumulate(ib, detail::reduce_to(g, sb.first, sb.second));
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::same_tape(a, b);
    const auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "sub");
    Matrix out = detail::expand(a.value(), r, c) - detail::expand(b.value(), r, c);
    const auto ia = a.id(), ib = b.id();
    const auto sa = std::pair{a.rows(), a.cols()}, sb = std::pair{b.rows(), b.cols()};
    return a.tape().record(std::move(out), "sub", {ia, ib}, [=](const Matrix& g, Backprop& bp) {
        bp.accumulate(ia, detail::reduce_to(g, sa.first, sa.second));
        bp.accumulate(ib, detail::reduce_to(-g, sb.first, sb.second));
    });
}

inline Var mul(const Var& a, const Var& b) {
    detail::same_tape(a, b);
    const auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "mul");
    Matrix out = detail::expand(a.value(), r, c).cwiseProduct(detail::expand(b.value(), r, c));
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), "mul", {ia, ib}, [=](const Matrix& g, Backprop& bp) {
        const Matrix& va = bp.value(ia);
        const Matrix& vb = bp.value(ib);
        if (bp.wants(ia)) {
            bp.accumulate(ia, detail::reduce_to(g.cwiseProduct(detail::expand(vb, r, c)), va.rows(), va.cols()));
        }
        if (bp.wants(ib)) {
            bp.accumulate(ib, detail::reduce_to(g.cwiseProduct(detail::expand(va, r, c)), vb.rows(), vb.cols()));
        }
    });
}

inline Var div(const Var& a, const Var& b) {
    detail::same_tape(a, b);
    const auto [r, c] = detail::broadcast_shape(a.value(), b.value(), "div");
    Matrix eb = detail::expand(b.value(), r, c);
    Matrix out = detail::expand(a.value(), r, c).cwiseQuotient(eb);
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(out, "div", {ia, ib}, [=](const Matrix& g, Backprop& bp) {
        const Matrix& va = bp.value(ia);
        const Matrix& vb = bp.value(ib);
        if (bp.wants(ia)) bp.accumulate(ia, detail::reduce_to(g.cwiseQuotient(eb), va.rows(), va.cols()));
        if (bp.wants(ib)) {
            Matrix gb = -g.cwiseProduct(out).cwiseQuotient(eb);
            bp.accumulate(ib, detail::reduce_to(gb, vb.rows(), vb.cols()));
        }
    });
}

// ---------------------------------------------------------------------------
// unary

inline Var scale(const Var& a, double s) {
    const auto ia = a.id();
    return a.tape().record(a.value() * s, "scale", {ia},
                           [=](const Matrix& g, Backprop& bp) { bp.accumulate(ia, g * s); });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var add_scalar(const Var& a, double s) {
    const auto ia = a.id();
    Matrix out = a.value().array() + s;
    return a.tape().record(std::move(out), "add_scalar", {ia},
                           [=](const Matrix& g, Backprop& bp) { bp.accumulate(ia, g); });
}

namespace detail {

/// Elementwise map with derivative expressed from input x and output y.
template <typename F, typename D>
Var unary(const Var& a, const char* op, F f, D dfdx) {
    Matrix out = a.value().unaryExpr(f);
    const auto ia = a.id();
    return a.tape().record(out, op, {ia}, [=](const Matrix& g, Backprop& bp) {
        const Matrix& x = bp.value(ia);
        Matrix d(x.rows(), x.cols());
        for (Index j = 0; j < x.cols(); ++j)
            for (Index i = 0; i < x.rows(); ++i) d(i, j) = g(i, j) * dfdx(x(i, j), out(i, j));
        bp.accumulate(ia, d);
    });
}

}  // namespace detail

inline Var tanh(const Var& a) {
    return detail::unary(
        a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
    return detail::unary(
        a, "sigmoid",
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Var relu(const Var& a) {
    return detail::unary(
        a, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

inline Var exp(const Var& a) {
    return detail::unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
    return detail::unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var sqrt(const Var& a) {
    return detail::unary(
        a, "sqrt", [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

inline Var square(const Var& a) {
    return detail::unary(
        a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var abs(const Var& a) {
    return detail::unary(
        a, "abs", [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

inline Var atanh(const Var& a) {
    return detail::unary(
        a, "atanh", [](double x) { return std::atanh(x); }, [](double x, double) { return 1.0 / (1.0 - x * x); });
}

/// 1/sqrt(x) for x > 0 and 0 for x <= 0 (gradient 0 there). Degree normalisation.
inline Var safe_rsqrt(const Var& a) {
    return detail::unary(
        a, "safe_rsqrt", [](double x) { return x > 0 ? 1.0 / std::sqrt(x) : 0.0; },
        [](double x, double y) { return x > 0 ? -0.5 * y / x : 0.0; });
}

/// Heaviside step. Deliberately has no derivative rule.
inline Var step(const Var& a) {
    Matrix out = a.value().unaryExpr([](double x) { return x > 0 ? 1.0 : 0.0; });
    return a.tape().record_nondifferentiable(std::move(out), "step", {a.id()});
}

// ---------------------------------------------------------------------------
// linear algebra

inline Var matmul(const Var& a, const Var& b) {
    detail::same_tape(a, b);
    if (a.cols() != b.rows()) throw DomainError("matmul: inner dimensions differ");
    Matrix out = a.value() * b.value();
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), "matmul", {ia, ib}, [=](const Matrix& g, Backprop& bp) {
        if (bp.wants(ia)) bp.accumulate(ia, g * bp.value(ib).transpose());
        if (bp.wants(ib)) bp.accumulate(ib, bp.value(ia).transpose() * g);
    });
}

inline Var transpose(const Var& a) {
    const auto ia = a.id();
    return a.tape().record(a.value().transpose(), "transpose", {ia},
                           [=](const Matrix& g, Backprop& bp) { bp.accumulate(ia, g.transpose()); });
}

/// Constant sparse matrix times a dense node.
inline Var spmm(std::shared_ptr<const SparseMatrix> s, const Var& b) {
    if (s->cols() != b.rows()) throw DomainError("spmm: inner dimensions differ");
    Matrix out = (*s) * b.value();
    const auto ib = b.id();
    return b.tape().record(std::move(out), "spmm", {ib},
                           [s = std::move(s), ib](const Matrix& g, Backprop& bp) {
                               bp.accumulate(ib, s->transpose() * g);
                           });
}

// ---------------------------------------------------------------------------
// reductions

inline Var sum(const Var& a) {
    const auto ia = a.id();
    const Index r = a.rows(), c = a.cols();
    return a.tape().record(Matrix::Constant(1, 1, a.value().sum()), "sum", {ia},
                           [=](const Matrix& g, Backprop& bp) { bp.accumulate(ia, Matrix::Constant(r, c, g(0, 0))); });
}

/// Column sums: (r x c) -> (1 x c).
inline Var sum_rows(const Var& a) {
    const auto ia = a.id();
    const Index r = a.rows();
    return a.tape().record(a.value().colwise().sum(), "sum_rows", {ia},
                           [=](const Matrix& g, Backprop& bp) { bp.accumulate(ia, g.replicate(r, 1)); });
}

/// Row sums: (r x c) -> (r x 1).
inline Var sum_cols(const Var& a) {
    const auto ia = a.id();
    const Index c = a.cols();
    return a.tape().record(a.value().rowwise().sum(), "sum_cols", {ia},
                           [=](const Matrix& g, Backprop& bp) { bp.accumulate(ia, g.replicate(1, c)); });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Euclidean norm of every row: (r x c) -> (r x 1). Zero rows get gradient 0.
inline Var row_norm(const Var& a) {
    Matrix out = a.value().rowwise().norm();
    const auto ia = a.id();
    return a.tape().record(out, "row_norm", {ia}, [=](const Matrix& g, Backprop& bp) {
        const Matrix& x = bp.value(ia);
        Matrix d = Matrix::Zero(x.rows(), x.cols());
        for (Index i = 0; i < x.rows(); ++i) {
            if (out(i, 0) > 0) d.row(i) = x.row(i) * (g(i, 0) / out(i, 0));
        }
        bp.accumulate(ia, d);
    });
}

/// Frobenius norm of the whole node.
inline Var frobenius_norm(const Var& a) {
    const double n = a.value().norm();
    const auto ia = a.id();
    return a.tape().record(Matrix::Constant(1, 1, n), "frobenius_norm", {ia}, [=](const Matrix& g, Backprop& bp) {
        if (n > 0) bp.accumulate(ia, bp.value(ia) * (g(0, 0) / n));
    });
}

/// Row-wise radial map out_i = phi(|x_i|) x_i. `fn(r)` returns {phi(r), phi'(r)/r};
/// the caller is responsible for a finite limit at r = 0.
template <typename Fn>
Var radial(const Var& a, const char* op, Fn fn) {
    const Matrix& x = a.value();
    const Index n = x.rows();
    Vector phi(n), psi(n);
    Matrix out(x.rows(), x.cols());
    for (Index i = 0; i < n; ++i) {
        const auto [p, q] = fn(x.row(i).norm());
        phi(i) = p;
        psi(i) = q;
        out.row(i) = x.row(i) * p;
    }
    const auto ia = a.id();
    return a.tape().record(std::move(out), op, {ia}, [=](const Matrix& g, Backprop& bp) {
        const Matrix& xv = bp.value(ia);
        Matrix d(xv.rows(), xv.cols());
        for (Index i = 0; i < xv.rows(); ++i) {
            const double xg = xv.row(i).dot(g.row(i));
            d.row(i) = g.row(i) * phi(i) + xv.row(i) * (psi(i) * xg);
        }
        bp.accumulate(ia, d);
    });
}

// ---------------------------------------------------------------------------
// indexing

inline Var concat_cols(const Var& a, const Var& b) {
    detail::same_tape(a, b);
    if (a.rows() != b.rows()) throw DomainError("concat_cols: row counts differ");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    const auto ia = a.id(), ib = b.id();
    const Index ca = a.cols(), cb = b.cols();
    return a.tape().record(std::move(out), "concat_cols", {ia, ib}, [=](const Matrix& g, Backprop& bp) {
        bp.accumulate(ia, g.leftCols(ca));
        bp.accumulate(ib, g.rightCols(cb));
    });
}

inline Var gather_rows(const Var& a, std::vector<Index> idx) {
    Matrix out(static_cast<Index>(idx.size()), a.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = a.value().row(idx[k]);
    const auto ia = a.id();
    const Index r = a.rows(), c = a.cols();
    return a.tape().record(std::move(out), "gather_rows", {ia},
                           [=, idx = std::move(idx)](const Matrix& g, Backprop& bp) {
                               Matrix d = Matrix::Zero(r, c);
                               for (std::size_t k = 0; k < idx.size(); ++k) d.row(idx[k]) += g.row(static_cast<Index>(k));
                               bp.accumulate(ia, d);
                           });
}

/// Places entries of a column vector at distinct (row, col) positions of an
/// otherwise zero (n x m) matrix.
inline Var scatter(const Var& values, std::vector<Index> rows, std::vector<Index> cols, Index n, Index m) {
    if (values.cols() != 1 || static_cast<std::size_t>(values.rows()) != rows.size() || rows.size() != cols.size()) {
        throw DomainError("scatter: index/value length mismatch");
    }
    Matrix out = Matrix::Zero(n, m);
    for (std::size_t k = 0; k < rows.size(); ++k) out(rows[k], cols[k]) = values.value()(static_cast<Index>(k), 0);
    const auto iv = values.id();
    return values.tape().record(std::move(out), "scatter", {iv},
                                [=, rows = std::move(rows), cols = std::move(cols)](const Matrix& g, Backprop& bp) {
                                    Matrix d(static_cast<Index>(rows.size()), 1);
                                    for (std::size_t k = 0; k < rows.size(); ++k) d(static_cast<Index>(k), 0) = g(rows[k], cols[k]);
                                    bp.accumulate(iv, d);
                                });
}

// ---------------------------------------------------------------------------
// losses

/// Row-wise softmax.
inline Var softmax_rows(const Var& a) {
    Matrix out = a.value();
    for (Index i = 0; i < out.rows(); ++i) {
        const double m = out.row(i).maxCoeff();
        out.row(i) = (out.row(i).array() - m).exp();
        out.row(i) /= out.row(i).sum();
    }
    const auto ia = a.id();
    return a.tape().record(out, "softmax_rows", {ia}, [=](const Matrix& g, Backprop& bp) {
        Matrix d(out.rows(), out.cols());
        for (Index i = 0; i < out.rows(); ++i) {
            const double dot = g.row(i).dot(out.row(i));
            d.row(i) = out.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
        }
        bp.accumulate(ia, d);
    });
}

/// Mean softmax cross-entropy of logits (n x C) against integer labels.
inline Var softmax_cross_entropy(const Var& logits, std::vector<int> labels) {
    const Matrix& z = logits.value();
    if (static_cast<std::size_t>(z.rows()) != labels.size()) throw DomainError("softmax_cross_entropy: label count");
    Matrix prob(z.rows(), z.cols());
    double loss = 0.0;
    for (Index i = 0; i < z.rows(); ++i) {
        const double m = z.row(i).maxCoeff();
        prob.row(i) = (z.row(i).array() - m).exp();
        const double s = prob.row(i).sum();
        prob.row(i) /= s;
        loss += std::log(s) + m - z(i, labels[static_cast<std::size_t>(i)]);
    }
    const double n = static_cast<double>(z.rows());
    const auto il = logits.id();
    return logits.tape().record(Matrix::Constant(1, 1, loss / n), "softmax_cross_entropy", {il},
                                [=, labels = std::move(labels)](const Matrix& g, Backprop& bp) {
                                    Matrix d = prob;
                                    for (Index i = 0; i < d.rows(); ++i) d(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
                                    bp.accumulate(il, d * (g(0, 0) / n));
                                });
}

/// Mean binary cross-entropy on logits with targets in [0, 1], computed stably.
inline Var bce_with_logits(const Var& logits, Vector targets) {
    const Matrix& z = logits.value();
    if (z.cols() != 1 || z.rows() != targets.size()) throw DomainError("bce_with_logits: shape mismatch");
    double loss = 0.0;
    for (Index i = 0; i < z.rows(); ++i) {
        const double x = z(i, 0);
        loss += std::max(x, 0.0) - x * targets(i) + std::log1p(std::exp(-std::abs(x)));
    }
    const double n = static_cast<double>(z.rows());
    const auto il = logits.id();
    return logits.tape().record(Matrix::Constant(1, 1, loss / n), "bce_with_logits", {il},
                                [=, t = std::move(targets)](const Matrix& g, Backprop& bp) {
                                    const Matrix& x = bp.value(il);
                                    Matrix d(x.rows(), 1);
                                    for (Index i = 0; i < x.rows(); ++i) {
                                        const double v = x(i, 0);
                                        const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
                                        d(i, 0) = (s - t(i)) * g(0, 0) / n;
                                    }
                                    bp.accumulate(il, d);
                                });
}

// ---------------------------------------------------------------------------
// spectral

/// Eigenvalues closer than this are treated as one cluster in the
/// second-largest-eigenvalue derivative.
inline constexpr double kEigenDegeneracyTol = 1e-8;

/// Second-largest eigenvalue of a symmetric matrix. Backward uses
/// d(lambda)/dM = u u^T; when lambda is (numerically) repeated the average
/// projector over the cluster is used instead, which is a valid subgradient.
inline Var second_largest_eigenvalue(const Var& m) {
    const Matrix& raw = m.value();
    if (raw.rows() != raw.cols()) throw DomainError("second_largest_eigenvalue: matrix must be square");
    if (raw.rows() < 2) throw DomainError("second_largest_eigenvalue: need at least 2 nodes");
    const Matrix sym = 0.5 * (raw + raw.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("second_largest_eigenvalue: eigensolver failed");
    const Vector& ev = es.eigenvalues();
    const Index n = ev.size();
    const double lambda2 = ev(n - 2);
    Matrix proj = Matrix::Zero(n, n);
    int count = 0;
    for (Index k = 0; k < n; ++k) {
        if (std::abs(ev(k) - lambda2) < kEigenDegeneracyTol) {
            const Vector u = es.eigenvectors().col(k);
            proj.noalias() += u * u.transpose();
            ++count;
        }
    }
    proj /= static_cast<double>(count);
    const auto im = m.id();
    return m.tape().record(Matrix::Constant(1, 1, lambda2), "second_largest_eigenvalue", {im},
                           [=](const Matrix& g, Backprop& bp) { bp.accumulate(im, proj * g(0, 0)); });
}

}  // namespace hc::ad
