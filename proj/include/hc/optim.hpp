#pragma once

#include <cmath>
#include <vector>

#include "hc/autodiff.hpp"
#include "hc/hyperbolic.hpp"

namespace hc {

/// Adam over a fixed list of parameter matrices.
class Adam {
public:
    explicit Adam(double lr, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
        if (m_.empty()) {
            for (auto* p : params) {
                m_.push_back(Matrix::Zero(p->rows(), p->cols()));
                v_.push_back(Matrix::Zero(p->rows(), p->cols()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_), c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t k = 0; k < params.size(); ++k) {
            Matrix g = grads[k];
            if (wd_ != 0.0) g += wd_ * *params[k];
            m_[k] = b1_ * m_[k] + (1.0 - b1_) * g;
            v_[k] = b2_ * v_[k] + (1.0 - b2_) * g.cwiseProduct(g);
            *params[k] -= (lr_ / c1) * m_[k].cwiseQuotient(((v_[k] / c2).cwiseSqrt().array() + eps_).matrix());
        }
    }

private:
    double lr_, wd_, b1_, b2_, eps_;
    int t_ = 0;
    std::vector<Matrix> m_, v_;
};

/// Heavy-ball SGD with L2 weight decay: buf = mu buf + (g + wd p); p -= lr buf.
inline void momentum_step(Matrix& p, const Matrix& g, Matrix& buf, double lr, double momentum, double weight_decay) {
    if (buf.size() == 0) buf = Matrix::Zero(p.rows(), p.cols());
    buf = momentum * buf + g + weight_decay * p;
    p -= lr * buf;
}

/// Riemannian momentum step for a point of the Poincare ball. The Euclidean
/// gradient is rescaled by the inverse metric ((1 - c|x|^2)^2 / 4) and the
/// step is retracted with the exponential map at the point.
inline void riemannian_step(Vector& x, const Vector& egrad, Vector& buf, double kappa, double lr, double momentum) {
    if (buf.size() == 0) buf = Vector::Zero(x.size());
    const double c = -kappa;
    const double f = 1.0 - c * x.squaredNorm();
    buf = momentum * buf + 0.25 * f * f * egrad;
    x = exp_map({x, kappa}, -lr * buf).coords;
}

}  // namespace hc
