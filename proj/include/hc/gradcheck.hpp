#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>

#include "hc/autodiff.hpp"
#include "hc/errors.hpp"

namespace hc {

struct GradCheckReport {
    bool passed = true;
    double max_rel_error = 0.0;
    ad::Index worst_row = -1;
    ad::Index worst_col = -1;
    ad::Matrix analytic;
    ad::Matrix numeric;
    ad::Matrix rel_error;

    std::string describe() const {
        std::ostringstream os;
        os << (passed ? "pass" : "FAIL") << ": max relative error " << max_rel_error;
        if (worst_row >= 0) {
            os << " at coordinate (" << worst_row << ", " << worst_col << ") analytic=" << analytic(worst_row, worst_col)
               << " numeric=" << numeric(worst_row, worst_col);
        }
        return os.str();
    }
};

struct GradCheckOptions {
    double step = 1e-5;
    double tol = 1e-4;
    /// Denominator floor: rel = |a - n| / max(|a|, |n|, floor).
    double floor = 1e-6;
};

/// Compares an analytic gradient against central differences coordinate by coordinate.
inline GradCheckReport check_gradients(const std::function<double(const ad::Matrix&)>& value,
                                       const std::function<ad::Matrix(const ad::Matrix&)>& gradient,
                                       const ad::Matrix& theta, GradCheckOptions opt = {}) {
    GradCheckReport rep;
    rep.analytic = gradient(theta);
    if (rep.analytic.rows() != theta.rows() || rep.analytic.cols() != theta.cols()) {
        throw DomainError("check_gradients: gradient shape does not match parameter shape");
    }
    rep.numeric.resize(theta.rows(), theta.cols());
    rep.rel_error.resize(theta.rows(), theta.cols());
    ad::Matrix probe = theta;
    for (ad::Index j = 0; j < theta.cols(); ++j) {
        for (ad::Index i = 0; i < theta.rows(); ++i) {
            const double orig = probe(i, j);
            probe(i, j) = orig + opt.step;
            const double fp = value(probe);
            probe(i, j) = orig - opt.step;
            const double fm = value(probe);
            probe(i, j) = orig;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                std::ostringstream os;
                os << "check_gradients: non-finite evaluation at coordinate (" << i << ", " << j << ")";
                throw NumericalError(os.str());
            }
            const double num = (fp - fm) / (2.0 * opt.step);
            const double a = rep.analytic(i, j);
            const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), opt.floor});
            rep.numeric(i, j) = num;
            rep.rel_error(i, j) = rel;
            if (rel > rep.max_rel_error || rep.worst_row < 0) {
                rep.max_rel_error = rel;
                rep.worst_row = i;
                rep.worst_col = j;
            }
        }
    }
    rep.passed = rep.max_rel_error <= opt.tol;
    return rep;
}

/// Tape-based variant: `build(tape, theta_var)` records the scalar loss.
template <typename Build>
GradCheckReport check_gradients(Build build, const ad::Matrix& theta, GradCheckOptions opt = {}) {
    auto value = [&](const ad::Matrix& t) {
        ad::Tape tape;
        ad::Var p = tape.parameter(t);
        return build(tape, p).scalar();
    };
    auto gradient = [&](const ad::Matrix& t) {
        ad::Tape tape;
        ad::Var p = tape.parameter(t);
        ad::Var loss = build(tape, p);
        return tape.backward(loss).wrt(p);
    };
    return check_gradients(value, gradient, theta, opt);
}

}  // namespace hc
