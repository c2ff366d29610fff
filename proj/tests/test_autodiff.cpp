#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "hc/autodiff.hpp"
#include "hc/gradcheck.hpp"
#include "hc/rng.hpp"

using namespace hc;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_matrix(Rng& rng, ad::Index r, ad::Index c, double scale = 1.0) {
    return Matrix::NullaryExpr(r, c, [&] { return scale * rng.normal(); });
}

void expect_passes(const GradCheckReport& rep, const char* what) {
    EXPECT_TRUE(rep.passed) << what << ": " << rep.describe();
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a(), b());
    EXPECT_NE(Rng(42)(), c());
}

TEST(Rng, SplitStreamsAreIndependentOfParentPosition) {
    Rng a(7);
    Rng s1 = a.split("init");
    a();
    a();
    Rng s2 = a.split("init");
    EXPECT_EQ(s1(), s2());
    EXPECT_NE(Rng(7).split("init")(), Rng(7).split("sampling")());
}

TEST(Rng, UniformAndBelowStayInRange) {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        ASSERT_LT(r.below(7), 7u);
    }
}

TEST(Backward, SumGivesOnes) {
    Tape t;
    Var x = t.parameter(Matrix::Random(3, 4));
    auto g = t.backward(ad::sum(x)).wrt(x);
    EXPECT_TRUE(g.isApprox(Matrix::Ones(3, 4)));
}

TEST(Backward, SquaredNormGivesTwiceInput) {
    Tape t;
    Matrix v = Matrix::Random(5, 2);
    Var x = t.parameter(v);
    auto g = t.backward(ad::sum(ad::square(x))).wrt(x);
    EXPECT_LE((g - 2.0 * v).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Backward, LossMustBeScalar) {
    Tape t;
    Var x = t.parameter(Matrix::Ones(2, 2));
    EXPECT_THROW(t.backward(x), DomainError);
}

TEST(Backward, UnsupportedPrimitiveThrows) {
    Tape t;
    Var x = t.parameter(Matrix::Random(2, 2));
    Var loss = ad::sum(ad::mul(ad::step(x), x));
    try {
        t.backward(loss);
        FAIL() << "expected UnsupportedOpError";
    } catch (const UnsupportedOpError& e) {
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    }
}

TEST(Backward, ConstantsDoNotReceiveGradients) {
    Tape t;
    Var c = t.constant(Matrix::Ones(2, 2));
    Var x = t.parameter(Matrix::Ones(2, 2));
    auto g = t.backward(ad::sum(ad::mul(c, x)));
    EXPECT_TRUE(g.wrt(c).isZero());
    EXPECT_TRUE(g.wrt(x).isApprox(Matrix::Ones(2, 2)));
}

TEST(Tape, RecordsInTopologicalOrderAndReleasesNodes) {
    const long before = Tape::live_nodes();
    {
        Tape t;
        Var x = t.parameter(Matrix::Random(3, 3));
        Var y = ad::matmul(ad::tanh(x), ad::transpose(x));
        t.backward(ad::sum(y));
        EXPECT_TRUE(t.topologically_ordered());
        EXPECT_GT(Tape::live_nodes(), before);
    }
    EXPECT_EQ(Tape::live_nodes(), before);
}

TEST(Backward, TwentyParameterPipelineMatchesFiniteDifferences) {
    Rng rng(11);
    const Matrix a = random_matrix(rng, 6, 4);
    const Matrix b = random_matrix(rng, 5, 3);
    auto build = [&](Tape& t, const Var& theta) {
        Var w = ad::gather_rows(theta, {0, 1, 2, 3});           // 4 x 5
        Var inputs = t.constant(a);
        Var h = ad::tanh(ad::matmul(inputs, w));                  // 6 x 5
        Var z = ad::sigmoid(ad::matmul(h, t.constant(b)));        // 6 x 3
        return ad::add(ad::sum(ad::square(z)), ad::frobenius_norm(h));
    };
    const Matrix theta = random_matrix(rng, 4, 5, 0.5);
    ASSERT_EQ(theta.size(), 20);
    expect_passes(check_gradients(build, theta, {1e-5, 1e-4, 1e-6}), "pipeline");
}

TEST(GradCheck, QuadraticIsExactUpToRoundoff) {
    Rng rng(3);
    const Matrix q = random_matrix(rng, 4, 4);
    const Matrix spd = q * q.transpose();
    auto build = [&](Tape& t, const Var& x) { return ad::sum(ad::mul(x, ad::matmul(t.constant(spd), x))); };
    auto rep = check_gradients(build, random_matrix(rng, 4, 1), {1e-5, 1e-8, 1e-6});
    EXPECT_LE(rep.max_rel_error, 1e-8) << rep.describe();
}

TEST(GradCheck, DeepSigmoidCompositionPasses) {
    Rng rng(5);
    auto build = [](Tape&, const Var& x) {
        return ad::sum(ad::sigmoid(ad::sigmoid(ad::sigmoid(ad::sigmoid(ad::scale(x, 3.0))))));
    };
    expect_passes(check_gradients(build, random_matrix(rng, 3, 3), {1e-5, 1e-4, 1e-6}), "sigmoid^4");
}

TEST(GradCheck, CorruptedBackwardRuleIsReported) {
    Rng rng(6);
    auto broken_square = [](const Var& a) {
        Matrix out = a.value().cwiseProduct(a.value());
        const auto ia = a.id();
        return a.tape().record(out, "broken_square", {ia}, [=](const Matrix& g, ad::Backprop& bp) {
            Matrix d = 2.0 * bp.value(ia).cwiseProduct(g);
            d(1, 0) *= 1.5;  // wrong on purpose
            bp.accumulate(ia, d);
        });
    };
    auto build = [&](Tape&, const Var& x) { return ad::sum(broken_square(x)); };
    Matrix theta = random_matrix(rng, 3, 1);
    theta(1, 0) = 2.0;
    auto rep = check_gradients(build, theta, {1e-5, 1e-4, 1e-6});
    EXPECT_FALSE(rep.passed);
    EXPECT_EQ(rep.worst_row, 1);
    EXPECT_EQ(rep.worst_col, 0);
    EXPECT_NE(rep.describe().find("(1, 0)"), std::string::npos);
}

TEST(GradCheck, NonFiniteEvaluationThrows) {
    auto build = [](Tape&, const Var& x) { return ad::sum(ad::log(x)); };
    EXPECT_THROW(check_gradients(build, Matrix::Constant(1, 1, 1e-6), {1e-5, 1e-4, 1e-6}), NumericalError);
}

// Every primitive used by the condensation and evaluation pipelines.
class PrimitiveMatrix : public ::testing::Test {
protected:
    Rng rng{2024};
    GradCheckOptions opt{1e-5, 1e-4, 1e-6};
};

TEST_F(PrimitiveMatrix, BroadcastingArithmetic) {
    const Matrix row = random_matrix(rng, 1, 4);
    const Matrix col = random_matrix(rng, 3, 1).cwiseAbs().array() + 0.5;
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::square(ad::add(x, t.constant(row)))); },
                                  random_matrix(rng, 3, 4), opt), "add");
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::square(ad::sub(t.constant(row), x))); },
                                  random_matrix(rng, 3, 4), opt), "sub");
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::mul(ad::tanh(x), t.constant(col))); },
                                  random_matrix(rng, 3, 4), opt), "mul col");
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::div(t.constant(col), ad::add_scalar(ad::square(x), 1.0))); },
                                  random_matrix(rng, 3, 1), opt), "div denominator");
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::square(ad::div(x, t.constant(col)))); },
                                  random_matrix(rng, 3, 4), opt), "div numerator");
    const Matrix full = random_matrix(rng, 3, 4);
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::mul(t.constant(full), x)); },
                                  random_matrix(rng, 1, 4), opt), "mul broadcast parameter");
}

TEST_F(PrimitiveMatrix, LinearAlgebra) {
    const Matrix b = random_matrix(rng, 4, 2);
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::square(ad::matmul(x, t.constant(b)))); },
                                  random_matrix(rng, 3, 4), opt), "matmul left");
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::square(ad::matmul(t.constant(b.transpose()), x))); },
                                  random_matrix(rng, 4, 3), opt), "matmul right");
    expect_passes(check_gradients([&](Tape&, const Var& x) { return ad::sum(ad::mul(ad::transpose(x), ad::transpose(ad::tanh(x)))); },
                                  random_matrix(rng, 3, 2), opt), "transpose");
    auto s = std::make_shared<ad::SparseMatrix>(Matrix(random_matrix(rng, 5, 4)).sparseView());
    expect_passes(check_gradients([&](Tape&, const Var& x) { return ad::sum(ad::square(ad::spmm(s, x))); },
                                  random_matrix(rng, 4, 2), opt), "spmm");
}

TEST_F(PrimitiveMatrix, Unary) {
    auto pos = Matrix(random_matrix(rng, 3, 3).cwiseAbs().array() + 0.2);
    auto small = Matrix(random_matrix(rng, 3, 3) * 0.3);
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::tanh(x)); }, random_matrix(rng, 3, 3), opt), "tanh");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::sigmoid(x)); }, random_matrix(rng, 3, 3), opt), "sigmoid");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::square(ad::relu(x))); }, random_matrix(rng, 3, 3), opt), "relu");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::exp(x)); }, random_matrix(rng, 3, 3), opt), "exp");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::log(x)); }, pos, opt), "log");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::sqrt(x)); }, pos, opt), "sqrt");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::safe_rsqrt(x)); }, pos, opt), "safe_rsqrt");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::abs(x)); }, pos, opt), "abs");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::atanh(x)); }, small, opt), "atanh");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::neg(ad::square(x))); }, small, opt), "neg");
}

TEST_F(PrimitiveMatrix, Reductions) {
    const Matrix w = random_matrix(rng, 3, 4);
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::square(ad::sum_rows(ad::mul(x, t.constant(w))))); },
                                  random_matrix(rng, 3, 4), opt), "sum_rows");
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::square(ad::sum_cols(ad::mul(x, t.constant(w))))); },
                                  random_matrix(rng, 3, 4), opt), "sum_cols");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::row_norm(x)); }, random_matrix(rng, 4, 3), opt), "row_norm");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::frobenius_norm(x); }, random_matrix(rng, 4, 3), opt), "frobenius");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::mean(ad::tanh(x)); }, random_matrix(rng, 4, 3), opt), "mean");
}

TEST_F(PrimitiveMatrix, Indexing) {
    const Matrix w = random_matrix(rng, 4, 5);
    expect_passes(check_gradients([&](Tape& t, const Var& x) {
                      Var c = ad::concat_cols(x, ad::tanh(x));
                      return ad::sum(ad::mul(c, t.constant(w.leftCols(4))));
                  }, random_matrix(rng, 4, 2), opt), "concat");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::sum(ad::square(ad::gather_rows(x, {2, 0, 2, 1}))); },
                                  random_matrix(rng, 3, 2), opt), "gather");
    expect_passes(check_gradients([&](Tape& t, const Var& x) {
                      Var m = ad::scatter(x, {0, 1, 2}, {1, 2, 0}, 3, 3);
                      return ad::sum(ad::square(ad::matmul(m, t.constant(w.topLeftCorner(3, 3)))));
                  }, random_matrix(rng, 3, 1), opt), "scatter");
}

TEST_F(PrimitiveMatrix, Losses) {
    const Matrix w = random_matrix(rng, 3, 4);
    expect_passes(check_gradients([&](Tape& t, const Var& x) { return ad::sum(ad::mul(ad::softmax_rows(x), t.constant(w))); },
                                  random_matrix(rng, 3, 4), opt), "softmax_rows");
    expect_passes(check_gradients([](Tape&, const Var& x) { return ad::softmax_cross_entropy(x, {0, 3, 1}); },
                                  random_matrix(rng, 3, 4), opt), "softmax_cross_entropy");
    ad::Vector targets(4);
    targets << 1.0, 0.0, 0.3, 1.0;
    expect_passes(check_gradients([&](Tape&, const Var& x) { return ad::bce_with_logits(x, targets); },
                                  random_matrix(rng, 4, 1, 3.0), opt), "bce_with_logits");
}

TEST_F(PrimitiveMatrix, Radial) {
    auto fn = [](double r) {
        // phi(r) = 1 / (1 + r^2)
        const double p = 1.0 / (1.0 + r * r);
        return std::pair{p, -2.0 * p * p};
    };
    expect_passes(check_gradients([&](Tape&, const Var& x) { return ad::sum(ad::square(ad::radial(x, "test_radial", fn))); },
                                  random_matrix(rng, 4, 3), opt), "radial");
}

TEST(SecondLargestEigenvalue, CompleteGraphNormalised) {
    Tape t;
    // normalised K3 adjacency: off-diagonal 1/2
    Matrix m = Matrix::Constant(3, 3, 0.5);
    m.diagonal().setZero();
    Var x = t.parameter(m);
    Var l2 = ad::second_largest_eigenvalue(x);
    EXPECT_NEAR(l2.scalar(), -0.5, 1e-12);
    const Matrix g = t.backward(l2).wrt(x);
    EXPECT_TRUE(g.allFinite());
    EXPECT_LE((g - g.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SecondLargestEigenvalue, DegenerateSpectrumGivesFiniteSubgradient) {
    // two disjoint edges: eigenvalues {-1, -1, 1, 1}
    Matrix m = Matrix::Zero(4, 4);
    m(0, 1) = m(1, 0) = m(2, 3) = m(3, 2) = 1.0;
    Tape t;
    Var x = t.parameter(m);
    Var l2 = ad::second_largest_eigenvalue(x);
    EXPECT_NEAR(l2.scalar(), 1.0, 1e-12);
    const Matrix g = t.backward(l2).wrt(x);
    EXPECT_TRUE(g.allFinite());
}

TEST(SecondLargestEigenvalue, MatchesFiniteDifferencesOnSymmetricPerturbations) {
    Rng rng(99);
    const ad::Index n = 6;
    std::vector<ad::Index> rows, cols;
    for (ad::Index i = 0; i < n; ++i)
        for (ad::Index j = i + 1; j < n; ++j) {
            rows.push_back(i);
            cols.push_back(j);
        }
    auto build = [&](Tape&, const Var& upper) {
        Var a = ad::scatter(upper, rows, cols, n, n);
        return ad::second_largest_eigenvalue(ad::add(a, ad::transpose(a)));
    };
    for (int trial = 0; trial < 10; ++trial) {
        Matrix w = Matrix::NullaryExpr(static_cast<ad::Index>(rows.size()), 1, [&] { return rng.uniform(0.05, 1.0); });
        auto rep = check_gradients(build, w, {1e-5, 1e-3, 1e-6});
        EXPECT_TRUE(rep.passed) << "trial " << trial << ": " << rep.describe();
    }
}
