#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mipic/errors.hpp"
#include "mipic/similarity.hpp"
#include "support/finite_diff.hpp"

using namespace mipic;
using mipic::testing::check_gradients;
using mipic::testing::random_matrix;

namespace {

using Gram = std::vector<std::vector<long double>>;

Gram gram(const Matrix& x) {
    const std::size_t k = x.rows();
    Gram g(k, std::vector<long double>(k, 0.0L));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t c = 0; c < x.cols(); ++c) g[i][j] += static_cast<long double>(x(i, c)) * x(j, c);
    return g;
}

// HKH with H = I - 11ᵀ/k, written out explicitly.
Gram double_center(const Gram& g) {
    const std::size_t k = g.size();
    Gram h(k, std::vector<long double>(k));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) h[i][j] = (i == j ? 1.0L : 0.0L) - 1.0L / k;
    auto mul = [k](const Gram& a, const Gram& b) {
        Gram out(k, std::vector<long double>(k, 0.0L));
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t l = 0; l < k; ++l)
                for (std::size_t j = 0; j < k; ++j) out[i][j] += a[i][l] * b[l][j];
        return out;
    };
    return mul(mul(h, g), h);
}

long double trace_product(const Gram& a, const Gram& b) {
    long double t = 0.0L;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j) t += a[i][j] * b[j][i];
    return t;
}

// tr(K H L H) form.
double gram_cka(const Matrix& x, const Matrix& y) {
    const Gram k = gram(x), l = gram(y);
    const Gram kc = double_center(k), lc = double_center(l);
    const long double xy = trace_product(k, lc);
    const long double xx = trace_product(k, kc);
    const long double yy = trace_product(l, lc);
    return static_cast<double>(xy / std::sqrt(xx * yy));
}

Matrix random_orthogonal(std::size_t n, std::mt19937_64& rng) {
    Matrix q = random_matrix(n, n, rng);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            double d = 0.0;
            for (std::size_t r = 0; r < n; ++r) d += q(r, c) * q(r, p);
            for (std::size_t r = 0; r < n; ++r) q(r, c) -= d * q(r, p);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < n; ++r) norm += q(r, c) * q(r, c);
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < n; ++r) q(r, c) /= norm;
    }
    return q;
}

}  // namespace

TEST(Cka, MatchesGramFormOnRandomShapes) {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<std::size_t> k_dist(3, 20), d_dist(1, 24);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = k_dist(rng), ds = d_dist(rng), dt = d_dist(rng);
        const Matrix x = random_matrix(k, ds, rng);
        const Matrix y = random_matrix(k, dt, rng);
        worst = std::max(worst, std::abs(sim::cka_linear(x, y).value - gram_cka(x, y)));
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(Cka, HsicMatchesTraceFormUpToNormalizer) {
    std::mt19937_64 rng(3);
    const Matrix x = random_matrix(7, 3, rng);
    const Matrix y = random_matrix(7, 5, rng);
    const double expected = static_cast<double>(trace_product(gram(x), double_center(gram(y))));
    EXPECT_NEAR(sim::hsic_linear(x, y), expected, 1e-10 * std::abs(expected));
}

TEST(Cka, InvariantToOrthogonalTransforms) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = random_matrix(9, 6, rng);
        const Matrix y = random_matrix(9, 4, rng);
        const double base = sim::cka_linear(x, y).value;
        const Matrix xq = la::matmul(x, random_orthogonal(6, rng));
        const Matrix yq = la::matmul(y, random_orthogonal(4, rng));
        EXPECT_NEAR(sim::cka_linear(xq, yq).value, base, 1e-8);
    }
}

TEST(Cka, InvariantToIsotropicScaling) {
    std::mt19937_64 rng(12);
    const Matrix x = random_matrix(10, 5, rng);
    const Matrix y = random_matrix(10, 8, rng);
    const double base = sim::cka_linear(x, y).value;
    for (double c : {0.1, 3.7, 100.0}) {
        EXPECT_NEAR(sim::cka_linear(la::scale(x, c), y).value, base, 1e-8) << "c=" << c;
        EXPECT_NEAR(sim::cka_linear(x, la::scale(y, c)).value, base, 1e-8) << "c=" << c;
    }
}

TEST(Cka, SelfSimilarityIsOne) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = random_matrix(3 + trial % 10, 1 + trial % 7, rng);
        EXPECT_NEAR(sim::cka_linear(x, x).value, 1.0, 1e-10);
    }
}

TEST(Cka, StaysInUnitInterval) {
    std::mt19937_64 rng(14);
    std::uniform_int_distribution<std::size_t> k_dist(3, 20), d_dist(1, 16);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = k_dist(rng);
        const double v = sim::cka_linear(random_matrix(k, d_dist(rng), rng), random_matrix(k, d_dist(rng), rng)).value;
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0 + 1e-12);
    }
}

TEST(Cka, ConstantInputIsDegenerate) {
    std::mt19937_64 rng(15);
    const Matrix flat(5, 3, 2.0);
    const auto v = sim::cka_linear(flat, random_matrix(5, 2, rng));
    EXPECT_TRUE(v.degenerate);
    EXPECT_EQ(v.value, 0.0);

    Node x = Node::parameter(flat);
    auto loss = sim::cka_loss(x, random_matrix(5, 2, rng));
    EXPECT_TRUE(loss.degenerate);
    EXPECT_EQ(loss.loss.item(), 1.0);
    EXPECT_FALSE(loss.loss.requires_grad());
}

TEST(Cka, RejectsMismatchedRowsAndTinyInputs) {
    EXPECT_THROW(sim::cka_linear(Matrix(4, 2, 1.0), Matrix(5, 2, 1.0)), DimensionError);
    EXPECT_THROW(sim::cka_linear(Matrix(1, 2, 1.0), Matrix(1, 2, 1.0)), DegenerateError);
    Matrix bad(3, 2, 1.0);
    bad(1, 1) = std::nan("");
    EXPECT_THROW(sim::cka_linear(bad, Matrix(3, 2, 1.0)), NumericalError);
}

TEST(CkaLoss, ValueIsOneMinusCka) {
    std::mt19937_64 rng(16);
    const Matrix x = random_matrix(6, 3, rng);
    const Matrix t = random_matrix(6, 5, rng);
    EXPECT_NEAR(sim::cka_loss(Node::constant(x), t).loss.item(), 1.0 - sim::cka_linear(x, t).value, 1e-14);
}

TEST(CkaLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        Node x = Node::parameter(random_matrix(4 + trial, 3, rng));
        const Matrix t = random_matrix(4 + trial, 6, rng);
        auto r = check_gradients([&] { return sim::cka_loss(x, t).loss; }, {x});
        EXPECT_LT(r.max_rel_error, 1e-5);
    }
}

TEST(CkaLoss, InjectedFaultIsVisibleToFiniteDifferences) {
    std::mt19937_64 rng(18);
    Node x = Node::parameter(random_matrix(5, 3, rng));
    const Matrix t = random_matrix(5, 4, rng);
    sim::testing::ScopedCkaGradientFault fault;
    auto r = check_gradients([&] { return sim::cka_loss(x, t).loss; }, {x});
    EXPECT_GT(r.max_rel_error, 0.1);
}
