#include "mipic/similarity.hpp"

#include <atomic>
#include <cmath>

#include "mipic/errors.hpp"

namespace mipic::sim {

namespace {

std::atomic<bool> g_cka_fault{false};

void require_rows(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows()) {
        throw DimensionError("CKA/HSIC: row-count mismatch " + x.shape_str() + " vs " + y.shape_str());
    }
    if (x.rows() < 2) throw DegenerateError("CKA/HSIC: need at least two rows, got " + x.shape_str());
}

void require_finite(const Matrix& m) {
    if (!m.all_finite()) throw NumericalError("CKA: non-finite input");
}

}  // namespace

Matrix center_features(const Matrix& x) {
    if (x.rows() < 2) throw DegenerateError("center_features: need at least two rows, got " + x.shape_str());
    return la::center_columns(x);
}

CenteredPair center_pair(const Matrix& x, const Matrix& y) {
    require_rows(x, y);
    return {center_features(x), center_features(y)};
}

double hsic_linear(const Matrix& x, const Matrix& y) {
    require_rows(x, y);
    return la::frobenius_sq(la::matmul_tn(center_features(x), center_features(y)));
}

CkaValue cka_linear(const Matrix& x, const Matrix& y) {
    require_rows(x, y);
    require_finite(x);
    require_finite(y);
    const auto [xc, yc] = center_pair(x, y);
    const double hxx = la::frobenius_sq(la::matmul_tn(xc, xc));
    const double hyy = la::frobenius_sq(la::matmul_tn(yc, yc));
    if (hxx < kDegenerateHsic || hyy < kDegenerateHsic) return {0.0, true};
    const double hxy = la::frobenius_sq(la::matmul_tn(xc, yc));
    return {hxy / std::sqrt(hxx * hyy), false};
}

CkaLoss cka_loss(const Node& x, const Matrix& teacher) {
    require_rows(x.value(), teacher);
    require_finite(x.value());
    require_finite(teacher);
    Matrix a = center_features(x.value());
    Matrix b = center_features(teacher);
    const Matrix gram_a = la::matmul_tn(a, a);
    const double hxx = la::frobenius_sq(gram_a);
    const double hyy = la::frobenius_sq(la::matmul_tn(b, b));
    if (hxx < kDegenerateHsic || hyy < kDegenerateHsic) return {Node::constant(Matrix::scalar(1.0)), true};

    Matrix cross = la::matmul_tn(a, b);  // d_s x d_t
    const double hxy = la::frobenius_sq(cross);
    const double norm = 1.0 / std::sqrt(hxx * hyy);
    const double cka = hxy * norm;
    const double fault = g_cka_fault.load() ? 1.5 : 1.0;

    Node loss = detail::make_op(
        Matrix::scalar(1.0 - cka), {x},
        [a = std::move(a), b = std::move(b), cross = std::move(cross), gram_a, hxx, norm, cka,
         fault](detail::NodeImpl& self) {
            // dCKA/dA = norm · 2 B crossᵀ − (cka / (2 hxx)) · 4 A (AᵀA)
            Matrix d_hxy = la::matmul_nt(b, cross);
            Matrix d_hxx = la::matmul(a, gram_a);
            Matrix grad_a(a.rows(), a.cols());
            const double g = -self.grad(0, 0) * fault;
            auto out = grad_a.data();
            const auto p = d_hxy.data();
            const auto q = d_hxx.data();
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = g * (2.0 * norm * p[i] - 2.0 * cka / hxx * q[i]);
            // A = H x with H the symmetric row-centering projector.
            detail::accumulate(*self.parents[0], la::center_columns(grad_a));
        });
    return {std::move(loss), false};
}

namespace testing {
ScopedCkaGradientFault::ScopedCkaGradientFault() : previous_(g_cka_fault.exchange(true)) {}
ScopedCkaGradientFault::~ScopedCkaGradientFault() { g_cka_fault.store(previous_); }
}  // namespace testing

}  // namespace mipic::sim
