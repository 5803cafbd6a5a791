#pragma once

// Linear HSIC and linear CKA between representation matrices that share a row
// (token) axis but may differ in feature width.
//
// Centering is over rows: every feature column of x and y is shifted to zero
// mean across the k tokens. With that convention
//   HSIC(x, y) = ‖x̃ᵀ ỹ‖_F²
// equals the Gram-matrix form tr(K H L H) with K = x xᵀ, L = y yᵀ and
// H = I - 11ᵀ/k. The (k-1)⁻² normalizer is omitted; it cancels in CKA.

#include "mipic/autograd.hpp"
#include "mipic/matrix.hpp"

namespace mipic::sim {

/// Self-HSIC below this is treated as a degenerate (structureless) input.
inline constexpr double kDegenerateHsic = 1e-12;

struct CenteredPair {
    Matrix x_centered;
    Matrix y_centered;
};

/// Column-centers x over its rows. Requires at least two rows.
Matrix center_features(const Matrix& x);
CenteredPair center_pair(const Matrix& x, const Matrix& y);

double hsic_linear(const Matrix& x, const Matrix& y);

struct CkaValue {
    double value = 0.0;
    bool degenerate = false;
};

/// hsic(x,y) / sqrt(hsic(x,x) hsic(y,y)); 0 with degenerate=true when either self-HSIC is < 1e-12.
CkaValue cka_linear(const Matrix& x, const Matrix& y);

struct CkaLoss {
    Node loss;  // 1x1, value 1 - CKA
    bool degenerate = false;
};

/// 1 - CKA(x, teacher), differentiable in x only. A degenerate pair yields a
/// constant loss of 1 with no gradient.
CkaLoss cka_loss(const Node& x, const Matrix& teacher);

namespace testing {
/// While alive, cka_loss() emits a deliberately wrong gradient (scaled by 1.5).
/// Exists so gradient checkers can be shown to catch a broken backward pass.
class ScopedCkaGradientFault {
public:
    ScopedCkaGradientFault();
    ~ScopedCkaGradientFault();
    ScopedCkaGradientFault(const ScopedCkaGradientFault&) = delete;
    ScopedCkaGradientFault& operator=(const ScopedCkaGradientFault&) = delete;

private:
    bool previous_;
};
}  // namespace testing

}  // namespace mipic::sim
