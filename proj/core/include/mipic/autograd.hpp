#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Node is a cheap shared handle onto a graph vertex. Leaves are either
// parameters (requires_grad) or constants. Every op returns a new Node whose
// backward closure accumulates into the parents that require gradients; ops
// whose inputs are all constant produce constants and record no graph.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "mipic/matrix.hpp"

namespace mipic {

namespace detail {
struct NodeImpl {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<NodeImpl>> parents;
    std::function<void(NodeImpl&)> backward_fn;
};
}  // namespace detail

class Node {
public:
    Node() = default;

    static Node constant(Matrix value);
    static Node parameter(Matrix value);

    const Matrix& value() const { return impl_->value; }
    /// Mutable access for optimizers and finite-difference probes. Leaves only.
    Matrix& mutable_value();
    const Matrix& grad() const { return impl_->grad; }
    Matrix& mutable_grad() { return impl_->grad; }

    std::size_t rows() const { return impl_->value.rows(); }
    std::size_t cols() const { return impl_->value.cols(); }
    double item() const { return impl_->value.item(); }

    bool requires_grad() const { return impl_->requires_grad; }
    bool is_leaf() const { return impl_->leaf; }
    void zero_grad() const { impl_->grad.fill(0.0); }

    explicit operator bool() const noexcept { return static_cast<bool>(impl_); }
    bool same_node(const Node& o) const noexcept { return impl_ == o.impl_; }

    const std::shared_ptr<detail::NodeImpl>& impl() const { return impl_; }
    explicit Node(std::shared_ptr<detail::NodeImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<detail::NodeImpl> impl_;
};

namespace detail {
/// Builds an op node; `fn` runs during backward() only if some parent requires grad.
Node make_op(Matrix value, std::vector<Node> parents, std::function<void(NodeImpl&)> fn);
/// grad(target) += g when the target participates in differentiation.
void accumulate(NodeImpl& target, const Matrix& g);
}  // namespace detail

/// Populates grad() of every node reachable from `loss` (1x1). Leaf gradients
/// accumulate across calls; interior gradients are recomputed each call.
void backward(const Node& loss);

/// Boolean column mask for softmax: allowed[j] != 0 means column j participates.
using ColumnMask = std::span<const std::uint8_t>;

Node matmul(const Node& a, const Node& b);
Node add(const Node& a, const Node& b);
Node sub(const Node& a, const Node& b);
Node scale(const Node& a, double s);
Node hadamard(const Node& a, const Node& b);
Node transpose(const Node& a);
/// a + 1·rowᵀ (row is 1 x a.cols()).
Node add_row(const Node& a, const Node& row);
/// a ⊙ (1·rowᵀ).
Node mul_row(const Node& a, const Node& row);
/// Sum of several same-shape nodes.
Node add_n(std::span<const Node> terms);

Node sum(const Node& a);       // 1x1
Node mean(const Node& a);      // 1x1
Node col_mean(const Node& a);  // 1 x cols, mean over rows
Node row_mean(const Node& a);  // rows x 1, mean over columns
Node frobenius_sq(const Node& a);

Node log(const Node& a);
Node exp(const Node& a);
Node tanh(const Node& a);
/// Tanh-approximated GELU.
Node gelu(const Node& a);

/// Row-wise x / ‖x‖. Rows with norm < 1e-12 raise DegenerateError.
Node l2_normalize_rows(const Node& a);
/// Row-wise layer normalization with affine gain/bias (each 1 x cols).
Node layer_norm(const Node& x, const Node& gain, const Node& bias, double eps = 1e-5);

/// Row-wise softmax of x / temperature. Masked columns get probability 0 and no gradient.
Node softmax_rows(const Node& x, double temperature, ColumnMask allowed = {});
Node log_softmax_rows(const Node& x, double temperature);

Node concat_rows(std::span<const Node> parts);
Node concat_cols(std::span<const Node> parts);
Node slice_cols(const Node& a, std::size_t begin, std::size_t count);
/// First `count` columns (prefix truncation).
inline Node prefix_cols(const Node& a, std::size_t count) { return slice_cols(a, 0, count); }
Node slice_rows(const Node& a, std::size_t begin, std::size_t count);
Node gather_rows(const Node& a, std::span<const std::size_t> rows);

/// Inverted dropout: Bernoulli(1-p) keep mask scaled by 1/(1-p). Identity when p == 0.
Node dropout(const Node& a, double p, std::mt19937_64& rng);

/// Constant copy of the value, cut from the graph.
Node detach(const Node& a);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace mipic
