#include "mipic/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_set>

#include "mipic/errors.hpp"

namespace mipic {

using detail::NodeImpl;

Node Node::constant(Matrix value) {
    auto impl = std::make_shared<NodeImpl>();
    impl->grad = Matrix(value.rows(), value.cols());
    impl->value = std::move(value);
    return Node(std::move(impl));
}

Node Node::parameter(Matrix value) {
    Node n = constant(std::move(value));
    n.impl_->requires_grad = true;
    return n;
}

Matrix& Node::mutable_value() {
    if (!impl_->leaf) throw ContractError("mutable_value() on a non-leaf node");
    return impl_->value;
}

namespace {

using BackwardFn = std::function<void(NodeImpl&)>;

Node make_node(Matrix value, std::vector<Node> parents, BackwardFn fn) {
    auto impl = std::make_shared<NodeImpl>();
    impl->grad = Matrix(value.rows(), value.cols());
    impl->value = std::move(value);
    const bool needs = std::any_of(parents.begin(), parents.end(), [](const Node& p) { return p.requires_grad(); });
    if (needs) {
        impl->requires_grad = true;
        impl->leaf = false;
        impl->parents.reserve(parents.size());
        for (auto& p : parents) impl->parents.push_back(p.impl());
        impl->backward_fn = std::move(fn);
    }
    return Node(std::move(impl));
}

bool wants(const NodeImpl& self, std::size_t i) { return self.parents[i]->requires_grad; }

void require_same(const Node& a, const Node& b, const char* op) {
    if (!a.value().same_shape(b.value())) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_str() + " vs " +
                             b.value().shape_str());
    }
}

void require_row(const Node& a, const Node& row, const char* op) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw DimensionError(std::string(op) + ": expected row vector " + shape_str(1, a.cols()) + ", got " +
                             row.value().shape_str());
    }
}

}  // namespace

namespace detail {
Node make_op(Matrix value, std::vector<Node> parents, std::function<void(NodeImpl&)> fn) {
    return make_node(std::move(value), std::move(parents), std::move(fn));
}

void accumulate(NodeImpl& target, const Matrix& g) {
    if (!target.requires_grad) return;
    la::axpy(1.0, g, target.grad);
}
}  // namespace detail

using detail::accumulate;

void backward(const Node& loss) {
    if (!loss) throw ContractError("backward() on an empty node");
    if (loss.rows() != 1 || loss.cols() != 1) {
        throw ContractError("backward() requires a scalar (1x1) loss, got " + loss.value().shape_str());
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (parents before children).
    std::vector<NodeImpl*> order;
    std::unordered_set<NodeImpl*> visited;
    std::vector<std::pair<NodeImpl*, std::size_t>> stack;
    stack.emplace_back(loss.impl().get(), 0);
    visited.insert(loss.impl().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodeImpl* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (NodeImpl* n : order) {
        if (!n->leaf) n->grad.fill(0.0);
    }
    loss.impl()->grad(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

Node matmul(const Node& a, const Node& b) {
    return make_node(la::matmul(a.value(), b.value()), {a, b}, [](NodeImpl& self) {
        const auto& pa = *self.parents[0];
        const auto& pb = *self.parents[1];
        if (wants(self, 0)) accumulate(*self.parents[0], la::matmul_nt(self.grad, pb.value));
        if (wants(self, 1)) accumulate(*self.parents[1], la::matmul_tn(pa.value, self.grad));
    });
}

Node add(const Node& a, const Node& b) {
    require_same(a, b, "add");
    return make_node(la::add(a.value(), b.value()), {a, b}, [](NodeImpl& self) {
        accumulate(*self.parents[0], self.grad);
        accumulate(*self.parents[1], self.grad);
    });
}

Node sub(const Node& a, const Node& b) {
    require_same(a, b, "sub");
    return make_node(la::sub(a.value(), b.value()), {a, b}, [](NodeImpl& self) {
        accumulate(*self.parents[0], self.grad);
        if (wants(self, 1)) la::axpy(-1.0, self.grad, self.parents[1]->grad);
    });
}

Node scale(const Node& a, double s) {
    return make_node(la::scale(a.value(), s), {a},
                     [s](NodeImpl& self) { la::axpy(s, self.grad, self.parents[0]->grad); });
}

Node hadamard(const Node& a, const Node& b) {
    require_same(a, b, "hadamard");
    return make_node(la::hadamard(a.value(), b.value()), {a, b}, [](NodeImpl& self) {
        if (wants(self, 0)) accumulate(*self.parents[0], la::hadamard(self.grad, self.parents[1]->value));
        if (wants(self, 1)) accumulate(*self.parents[1], la::hadamard(self.grad, self.parents[0]->value));
    });
}

Node transpose(const Node& a) {
    return make_node(la::transpose(a.value()), {a},
                     [](NodeImpl& self) { accumulate(*self.parents[0], la::transpose(self.grad)); });
}

Node add_row(const Node& a, const Node& row) {
    require_row(a, row, "add_row");
    Matrix out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += row.value()(0, c);
    }
    return make_node(std::move(out), {a, row}, [](NodeImpl& self) {
        accumulate(*self.parents[0], self.grad);
        if (wants(self, 1)) {
            Matrix& g = self.parents[1]->grad;
            for (std::size_t r = 0; r < self.grad.rows(); ++r) {
                for (std::size_t c = 0; c < self.grad.cols(); ++c) g(0, c) += self.grad(r, c);
            }
        }
    });
}

Node mul_row(const Node& a, const Node& row) {
    require_row(a, row, "mul_row");
    Matrix out = a.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= row.value()(0, c);
    }
    return make_node(std::move(out), {a, row}, [](NodeImpl& self) {
        const Matrix& av = self.parents[0]->value;
        const Matrix& rv = self.parents[1]->value;
        if (wants(self, 0)) {
            Matrix& g = self.parents[0]->grad;
            for (std::size_t r = 0; r < g.rows(); ++r) {
                for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad(r, c) * rv(0, c);
            }
        }
        if (wants(self, 1)) {
            Matrix& g = self.parents[1]->grad;
            for (std::size_t r = 0; r < av.rows(); ++r) {
                for (std::size_t c = 0; c < av.cols(); ++c) g(0, c) += self.grad(r, c) * av(r, c);
            }
        }
    });
}

Node add_n(std::span<const Node> terms) {
    if (terms.empty()) throw ContractError("add_n: no terms");
    Matrix out = terms[0].value();
    for (std::size_t i = 1; i < terms.size(); ++i) {
        require_same(terms[0], terms[i], "add_n");
        la::axpy(1.0, terms[i].value(), out);
    }
    return make_node(std::move(out), std::vector<Node>(terms.begin(), terms.end()), [](NodeImpl& self) {
        for (auto& p : self.parents) accumulate(*p, self.grad);
    });
}

Node sum(const Node& a) {
    return make_node(Matrix::scalar(la::sum(a.value())), {a}, [](NodeImpl& self) {
        const double g = self.grad(0, 0);
        for (double& v : self.parents[0]->grad.data()) v += g;
    });
}

Node mean(const Node& a) {
    const double n = static_cast<double>(a.value().size());
    if (n == 0) throw DegenerateError("mean of an empty matrix");
    return make_node(Matrix::scalar(la::sum(a.value()) / n), {a}, [n](NodeImpl& self) {
        const double g = self.grad(0, 0) / n;
        for (double& v : self.parents[0]->grad.data()) v += g;
    });
}

Node col_mean(const Node& a) {
    if (a.rows() == 0) throw DegenerateError("col_mean of a matrix with no rows");
    return make_node(la::col_mean(a.value()), {a}, [](NodeImpl& self) {
        Matrix& g = self.parents[0]->grad;
        const double inv = 1.0 / static_cast<double>(g.rows());
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad(0, c) * inv;
        }
    });
}

Node row_mean(const Node& a) {
    if (a.cols() == 0) throw DegenerateError("row_mean of a matrix with no columns");
    Matrix out(a.rows(), 1);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (double v : a.value().row(r)) s += v;
        out(r, 0) = s / static_cast<double>(a.cols());
    }
    return make_node(std::move(out), {a}, [](NodeImpl& self) {
        Matrix& g = self.parents[0]->grad;
        const double inv = 1.0 / static_cast<double>(g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad(r, 0) * inv;
        }
    });
}

Node frobenius_sq(const Node& a) {
    return make_node(Matrix::scalar(la::frobenius_sq(a.value())), {a}, [](NodeImpl& self) {
        la::axpy(2.0 * self.grad(0, 0), self.parents[0]->value, self.parents[0]->grad);
    });
}

Node log(const Node& a) {
    Matrix out = a.value();
    for (double& v : out.data()) {
        if (!(v > 0.0)) throw DegenerateError("log of non-positive value");
        v = std::log(v);
    }
    return make_node(std::move(out), {a}, [](NodeImpl& self) {
        const auto x = self.parents[0]->value.data();
        auto g = self.parents[0]->grad.data();
        const auto go = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] / x[i];
    });
}

Node exp(const Node& a) {
    Matrix out = a.value();
    for (double& v : out.data()) v = std::exp(v);
    if (!out.all_finite()) throw NumericalError("exp overflow");
    return make_node(std::move(out), {a}, [](NodeImpl& self) {
        const auto y = self.value.data();
        auto g = self.parents[0]->grad.data();
        const auto go = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * y[i];
    });
}

Node tanh(const Node& a) {
    Matrix out = a.value();
    for (double& v : out.data()) v = std::tanh(v);
    return make_node(std::move(out), {a}, [](NodeImpl& self) {
        const auto y = self.value.data();
        auto g = self.parents[0]->grad.data();
        const auto go = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * (1.0 - y[i] * y[i]);
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Node gelu(const Node& a) {
    Matrix out = a.value();
    for (double& v : out.data()) {
        const double x = v;
        v = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    }
    return make_node(std::move(out), {a}, [](NodeImpl& self) {
        const auto xs = self.parents[0]->value.data();
        auto g = self.parents[0]->grad.data();
        const auto go = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = xs[i];
            const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
            const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            g[i] += go[i] * d;
        }
    });
}

Node l2_normalize_rows(const Node& a) {
    const Matrix& x = a.value();
    Matrix out = x;
    std::vector<double> norms(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const double n = std::sqrt(la::dot(x.row(r), x.row(r)));
        if (n < 1e-12) throw DegenerateError("cosine of zero-norm vector (row " + std::to_string(r) + ")");
        norms[r] = n;
        for (double& v : out.row(r)) v /= n;
    }
    return make_node(std::move(out), {a}, [norms = std::move(norms)](NodeImpl& self) {
        const Matrix& y = self.value;
        Matrix& g = self.parents[0]->grad;
        for (std::size_t r = 0; r < y.rows(); ++r) {
            const double gy = la::dot(self.grad.row(r), y.row(r));
            for (std::size_t c = 0; c < y.cols(); ++c) g(r, c) += (self.grad(r, c) - y(r, c) * gy) / norms[r];
        }
    });
}

Node layer_norm(const Node& x, const Node& gain, const Node& bias, double eps) {
    require_row(x, gain, "layer_norm gain");
    require_row(x, bias, "layer_norm bias");
    const Matrix& xv = x.value();
    const std::size_t n = xv.rows(), d = xv.cols();
    Matrix xhat(n, d);
    std::vector<double> inv_std(n);
    for (std::size_t r = 0; r < n; ++r) {
        double mu = 0.0;
        for (double v : xv.row(r)) mu += v;
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (double v : xv.row(r)) var += (v - mu) * (v - mu);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) xhat(r, c) = (xv(r, c) - mu) * inv_std[r];
    }
    Matrix out(n, d);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) out(r, c) = xhat(r, c) * gain.value()(0, c) + bias.value()(0, c);
    }
    return make_node(std::move(out), {x, gain, bias},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](NodeImpl& self) {
                         const std::size_t n = xhat.rows(), d = xhat.cols();
                         const Matrix& gam = self.parents[1]->value;
                         if (wants(self, 0)) {
                             Matrix& gx = self.parents[0]->grad;
                             std::vector<double> dxhat(d);
                             for (std::size_t r = 0; r < n; ++r) {
                                 double m1 = 0.0, m2 = 0.0;
                                 for (std::size_t c = 0; c < d; ++c) {
                                     dxhat[c] = self.grad(r, c) * gam(0, c);
                                     m1 += dxhat[c];
                                     m2 += dxhat[c] * xhat(r, c);
                                 }
                                 m1 /= static_cast<double>(d);
                                 m2 /= static_cast<double>(d);
                                 for (std::size_t c = 0; c < d; ++c) {
                                     gx(r, c) += inv_std[r] * (dxhat[c] - m1 - xhat(r, c) * m2);
                                 }
                             }
                         }
                         if (wants(self, 1)) {
                             Matrix& gg = self.parents[1]->grad;
                             for (std::size_t r = 0; r < n; ++r) {
                                 for (std::size_t c = 0; c < d; ++c) gg(0, c) += self.grad(r, c) * xhat(r, c);
                             }
                         }
                         if (wants(self, 2)) {
                             Matrix& gb = self.parents[2]->grad;
                             for (std::size_t r = 0; r < n; ++r) {
                                 for (std::size_t c = 0; c < d; ++c) gb(0, c) += self.grad(r, c);
                             }
                         }
                     });
}

Node softmax_rows(const Node& x, double temperature, ColumnMask allowed) {
    if (!(temperature > 0.0)) throw ContractError("softmax_rows: temperature must be positive");
    const Matrix& xv = x.value();
    if (!allowed.empty() && allowed.size() != xv.cols()) {
        throw DimensionError("softmax_rows: mask length " + std::to_string(allowed.size()) + " vs " +
                             std::to_string(xv.cols()) + " columns");
    }
    auto is_allowed = [&](std::size_t c) { return allowed.empty() || allowed[c] != 0; };
    Matrix out(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        std::size_t live = 0;
        for (std::size_t c = 0; c < xv.cols(); ++c) {
            if (!is_allowed(c)) continue;
            ++live;
            // NaN must survive the max so it reaches the loss instead of vanishing here.
            const double v = xv(r, c) / temperature;
            mx = std::isnan(v) || std::isnan(mx) ? std::numeric_limits<double>::quiet_NaN() : std::max(mx, v);
        }
        if (live == 0) throw DegenerateError("softmax_rows: every position of row " + std::to_string(r) + " is masked");
        double z = 0.0;
        for (std::size_t c = 0; c < xv.cols(); ++c) {
            if (!is_allowed(c)) continue;
            out(r, c) = std::exp(xv(r, c) / temperature - mx);
            z += out(r, c);
        }
        for (double& v : out.row(r)) v /= z;
    }
    return make_node(std::move(out), {x}, [temperature](NodeImpl& self) {
        const Matrix& y = self.value;
        Matrix& g = self.parents[0]->grad;
        for (std::size_t r = 0; r < y.rows(); ++r) {
            const double gy = la::dot(self.grad.row(r), y.row(r));
            for (std::size_t c = 0; c < y.cols(); ++c) {
                g(r, c) += y(r, c) * (self.grad(r, c) - gy) / temperature;
            }
        }
    });
}

Node log_softmax_rows(const Node& x, double temperature) {
    if (!(temperature > 0.0)) throw ContractError("log_softmax_rows: temperature must be positive");
    const Matrix& xv = x.value();
    Matrix out(xv.rows(), xv.cols());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (double v : xv.row(r)) mx = std::max(mx, v / temperature);
        double z = 0.0;
        for (double v : xv.row(r)) z += std::exp(v / temperature - mx);
        const double lse = mx + std::log(z);
        for (std::size_t c = 0; c < xv.cols(); ++c) out(r, c) = xv(r, c) / temperature - lse;
    }
    return make_node(std::move(out), {x}, [temperature](NodeImpl& self) {
        const Matrix& y = self.value;
        Matrix& g = self.parents[0]->grad;
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double gs = 0.0;
            for (double v : self.grad.row(r)) gs += v;
            for (std::size_t c = 0; c < y.cols(); ++c) {
                g(r, c) += (self.grad(r, c) - std::exp(y(r, c)) * gs) / temperature;
            }
        }
    });
}

Node concat_rows(std::span<const Node> parts) {
    if (parts.empty()) throw ContractError("concat_rows: no parts");
    const std::size_t cols = parts[0].cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) {
            throw DimensionError("concat_rows: column mismatch " + parts[0].value().shape_str() + " vs " +
                                 p.value().shape_str());
        }
        rows += p.rows();
    }
    Matrix out(rows, cols);
    std::size_t at = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + at * cols);
        at += p.rows();
    }
    return make_node(std::move(out), std::vector<Node>(parts.begin(), parts.end()), [](NodeImpl& self) {
        std::size_t at = 0;
        const std::size_t cols = self.grad.cols();
        for (auto& p : self.parents) {
            const std::size_t n = p->value.rows() * cols;
            if (p->requires_grad) {
                auto dst = p->grad.data();
                const auto src = self.grad.data().subspan(at, n);
                for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
            }
            at += n;
        }
    });
}

Node concat_cols(std::span<const Node> parts) {
    if (parts.empty()) throw ContractError("concat_cols: no parts");
    const std::size_t rows = parts[0].rows();
    std::size_t cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) {
            throw DimensionError("concat_cols: row mismatch " + parts[0].value().shape_str() + " vs " +
                                 p.value().shape_str());
        }
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::size_t at = 0;
    for (const auto& p : parts) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < p.cols(); ++c) out(r, at + c) = p.value()(r, c);
        }
        at += p.cols();
    }
    return make_node(std::move(out), std::vector<Node>(parts.begin(), parts.end()), [](NodeImpl& self) {
        std::size_t at = 0;
        for (auto& p : self.parents) {
            const std::size_t w = p->value.cols();
            if (p->requires_grad) {
                for (std::size_t r = 0; r < self.grad.rows(); ++r) {
                    for (std::size_t c = 0; c < w; ++c) p->grad(r, c) += self.grad(r, at + c);
                }
            }
            at += w;
        }
    });
}

Node slice_cols(const Node& a, std::size_t begin, std::size_t count) {
    return make_node(la::slice_cols(a.value(), begin, count), {a}, [begin](NodeImpl& self) {
        Matrix& g = self.parents[0]->grad;
        for (std::size_t r = 0; r < self.grad.rows(); ++r) {
            for (std::size_t c = 0; c < self.grad.cols(); ++c) g(r, begin + c) += self.grad(r, c);
        }
    });
}

Node slice_rows(const Node& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.rows()) {
        throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                             ") out of range for " + a.value().shape_str());
    }
    const std::size_t cols = a.cols();
    Matrix out(count, cols);
    const auto src = a.value().data().subspan(begin * cols, count * cols);
    std::copy(src.begin(), src.end(), out.data().begin());
    return make_node(std::move(out), {a}, [begin](NodeImpl& self) {
        const std::size_t cols = self.grad.cols();
        auto dst = self.parents[0]->grad.data().subspan(begin * cols, self.grad.size());
        const auto g = self.grad.data();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    });
}

Node gather_rows(const Node& a, std::span<const std::size_t> rows) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    Matrix out = la::gather_rows(a.value(), idx);
    return make_node(std::move(out), {a}, [idx = std::move(idx)](NodeImpl& self) {
        Matrix& g = self.parents[0]->grad;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto dst = g.row(idx[i]);
            const auto src = self.grad.row(i);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
    });
}

Node dropout(const Node& a, double p, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw ContractError("dropout: probability must lie in [0, 1)");
    if (p == 0.0) return a;
    const double keep_scale = 1.0 / (1.0 - p);
    Matrix mask(a.rows(), a.cols());
    for (double& m : mask.data()) m = uniform01(rng) < p ? 0.0 : keep_scale;
    Matrix out = la::hadamard(a.value(), mask);
    return make_node(std::move(out), {a}, [mask = std::move(mask)](NodeImpl& self) {
        accumulate(*self.parents[0], la::hadamard(self.grad, mask));
    });
}

Node detach(const Node& a) { return Node::constant(a.value()); }

}  // namespace mipic
