#include "mipic/matrix.hpp"

#include <cmath>
#include <sstream>

#include "mipic/errors.hpp"

namespace mipic {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                             shape_str());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

double Matrix::item() const {
    if (rows_ != 1 || cols_ != 1) throw DimensionError("item() on non-scalar " + shape_str());
    return data_[0];
}

std::string shape_str(std::size_t rows, std::size_t cols) {
    std::ostringstream os;
    os << '(' << rows << 'x' << cols << ')';
    return os.str();
}

std::string Matrix::shape_str() const { return mipic::shape_str(rows_, cols_); }

bool Matrix::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Matrix::fill(double v) {
    for (double& x : data_) x = v;
}

namespace la {

namespace {
void require_same(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}
}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: shape mismatch " + a.shape_str() + " · " + b.shape_str());
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* po = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = po + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            const double* brow = pb + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_tn: shape mismatch " + a.shape_str() + "ᵀ · " + b.shape_str());
    }
    Matrix out(a.cols(), b.cols());
    const std::size_t n = a.rows(), p = a.cols(), m = b.cols();
    for (std::size_t r = 0; r < n; ++r) {
        const double* arow = a.data().data() + r * p;
        const double* brow = b.data().data() + r * m;
        for (std::size_t i = 0; i < p; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = out.data().data() + i * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: shape mismatch " + a.shape_str() + " · " + b.shape_str() + "ᵀ");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same(a, b, "add");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same(a, b, "sub");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same(a, b, "hadamard");
    Matrix out = a;
    auto o = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
    return out;
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
    require_same(x, y, "axpy");
    auto xd = x.data();
    auto yd = y.data();
    for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += alpha * xd[i];
}

double frobenius_sq(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s;
}

double sum(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Matrix col_mean(const Matrix& a) {
    Matrix out(1, a.cols());
    if (a.rows() == 0) return out;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += a(r, c);
    }
    for (double& v : out.data()) v /= static_cast<double>(a.rows());
    return out;
}

Matrix center_columns(const Matrix& a) {
    const Matrix mean = col_mean(a);
    Matrix out = a;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) -= mean(0, c);
    }
    return out;
}

Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count) {
    if (begin + count > a.cols()) {
        throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                             ") out of range for " + a.shape_str());
    }
    Matrix out(a.rows(), count);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < count; ++c) out(r, c) = a(r, begin + c);
    }
    return out;
}

Matrix gather_rows(const Matrix& a, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= a.rows()) {
            throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                                 a.shape_str());
        }
        auto src = a.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix l2_normalize_rows(const Matrix& a) {
    Matrix out = a;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        auto row = out.row(r);
        const double norm = std::sqrt(dot(row, row));
        if (norm < 1e-12) throw DegenerateError("l2_normalize_rows: zero-norm row " + std::to_string(r));
        for (double& v : row) v /= norm;
    }
    return out;
}

}  // namespace la
}  // namespace mipic
