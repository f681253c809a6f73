#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "posobs/error.hpp"

namespace posobs {

using Vector = std::vector<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/**
 * Dense real matrix, row-major.
 *
 * Sized at runtime; every system, gain and closed-loop block in the library
 * is one of these. Entries are kept finite: constructors and arithmetic
 * throw NumericalFailure when a NaN or Inf would be produced.
 */
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        require_finite();
    }

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                                 " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
        }
        require_finite();
    }

    /// Nested row initializer: Matrix{{1, 2}, {3, 4}}.
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) {
                throw DimensionError("Matrix: ragged initializer rows");
            }
            data_.insert(data_.end(), r.begin(), r.end());
        }
        require_finite();
    }

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    static Matrix diag(std::span<const double> d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) {
            m(i, i) = d[i];
        }
        return m;
    }

    static Matrix column(std::span<const double> v) { return Matrix(v.size(), 1, Vector(v.begin(), v.end())); }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    Vector col(std::size_t j) const {
        Vector out(rows_);
        for (std::size_t i = 0; i < rows_; ++i) {
            out[i] = (*this)(i, j);
        }
        return out;
    }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) {
                t(j, i) = (*this)(i, j);
            }
        }
        return t;
    }

    Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
        if (r0 + nr > rows_ || c0 + nc > cols_) {
            throw DimensionError("Matrix::block out of range");
        }
        Matrix b(nr, nc);
        for (std::size_t i = 0; i < nr; ++i) {
            for (std::size_t j = 0; j < nc; ++j) {
                b(i, j) = (*this)(r0 + i, c0 + j);
            }
        }
        return b;
    }

    void set_block(std::size_t r0, std::size_t c0, const Matrix& b) {
        if (r0 + b.rows() > rows_ || c0 + b.cols() > cols_) {
            throw DimensionError("Matrix::set_block out of range");
        }
        for (std::size_t i = 0; i < b.rows(); ++i) {
            for (std::size_t j = 0; j < b.cols(); ++j) {
                (*this)(r0 + i, c0 + j) = b(i, j);
            }
        }
    }

    /// Smallest entry; +inf for an empty matrix.
    double min_entry() const noexcept {
        double m = std::numeric_limits<double>::infinity();
        for (double v : data_) {
            m = std::min(m, v);
        }
        return m;
    }

    double max_abs() const noexcept {
        double m = 0.0;
        for (double v : data_) {
            m = std::max(m, std::abs(v));
        }
        return m;
    }

    /// Row sums, i.e. M * 1.
    Vector row_sums() const {
        Vector out(rows_, 0.0);
        for (std::size_t i = 0; i < rows_; ++i) {
            for (std::size_t j = 0; j < cols_; ++j) {
                out[i] += (*this)(i, j);
            }
        }
        return out;
    }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "+");
        for (std::size_t k = 0; k < data_.size(); ++k) {
            data_[k] += o.data_[k];
        }
        require_finite();
        return *this;
    }

    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o, "-");
        for (std::size_t k = 0; k < data_.size(); ++k) {
            data_[k] -= o.data_[k];
        }
        require_finite();
        return *this;
    }

    Matrix& operator*=(double s) {
        for (double& v : data_) {
            v *= s;
        }
        require_finite();
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }
    friend Matrix operator-(Matrix a) { return a *= -1.0; }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_) {
            throw DimensionError("Matrix product: " + a.shape() + " * " + b.shape());
        }
        Matrix c(a.rows_, b.cols_);
        for (std::size_t i = 0; i < a.rows_; ++i) {
            for (std::size_t k = 0; k < a.cols_; ++k) {
                const double aik = a(i, k);
                if (aik == 0.0) {
                    continue;
                }
                for (std::size_t j = 0; j < b.cols_; ++j) {
                    c(i, j) += aik * b(k, j);
                }
            }
        }
        c.require_finite();
        return c;
    }

    friend Vector operator*(const Matrix& a, std::span<const double> x) {
        if (a.cols_ != x.size()) {
            throw DimensionError("Matrix-vector product: " + a.shape() + " * vector of length " +
                                 std::to_string(x.size()));
        }
        Vector y(a.rows_, 0.0);
        for (std::size_t i = 0; i < a.rows_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < a.cols_; ++j) {
                s += a(i, j) * x[j];
            }
            y[i] = s;
        }
        return y;
    }

    friend Vector operator*(const Matrix& a, const Vector& x) { return a * std::span<const double>(x); }

    friend bool operator==(const Matrix&, const Matrix&) = default;

    std::string shape() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

private:
    void require_same_shape(const Matrix& o, const char* op) const {
        if (rows_ != o.rows_ || cols_ != o.cols_) {
            throw DimensionError(std::string("Matrix ") + op + ": " + shape() + " vs " + o.shape());
        }
    }

    void require_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) {
                throw NumericalFailure("Matrix: non-finite entry produced");
            }
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Vector ones(std::size_t n) { return Vector(n, 1.0); }

inline Vector add(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("vector add: length mismatch");
    }
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] + b[i];
    }
    return out;
}

inline Vector sub(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("vector sub: length mismatch");
    }
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return out;
}

inline double norm_inf(std::span<const double> v) noexcept {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

inline constexpr double kDefaultNonnegTol = 1e-9;

/// Result of an elementwise nonnegativity test.
struct NonnegCheck {
    bool ok = true;
    double margin = 0.0; ///< minimum entry (0 for an empty matrix)

    explicit operator bool() const noexcept { return ok; }
};

/// True iff every entry is >= -tol; the margin is the minimum entry.
inline NonnegCheck is_nonneg(const Matrix& m, double tol = kDefaultNonnegTol) {
    if (tol < 0.0) {
        throw Error("is_nonneg: tolerance must be nonnegative");
    }
    const double margin = m.empty() ? 0.0 : m.min_entry();
    return {margin >= -tol, margin};
}

inline NonnegCheck is_nonneg(std::span<const double> v, double tol = kDefaultNonnegTol) {
    return is_nonneg(Matrix::column(v), tol);
}

} // namespace posobs
