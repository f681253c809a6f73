#pragma once

#include <cmath>
#include <cstddef>
#include <utility>

#include "posobs/error.hpp"
#include "posobs/matrix.hpp"

namespace posobs {

inline constexpr double kSingularPivotTol = 1e-12;

/// Solves M X = B by Gaussian elimination with partial pivoting.
/// A pivot below 1e-12 times its column's largest original magnitude is
/// treated as singular.
inline Matrix solve_linear(const Matrix& m, const Matrix& b) {
    if (!m.is_square()) {
        throw DimensionError("solve_linear: matrix is not square (" + m.shape() + ")");
    }
    if (b.rows() != m.rows()) {
        throw DimensionError("solve_linear: right-hand side " + b.shape() + " does not match " + m.shape());
    }
    const std::size_t n = m.rows();
    const std::size_t k = b.cols();

    Vector col_scale(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            col_scale[j] = std::max(col_scale[j], std::abs(m(i, j)));
        }
    }

    Matrix a = m;
    Matrix x = b;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::abs(a(r, c)) > std::abs(a(piv, c))) {
                piv = r;
            }
        }
        if (col_scale[c] == 0.0 || std::abs(a(piv, c)) < kSingularPivotTol * col_scale[c]) {
            throw SingularMatrixError("solve_linear: numerically singular pivot in column " + std::to_string(c));
        }
        if (piv != c) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a(c, j), a(piv, j));
            }
            for (std::size_t j = 0; j < k; ++j) {
                std::swap(x(c, j), x(piv, j));
            }
        }
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a(r, c) / a(c, c);
            if (f == 0.0) {
                continue;
            }
            a(r, c) = 0.0;
            for (std::size_t j = c + 1; j < n; ++j) {
                a(r, j) -= f * a(c, j);
            }
            for (std::size_t j = 0; j < k; ++j) {
                x(r, j) -= f * x(c, j);
            }
        }
    }
    for (std::size_t c = n; c-- > 0;) {
        for (std::size_t j = 0; j < k; ++j) {
            double s = x(c, j);
            for (std::size_t q = c + 1; q < n; ++q) {
                s -= a(c, q) * x(q, j);
            }
            x(c, j) = s / a(c, c);
        }
    }
    return x;
}

inline Vector solve_linear(const Matrix& m, std::span<const double> b) {
    return solve_linear(m, Matrix::column(b)).col(0);
}

} // namespace posobs
