#pragma once

// Brute-force reference for small linear programs.

#include <algorithm>
#include <cmath>

#include "support.hpp"

namespace testsupport {

struct VertexOptimum {
    bool feasible = false;
    double value = -INFINITY;
};

/**
 * Brute-force optimum of max c^T x, A x <= b, x >= 0 over a bounded polytope:
 * every choice of n active constraints among the rows and the bounds.
 */
inline VertexOptimum vertex_enumeration(const Matrix& A, const Vector& b, const Vector& c) {
    const std::size_t n = A.cols(), m = A.rows(), total = m + n;
    VertexOptimum best;
    std::vector<int> pick(total, 0);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(n), 1);
    std::sort(pick.begin(), pick.end());
    do {
        Matrix M(n, n);
        Vector r(n);
        std::size_t k = 0;
        for (std::size_t idx = 0; idx < total; ++idx) {
            if (!pick[idx]) continue;
            if (idx < m) {
                for (std::size_t j = 0; j < n; ++j) M(k, j) = A(idx, j);
                r[k] = b[idx];
            } else {
                M(k, idx - m) = 1.0;
                r[k] = 0.0;
            }
            ++k;
        }
        // Skip singular selections (determinant test via elimination pivots).
        Matrix a = M;
        bool singular = false;
        for (std::size_t col = 0; col < n && !singular; ++col) {
            std::size_t p = col;
            for (std::size_t i = col + 1; i < n; ++i)
                if (std::abs(a(i, col)) > std::abs(a(p, col))) p = i;
            if (std::abs(a(p, col)) < 1e-10) singular = true;
            for (std::size_t j = 0; j < n; ++j) std::swap(a(col, j), a(p, j));
            for (std::size_t i = col + 1; i < n && !singular; ++i) {
                const double f = a(i, col) / a(col, col);
                for (std::size_t j = col; j < n; ++j) a(i, j) -= f * a(col, j);
            }
        }
        if (singular) continue;
        const Vector x = testsupport::inverse(M) * r;
        bool ok = true;
        for (std::size_t j = 0; j < n; ++j) ok = ok && x[j] >= -1e-9;
        const Vector ax = A * x;
        for (std::size_t i = 0; i < m; ++i) ok = ok && ax[i] <= b[i] + 1e-9;
        if (!ok) continue;
        double v = 0.0;
        for (std::size_t j = 0; j < n; ++j) v += c[j] * x[j];
        best.feasible = true;
        best.value = std::max(best.value, v);
    } while (std::next_permutation(pick.begin(), pick.end()));
    return best;
}

struct RandomLp {
    Matrix A;
    Vector b, c;
};

/// Random bounded problem; the last row caps the sum of the variables.
inline RandomLp random_lp(Gen& g) {
    const std::size_t n = static_cast<std::size_t>(g.integer(1, 4));
    const std::size_t m = static_cast<std::size_t>(g.integer(1, 7));
    RandomLp r{g.matrix(m + 1, n, -1.0, 1.0), g.vector(m + 1, -0.5, 2.0), g.vector(n, -1.0, 1.0)};
    for (std::size_t j = 0; j < n; ++j) r.A(m, j) = g.uniform(0.5, 1.0);
    r.b[m] = g.uniform(1.0, 5.0);
    return r;
}

} // namespace testsupport
