#pragma once

// Generators and independent oracles shared by the test suites. Nothing here
// calls into the code under test beyond the Matrix container.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <vector>

#include "posobs/matrix.hpp"
#include "posobs/system.hpp"

namespace testsupport {

using posobs::Matrix;
using posobs::Vector;
using cplx = std::complex<double>;

class Gen {
public:
    explicit Gen(std::uint64_t seed) : eng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

    Matrix matrix(std::size_t r, std::size_t c, double lo, double hi) {
        Matrix m(r, c);
        for (double& v : m.data()) {
            v = uniform(lo, hi);
        }
        return m;
    }

    /// Nonnegative with roughly the given fraction of exact zeros.
    Matrix sparse_nonneg(std::size_t r, std::size_t c, double hi, double zero_fraction = 0.3) {
        Matrix m(r, c);
        for (double& v : m.data()) {
            v = coin(zero_fraction) ? 0.0 : uniform(0.0, hi);
        }
        return m;
    }

    Vector vector(std::size_t n, double lo, double hi) {
        Vector v(n);
        for (double& x : v) {
            x = uniform(lo, hi);
        }
        return v;
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

/// Gauss-Jordan inverse with partial pivoting; test-side oracle.
inline Matrix inverse(const Matrix& m) {
    const std::size_t n = m.rows();
    Matrix a = m, inv = Matrix::identity(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(a(i, k)) > std::abs(a(p, k))) p = i;
        }
        for (std::size_t j = 0; j < n; ++j) {
            std::swap(a(k, j), a(p, j));
            std::swap(inv(k, j), inv(p, j));
        }
        const double d = a(k, k);
        for (std::size_t j = 0; j < n; ++j) {
            a(k, j) /= d;
            inv(k, j) /= d;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (i == k) continue;
            const double f = a(i, k);
            for (std::size_t j = 0; j < n; ++j) {
                a(i, j) -= f * a(k, j);
                inv(i, j) -= f * inv(k, j);
            }
        }
    }
    return inv;
}

/**
 * A real matrix with a prescribed spectrum: block diagonal (1x1 real blocks
 * and 2x2 rotation-scaling blocks for conjugate pairs), conjugated by a
 * well-conditioned random similarity.
 */
struct KnownSpectrum {
    Matrix M;
    std::vector<cplx> eigenvalues;
};

inline KnownSpectrum known_spectrum(Gen& g, std::size_t n) {
    std::vector<cplx> eig;
    Matrix D(n, n);
    auto far_enough = [&](cplx z) {
        for (const auto& e : eig) {
            if (std::abs(e - z) < 0.05) return false;
        }
        return true;
    };
    std::size_t k = 0;
    while (k < n) {
        if (k + 1 < n && g.coin(0.4)) {
            const double re = g.uniform(-1.0, 1.0), im = g.uniform(0.1, 1.0);
            if (!far_enough({re, im})) continue;
            D(k, k) = re;
            D(k, k + 1) = im;
            D(k + 1, k) = -im;
            D(k + 1, k + 1) = re;
            eig.emplace_back(re, im);
            eig.emplace_back(re, -im);
            k += 2;
        } else {
            const double re = g.uniform(-1.5, 1.5);
            if (!far_enough({re, 0.0})) continue;
            D(k, k) = re;
            eig.emplace_back(re, 0.0);
            k += 1;
        }
    }
    Matrix S = Matrix::identity(n) + g.matrix(n, n, -0.3, 0.3) * (1.0 / std::sqrt(static_cast<double>(n)));
    return {S * D * inverse(S), eig};
}

/// Largest distance in an optimal-ish greedy matching of two multisets.
inline double spectrum_distance(std::vector<cplx> a, std::vector<cplx> b) {
    if (a.size() != b.size()) return INFINITY;
    double worst = 0.0;
    for (const auto& x : a) {
        auto it = std::min_element(b.begin(), b.end(),
                                   [&](const cplx& p, const cplx& q) { return std::abs(p - x) < std::abs(q - x); });
        worst = std::max(worst, std::abs(*it - x));
        b.erase(it);
    }
    return worst;
}

/// Roots of z^2 - tr z + det for a 2x2 block.
inline std::vector<cplx> eig2(double a, double b, double c, double d) {
    const double tr = a + d, det = a * d - b * c;
    const cplx disc = std::sqrt(cplx(tr * tr - 4.0 * det, 0.0));
    return {(tr + disc) / 2.0, (tr - disc) / 2.0};
}

/// det(z I - M) by complex Gaussian elimination.
inline cplx char_poly_at(const Matrix& m, cplx z) {
    const std::size_t n = m.rows();
    std::vector<cplx> a(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a[i * n + j] = (i == j ? z : 0.0) - m(i, j);
        }
    }
    cplx det = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(a[i * n + k]) > std::abs(a[p * n + k])) p = i;
        }
        if (a[p * n + k] == 0.0) return 0.0;
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
            det = -det;
        }
        det *= a[k * n + k];
        for (std::size_t i = k + 1; i < n; ++i) {
            const cplx f = a[i * n + k] / a[k * n + k];
            for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
        }
    }
    return det;
}

/// Power iteration on M + I (shift keeps the Perron root dominant for M >= 0).
inline double perron_root(const Matrix& m, int iters = 20000) {
    const std::size_t n = m.rows();
    Vector v(n, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        Vector w = m * v;
        for (std::size_t i = 0; i < n; ++i) w[i] += v[i];
        const double norm = posobs::norm_inf(w);
        if (norm == 0.0) return 0.0;
        for (double& x : w) x /= norm;
        lambda = norm - 1.0;
        v = w;
    }
    return lambda;
}

/// Strictly diagonally dominant, so comfortably nonsingular.
inline Matrix diag_dominant(Gen& g, std::size_t n) {
    Matrix m = g.matrix(n, n, -1.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = (g.coin() ? 1.0 : -1.0) * (static_cast<double>(n) + g.uniform(0.5, 2.0));
    }
    return m;
}

} // namespace testsupport
