#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <vector>

#include "posobs/error.hpp"
#include "posobs/matrix.hpp"

namespace posobs {

namespace detail {

using Real = long double;
using Complex = std::complex<Real>;

inline constexpr Real kUnitRoundoff = std::numeric_limits<Real>::epsilon();

/**
 * Characteristic polynomial det(zI - M) by the Faddeev-LeVerrier recursion.
 * Returns monic coefficients in ascending order: c[0] + c[1] z + ... + z^n.
 */
inline std::vector<Real> characteristic_polynomial(const Matrix& m) {
    const std::size_t n = m.rows();
    std::vector<Real> c(n + 1, 0.0L);
    c[n] = 1.0L;

    std::vector<Real> a(n * n);
    for (std::size_t k = 0; k < n * n; ++k) {
        a[k] = m.data()[k];
    }

    // mk holds M_k; the recursion is M_k = A M_{k-1} + c_{n-k+1} I, c_{n-k} = -tr(A M_k) / k.
    std::vector<Real> mk(n * n, 0.0L);
    std::vector<Real> amk(n * n, 0.0L);
    for (std::size_t k = 1; k <= n; ++k) {
        // amk = A * M_{k-1}
        std::fill(amk.begin(), amk.end(), 0.0L);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t l = 0; l < n; ++l) {
                const Real ail = a[i * n + l];
                for (std::size_t j = 0; j < n; ++j) {
                    amk[i * n + j] += ail * mk[l * n + j];
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            amk[i * n + i] += c[n - k + 1];
        }
        mk.swap(amk);

        Real trace = 0.0L;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t l = 0; l < n; ++l) {
                trace += a[i * n + l] * mk[l * n + i];
            }
        }
        c[n - k] = -trace / static_cast<Real>(k);
    }
    return c;
}

/// p(z) and p'(z) by Horner.
inline void horner(const std::vector<Real>& c, Complex z, Complex& p, Complex& dp) {
    p = c.back();
    dp = 0.0L;
    for (std::size_t k = c.size() - 1; k-- > 0;) {
        dp = dp * z + p;
        p = p * z + c[k];
    }
}

/// |p^(j)(z) / j!| via repeated synthetic division (Taylor coefficients at z).
inline std::vector<Real> taylor_magnitudes(const std::vector<Real>& c, Complex z, std::size_t count) {
    std::vector<Complex> b(c.begin(), c.end());
    std::vector<Real> out;
    const std::size_t deg = c.size() - 1;
    for (std::size_t j = 0; j < count && j <= deg; ++j) {
        for (std::size_t k = deg; k-- > j;) {
            b[k] += b[k + 1] * z;
        }
        out.push_back(std::abs(b[j]));
    }
    return out;
}

inline Real binomial(std::size_t n, std::size_t k) {
    Real r = 1.0L;
    for (std::size_t i = 1; i <= k; ++i) {
        r = r * static_cast<Real>(n - k + i) / static_cast<Real>(i);
    }
    return r;
}

/// Coefficients of p^(j)(z) / j!, ascending.
inline std::vector<Real> scaled_derivative(const std::vector<Real>& c, std::size_t j) {
    std::vector<Real> d;
    for (std::size_t k = j; k < c.size(); ++k) {
        d.push_back(c[k] * binomial(k, j));
    }
    return d;
}

/// Rounding floor of evaluating p at z by Horner: eps * sum |c_k| |z|^k.
inline Real evaluation_floor(const std::vector<Real>& c, Real r) {
    Real s = 0.0L;
    for (std::size_t k = c.size(); k-- > 0;) {
        s = s * r + std::abs(c[k]);
    }
    return 8.0L * kUnitRoundoff * s;
}

/**
 * Refines the centre of a k-fold cluster by Newton's method on p^(k-1),
 * which has a simple root wherever p has a root of multiplicity k.
 */
inline Complex refine_cluster_centre(const std::vector<Real>& c, Complex z, std::size_t k) {
    const auto d = scaled_derivative(c, k - 1);
    for (int it = 0; it < 50; ++it) {
        Complex q, dq;
        horner(d, z, q, dq);
        if (dq == Complex(0.0L)) {
            break;
        }
        const Complex step = q / dq;
        z -= step;
        if (std::abs(step) <= 4.0L * kUnitRoundoff * std::max<Real>(std::abs(z), 1.0L)) {
            break;
        }
    }
    return z;
}

/// Rounding-noise level of the j-th Taylor coefficient at radius r, for a
/// characteristic polynomial of a matrix with norm `scale`. Deliberately
/// pessimistic; only used to accept a non-converged iterate.
inline Real taylor_noise(std::size_t n, std::size_t j, Real r, Real scale) {
    constexpr Real kSafety = 1e3L;
    return kSafety * kUnitRoundoff * binomial(n, j) * std::pow(r + scale, static_cast<Real>(n - j));
}

/**
 * Noise floor for the j-th Taylor coefficient at z when deciding whether a
 * cluster is one multiple root: the running-error sum of the coefficients,
 * inflated by 2^15 to cover the rounding of double-precision matrix entries.
 */
inline Real taylor_floor(const std::vector<Real>& c, Real r, std::size_t j) {
    constexpr Real kInputRounding = 32768.0L;
    Real s = 0.0L;
    for (std::size_t k = c.size(); k-- > j;) {
        s = s * r + binomial(k, j) * std::abs(c[k]);
    }
    return kInputRounding * kUnitRoundoff * s;
}

/**
 * tr((zI - M)^{-1}) = p'(z) / p(z), from a partial-pivoting LU of zI - M.
 * Backward stable, unlike evaluating the expanded polynomial. Returns false
 * when z is numerically an eigenvalue.
 */
inline bool log_derivative(const Matrix& m, Complex z, Complex& out) {
    const std::size_t n = m.rows();
    std::vector<Complex> a(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            a[i * n + j] = (i == j ? z : Complex(0.0L)) - static_cast<Real>(m(i, j));
        }
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(a[i * n + k]) > std::abs(a[p * n + k])) {
                p = i;
            }
        }
        if (a[p * n + k] == Complex(0.0L)) {
            return false;
        }
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a[k * n + j], a[p * n + j]);
            }
            std::swap(perm[k], perm[p]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const Complex f = a[i * n + k] / a[k * n + k];
            a[i * n + k] = f;
            for (std::size_t j = k + 1; j < n; ++j) {
                a[i * n + j] -= f * a[k * n + j];
            }
        }
    }
    // Sum of the diagonal of the inverse: solve for each unit vector.
    Complex trace = 0.0L;
    std::vector<Complex> y(n);
    for (std::size_t col = 0; col < n; ++col) {
        for (std::size_t i = 0; i < n; ++i) {
            Complex v = perm[i] == col ? Complex(1.0L) : Complex(0.0L);
            for (std::size_t j = 0; j < i; ++j) {
                v -= a[i * n + j] * y[j];
            }
            y[i] = v;
        }
        for (std::size_t i = n; i-- > 0;) {
            Complex v = y[i];
            for (std::size_t j = i + 1; j < n; ++j) {
                v -= a[i * n + j] * y[j];
            }
            y[i] = v / a[i * n + i];
        }
        trace += y[col];
    }
    if (!std::isfinite(trace.real()) || !std::isfinite(trace.imag())) {
        return false;
    }
    out = trace;
    return true;
}

} // namespace detail

struct EigenOptions {
    int max_iterations = 2000;
};

/**
 * All eigenvalues of a square matrix, as roots of its characteristic polynomial.
 *
 * Coefficients come from the Faddeev-LeVerrier recursion; roots from Aberth's
 * simultaneous iteration, both carried in extended precision. Roots that form
 * a numerically multiple cluster are replaced by the cluster mean, which is
 * far better conditioned than the individual perturbed roots. Intended for
 * n <= 20.
 */
inline std::vector<std::complex<double>> eigenvalues(const Matrix& m, EigenOptions opts = {}) {
    using detail::Complex;
    using detail::Real;

    if (!m.is_square()) {
        throw DimensionError("eigenvalues: matrix is not square (" + m.shape() + ")");
    }
    const std::size_t n = m.rows();
    if (n == 0) {
        return {};
    }
    if (n == 1) {
        return {std::complex<double>(m(0, 0), 0.0)};
    }

    const std::vector<Real> c = detail::characteristic_polynomial(m);

    // Fujiwara-style bound on root magnitude.
    Real bound = 0.0L;
    for (std::size_t k = 0; k < n; ++k) {
        bound = std::max(bound, 2.0L * std::pow(std::abs(c[k]), 1.0L / static_cast<Real>(n - k)));
    }
    // Coefficient rounding errors are relative to powers of the matrix norm,
    // so the norm also sets the absolute noise floor near the origin.
    Real frob = 0.0L;
    for (double v : m.data()) {
        frob += static_cast<Real>(v) * static_cast<Real>(v);
    }
    const Real norm = std::sqrt(frob);
    const Real scale = std::max(bound, norm);
    if (scale == 0.0L) {
        return std::vector<std::complex<double>>(n, std::complex<double>(0.0, 0.0));
    }

    std::vector<Complex> z(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Real angle = 2.0L * std::numbers::pi_v<Real> * static_cast<Real>(k) / static_cast<Real>(n) + 0.4L;
        z[k] = std::polar(0.5L * scale, angle);
    }

    std::vector<bool> settled(n, false);
    bool converged = false;
    for (int iter = 0; iter < opts.max_iterations && !converged; ++iter) {
        converged = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (settled[i]) {
                continue;
            }
            Complex p, dp;
            detail::horner(c, z[i], p, dp);
            if (std::abs(p) <= detail::evaluation_floor(c, std::abs(z[i]))) {
                settled[i] = true;
                continue;
            }
            converged = false;
            Complex repulsion = 0.0L;
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i) {
                    const Complex d = z[i] - z[j];
                    if (d != Complex(0.0L)) {
                        repulsion += 1.0L / d;
                    }
                }
            }
            const Complex ratio = (dp == Complex(0.0L)) ? Complex(1e-3L * scale) : p / dp;
            const Complex denom = 1.0L - ratio * repulsion;
            const Complex step = (denom == Complex(0.0L)) ? ratio : ratio / denom;
            z[i] -= step;
            if (std::abs(step) <= 4.0L * detail::kUnitRoundoff * std::max<Real>(std::abs(z[i]), 1e-30L)) {
                settled[i] = true;
            }
        }
    }

    auto to_double = [](const std::vector<Complex>& v) {
        std::vector<std::complex<double>> out;
        out.reserve(v.size());
        for (const auto& x : v) {
            out.emplace_back(static_cast<double>(x.real()), static_cast<double>(x.imag()));
        }
        return out;
    };

    if (!converged) {
        // Accept anyway if every residual is within the rounding envelope of the coefficients.
        for (std::size_t i = 0; i < n; ++i) {
            Complex p, dp;
            detail::horner(c, z[i], p, dp);
            if (std::abs(p) > detail::taylor_noise(n, 0, std::abs(z[i]), norm)) {
                throw NumericalFailure("eigenvalues: Aberth iteration did not converge", to_double(z));
            }
        }
    }

    // Aberth sweeps against the matrix itself. A step is only taken when it
    // stays well inside the gap to the nearest other root.
    for (int sweep = 0; sweep < 10; ++sweep) {
        bool moved = false;
        for (std::size_t i = 0; i < n; ++i) {
            Complex g;
            if (!detail::log_derivative(m, z[i], g)) {
                continue;
            }
            Complex repulsion = 0.0L;
            Real gap = std::numeric_limits<Real>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                if (j != i && z[i] != z[j]) {
                    repulsion += 1.0L / (z[i] - z[j]);
                    gap = std::min(gap, std::abs(z[i] - z[j]));
                }
            }
            const Complex denom = g - repulsion;
            if (denom == Complex(0.0L)) {
                continue;
            }
            const Complex step = 1.0L / denom;
            if (!(std::abs(step) < 0.25L * gap)) {
                continue;
            }
            z[i] -= step;
            moved = moved || std::abs(step) > 4.0L * detail::kUnitRoundoff * std::max<Real>(std::abs(z[i]), 1e-30L);
        }
        if (!moved) {
            break;
        }
    }

    // Cluster polishing: for each unassigned root, the largest k such that the
    // mean of its k nearest unassigned roots is a numerical k-fold root.
    std::vector<bool> assigned(n, false);
    std::vector<Complex> result = z;
    for (std::size_t i = 0; i < n; ++i) {
        if (assigned[i]) {
            continue;
        }
        std::vector<std::size_t> pool;
        for (std::size_t j = 0; j < n; ++j) {
            if (!assigned[j]) {
                pool.push_back(j);
            }
        }
        std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(z[a] - z[i]) < std::abs(z[b] - z[i]);
        });
        std::size_t chosen = 1;
        Complex centre = z[i];
        for (std::size_t k = pool.size(); k >= 2; --k) {
            Complex mean = 0.0L;
            for (std::size_t q = 0; q < k; ++q) {
                mean += z[pool[q]];
            }
            mean /= static_cast<Real>(k);
            const Complex refined = detail::refine_cluster_centre(c, mean, k);
            if (std::abs(refined - mean) <= std::abs(z[pool[k - 1]] - mean) + detail::kUnitRoundoff * norm) {
                mean = refined;
            }
            const auto taylor = detail::taylor_magnitudes(c, mean, k);
            bool multiple = true;
            for (std::size_t jdx = 0; jdx < k && multiple; ++jdx) {
                multiple = taylor[jdx] <= detail::taylor_floor(c, std::abs(mean), jdx);
            }
            if (multiple) {
                chosen = k;
                centre = mean;
                break;
            }
        }
        for (std::size_t q = 0; q < chosen; ++q) {
            assigned[pool[q]] = true;
            result[pool[q]] = centre;
        }
    }

    // Real input: snap tiny imaginary parts of real roots.
    for (auto& x : result) {
        if (std::abs(x.imag()) <= 1e3L * detail::kUnitRoundoff * std::max<Real>(scale, 1.0L)) {
            x = Complex(x.real(), 0.0L);
        }
    }
    auto out = to_double(result);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.real() != b.real()) {
            return a.real() < b.real();
        }
        return a.imag() < b.imag();
    });
    return out;
}

/// Largest eigenvalue magnitude.
inline double spectral_radius(const Matrix& m) {
    if (!m.is_square()) {
        throw DimensionError("spectral_radius: matrix is not square (" + m.shape() + ")");
    }
    double rho = 0.0;
    for (const auto& lambda : eigenvalues(m)) {
        rho = std::max(rho, std::abs(lambda));
    }
    return rho;
}

inline constexpr double kSchurTol = 1e-9;

inline bool is_schur(const Matrix& m, double tol = kSchurTol) { return spectral_radius(m) < 1.0 - tol; }

} // namespace posobs
