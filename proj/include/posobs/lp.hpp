#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "posobs/error.hpp"
#include "posobs/matrix.hpp"

namespace posobs {


/// Rows a_i^T x (relation) b_i; the relation is implied by where the rows are used.
struct LinearRows {
    Matrix coeffs;
    Vector rhs;

    LinearRows() = default;
    explicit LinearRows(std::size_t width) : coeffs(0, width) {}
    LinearRows(Matrix a, Vector b) : coeffs(std::move(a)), rhs(std::move(b)) {
        if (coeffs.rows() != rhs.size()) {
            throw DimensionError("LinearRows: " + coeffs.shape() + " with rhs of length " + std::to_string(rhs.size()));
        }
    }

    std::size_t count() const noexcept { return rhs.size(); }
    std::size_t width() const noexcept { return coeffs.cols(); }

    void add(std::span<const double> a, double b) {
        if (a.size() != coeffs.cols()) {
            throw DimensionError("LinearRows::add: row width " + std::to_string(a.size()) + ", expected " +
                                 std::to_string(coeffs.cols()));
        }
        Vector data(coeffs.data().begin(), coeffs.data().end());
        data.insert(data.end(), a.begin(), a.end());
        coeffs = Matrix(coeffs.rows() + 1, coeffs.cols(), std::move(data));
        rhs.push_back(b);
    }
};

struct VariableBox {
    Vector lower;
    Vector upper;

    static VariableBox nonneg(std::size_t n) { return {Vector(n, 0.0), Vector(n, kInf)}; }
    static VariableBox free(std::size_t n) { return {Vector(n, -kInf), Vector(n, kInf)}; }
    static VariableBox uniform(std::size_t n, double lo, double hi) { return {Vector(n, lo), Vector(n, hi)}; }

    std::size_t size() const noexcept { return lower.size(); }
};

/// maximize objective^T x  s.t.  less_equal rows, equal rows, box.
struct LpProblem {
    Vector objective;
    LinearRows less_equal;
    LinearRows equal;
    VariableBox box;

    explicit LpProblem(std::size_t n = 0)
        : objective(n, 0.0), less_equal(n), equal(n), box(VariableBox::nonneg(n)) {}

    std::size_t variables() const noexcept { return objective.size(); }

    void validate() const {
        const std::size_t n = variables();
        if (less_equal.width() != n || equal.width() != n) {
            throw DimensionError("LpProblem: constraint width does not match variable count " + std::to_string(n));
        }
        if (box.lower.size() != n || box.upper.size() != n) {
            throw DimensionError("LpProblem: bound vectors do not match variable count");
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (std::isnan(box.lower[j]) || std::isnan(box.upper[j]) || box.lower[j] > box.upper[j]) {
                throw Error("LpProblem: invalid bounds for variable " + std::to_string(j));
            }
        }
    }
};

enum class LpStatus { optimal, infeasible, unbounded };

inline const char* to_string(LpStatus s) {
    switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    }
    return "?";
}

struct LpOutcome {
    LpStatus status = LpStatus::infeasible;
    std::optional<Vector> point;
    std::optional<double> objective_value;

    bool optimal() const noexcept { return status == LpStatus::optimal; }
};

struct SimplexOptions {
    int iteration_cap = 10000;
    double feasibility_tol = 1e-9;
    double pivot_tol = 1e-11;
    double cost_tol = 1e-11;
};

namespace detail {

/// Dense tableau for  max c^T y  s.t.  T y = b, y >= 0, with a known starting basis.
class Tableau {
public:
    Tableau(Matrix rows, Vector rhs, std::vector<std::size_t> basis, const SimplexOptions& opts)
        : t_(std::move(rows)), b_(std::move(rhs)), basis_(std::move(basis)), opts_(opts) {}

    enum class Result { optimal, unbounded };

    /// Runs the primal simplex on objective c. `blocked` columns never enter.
    Result optimize(const Vector& c, const std::vector<bool>& blocked, int& iterations) {
        const std::size_t cols = t_.cols();
        const std::size_t bland_after = 5 * cols;
        std::size_t degenerate_run = 0;
        bool bland = false;

        while (true) {
            // reduced costs d_j = c_j - c_B^T column_j
            std::size_t enter = cols;
            double best = opts_.cost_tol;
            for (std::size_t j = 0; j < cols; ++j) {
                if (blocked[j] || is_basic(j)) {
                    continue;
                }
                double d = c[j];
                for (std::size_t i = 0; i < basis_.size(); ++i) {
                    d -= c[basis_[i]] * t_(i, j);
                }
                if (d > best) {
                    enter = j;
                    best = d;
                    if (bland) {
                        break;
                    }
                }
            }
            if (enter == cols) {
                return Result::optimal;
            }

            std::size_t leave = basis_.size();
            double ratio = kInf;
            for (std::size_t i = 0; i < basis_.size(); ++i) {
                const double a = t_(i, enter);
                if (a <= opts_.pivot_tol) {
                    continue;
                }
                const double r = std::max(b_[i], 0.0) / a;
                if (r < ratio - 1e-13 || (r <= ratio + 1e-13 && leave < basis_.size() && basis_[i] < basis_[leave])) {
                    ratio = std::min(ratio, r);
                    leave = i;
                }
            }
            if (leave == basis_.size()) {
                return Result::unbounded;
            }

            if (++iterations > opts_.iteration_cap) {
                throw NumericalFailure("lp_solve: iteration cap of " + std::to_string(opts_.iteration_cap) + " reached");
            }
            if (ratio <= opts_.feasibility_tol) {
                if (++degenerate_run >= bland_after) {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            pivot(leave, enter);
        }
    }

    void pivot(std::size_t r, std::size_t c) {
        const double p = t_(r, c);
        for (std::size_t j = 0; j < t_.cols(); ++j) {
            t_(r, j) /= p;
        }
        b_[r] /= p;
        t_(r, c) = 1.0;
        for (std::size_t i = 0; i < t_.rows(); ++i) {
            if (i == r) {
                continue;
            }
            const double f = t_(i, c);
            if (f == 0.0) {
                continue;
            }
            for (std::size_t j = 0; j < t_.cols(); ++j) {
                t_(i, j) -= f * t_(r, j);
            }
            t_(i, c) = 0.0;
            b_[i] -= f * b_[r];
        }
        basis_[r] = c;
    }

    void drop_row(std::size_t r) {
        Matrix smaller(t_.rows() - 1, t_.cols());
        for (std::size_t i = 0, k = 0; i < t_.rows(); ++i) {
            if (i == r) {
                continue;
            }
            for (std::size_t j = 0; j < t_.cols(); ++j) {
                smaller(k, j) = t_(i, j);
            }
            ++k;
        }
        t_ = std::move(smaller);
        b_.erase(b_.begin() + static_cast<std::ptrdiff_t>(r));
        basis_.erase(basis_.begin() + static_cast<std::ptrdiff_t>(r));
    }

    bool is_basic(std::size_t j) const {
        return std::find(basis_.begin(), basis_.end(), j) != basis_.end();
    }

    Vector solution() const {
        Vector y(t_.cols(), 0.0);
        for (std::size_t i = 0; i < basis_.size(); ++i) {
            y[basis_[i]] = std::max(b_[i], 0.0);
        }
        return y;
    }

    const Matrix& rows() const { return t_; }
    const std::vector<std::size_t>& basis() const { return basis_; }
    double rhs(std::size_t i) const { return b_[i]; }

private:
    Matrix t_;
    Vector b_;
    std::vector<std::size_t> basis_;
    SimplexOptions opts_;
};

/// x_j = offset + sign * y_pos (- y_neg when split).
struct VariableMap {
    double offset = 0.0;
    double sign = 1.0;
    std::size_t pos = 0;
    std::optional<std::size_t> neg;
};

} // namespace detail

/// Checks a point against every constraint of p within `tol` (relative to max(1, |b|)).
inline bool lp_point_feasible(const LpProblem& p, std::span<const double> x, double tol = 1e-9) {
    const std::size_t n = p.variables();
    if (x.size() != n) {
        return false;
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double slack_lo = x[j] - p.box.lower[j];
        const double slack_hi = p.box.upper[j] - x[j];
        if (slack_lo < -tol * std::max(1.0, std::abs(p.box.lower[j])) ||
            slack_hi < -tol * std::max(1.0, std::abs(p.box.upper[j]))) {
            return false;
        }
    }
    for (std::size_t i = 0; i < p.less_equal.count(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += p.less_equal.coeffs(i, j) * x[j];
        }
        if (s - p.less_equal.rhs[i] > tol * std::max(1.0, std::abs(p.less_equal.rhs[i]))) {
            return false;
        }
    }
    for (std::size_t i = 0; i < p.equal.count(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += p.equal.coeffs(i, j) * x[j];
        }
        if (std::abs(s - p.equal.rhs[i]) > tol * std::max(1.0, std::abs(p.equal.rhs[i]))) {
            return false;
        }
    }
    return true;
}

/**
 * Two-phase primal simplex on a dense tableau.
 *
 * Variables are shifted to their finite bound (or split into positive and
 * negative parts when free); finite upper bounds become extra rows. Pivoting
 * follows Dantzig's rule until 5*(tableau columns) consecutive degenerate
 * pivots, after which Bland's rule is used for the rest of the phase.
 */
inline LpOutcome lp_solve(const LpProblem& p, SimplexOptions opts = {}) {
    p.validate();
    const std::size_t n = p.variables();

    // Standard-form variables y >= 0.
    std::vector<detail::VariableMap> vars(n);
    std::size_t ny = 0;
    struct UpperRow {
        std::size_t col;
        double bound;
    };
    std::vector<UpperRow> upper_rows;
    for (std::size_t j = 0; j < n; ++j) {
        const double lo = p.box.lower[j];
        const double hi = p.box.upper[j];
        auto& v = vars[j];
        if (std::isfinite(lo)) {
            v.offset = lo;
            v.pos = ny++;
            if (std::isfinite(hi)) {
                upper_rows.push_back({v.pos, hi - lo});
            }
        } else if (std::isfinite(hi)) {
            v.offset = hi;
            v.sign = -1.0;
            v.pos = ny++;
        } else {
            v.pos = ny++;
            v.neg = ny++;
        }
    }

    // Rows over y: coefficients, rhs, kind (<= or =).
    struct Row {
        Vector a;
        double b;
        bool equality;
    };
    std::vector<Row> rows;
    auto map_row = [&](std::span<const double> a, double b, bool eq) {
        Row r{Vector(ny, 0.0), b, eq};
        for (std::size_t j = 0; j < n; ++j) {
            const auto& v = vars[j];
            r.b -= a[j] * v.offset;
            r.a[v.pos] += a[j] * v.sign;
            if (v.neg) {
                r.a[*v.neg] -= a[j];
            }
        }
        rows.push_back(std::move(r));
    };
    for (std::size_t i = 0; i < p.less_equal.count(); ++i) {
        map_row(p.less_equal.coeffs.row(i), p.less_equal.rhs[i], false);
    }
    for (std::size_t i = 0; i < p.equal.count(); ++i) {
        map_row(p.equal.coeffs.row(i), p.equal.rhs[i], true);
    }
    for (const auto& u : upper_rows) {
        Row r{Vector(ny, 0.0), u.bound, false};
        r.a[u.col] = 1.0;
        rows.push_back(std::move(r));
    }

    // Columns: y | slacks (one per <= row) | artificials (as needed).
    const std::size_t m = rows.size();
    std::size_t slack_count = 0;
    for (const auto& r : rows) {
        slack_count += r.equality ? 0 : 1;
    }
    std::size_t art_count = 0;
    for (const auto& r : rows) {
        if (r.equality || r.b < 0.0) {
            ++art_count;
        }
    }
    const std::size_t cols = ny + slack_count + art_count;
    Matrix t(m, cols);
    Vector b(m);
    std::vector<std::size_t> basis(m);
    std::vector<bool> is_artificial(cols, false);
    {
        std::size_t s = ny;
        std::size_t a = ny + slack_count;
        for (std::size_t i = 0; i < m; ++i) {
            const auto& r = rows[i];
            const double flip = r.b < 0.0 ? -1.0 : 1.0;
            for (std::size_t j = 0; j < ny; ++j) {
                t(i, j) = flip * r.a[j];
            }
            b[i] = flip * r.b;
            std::optional<std::size_t> slack;
            if (!r.equality) {
                t(i, s) = flip;
                slack = s++;
            }
            if (r.equality || r.b < 0.0) {
                t(i, a) = 1.0;
                is_artificial[a] = true;
                basis[i] = a++;
            } else {
                basis[i] = *slack;
            }
        }
    }

    detail::Tableau tab(std::move(t), std::move(b), std::move(basis), opts);
    int iterations = 0;
    const std::vector<bool> none_blocked(cols, false);

    if (art_count > 0) {
        Vector phase1(cols, 0.0);
        for (std::size_t j = 0; j < cols; ++j) {
            if (is_artificial[j]) {
                phase1[j] = -1.0;
            }
        }
        tab.optimize(phase1, none_blocked, iterations);
        double infeas = 0.0;
        double scale = 1.0;
        for (std::size_t i = 0; i < tab.basis().size(); ++i) {
            if (is_artificial[tab.basis()[i]]) {
                infeas += std::max(tab.rhs(i), 0.0);
            }
        }
        for (const auto& r : rows) {
            scale = std::max(scale, std::abs(r.b));
        }
        if (infeas > opts.feasibility_tol * scale) {
            return {LpStatus::infeasible, std::nullopt, std::nullopt};
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        for (std::size_t i = tab.basis().size(); i-- > 0;) {
            if (!is_artificial[tab.basis()[i]]) {
                continue;
            }
            std::size_t best = cols;
            double mag = opts.pivot_tol;
            for (std::size_t j = 0; j < cols; ++j) {
                if (!is_artificial[j] && !tab.is_basic(j) && std::abs(tab.rows()(i, j)) > mag) {
                    mag = std::abs(tab.rows()(i, j));
                    best = j;
                }
            }
            if (best == cols) {
                tab.drop_row(i);
            } else {
                tab.pivot(i, best);
            }
        }
    }

    Vector phase2(cols, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const auto& v = vars[j];
        phase2[v.pos] += p.objective[j] * v.sign;
        if (v.neg) {
            phase2[*v.neg] -= p.objective[j];
        }
    }
    if (tab.optimize(phase2, is_artificial, iterations) == detail::Tableau::Result::unbounded) {
        return {LpStatus::unbounded, std::nullopt, std::nullopt};
    }

    const Vector y = tab.solution();
    Vector x(n);
    double obj = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const auto& v = vars[j];
        x[j] = v.offset + v.sign * y[v.pos] - (v.neg ? y[*v.neg] : 0.0);
        // Snap onto bounds that are violated by rounding only.
        x[j] = std::clamp(x[j], p.box.lower[j], p.box.upper[j]);
        obj += p.objective[j] * x[j];
    }
    if (!lp_point_feasible(p, x, opts.feasibility_tol)) {
        throw NumericalFailure("lp_solve: optimal basis fails feasibility re-verification");
    }
    return {LpStatus::optimal, std::move(x), obj};
}

inline constexpr double kMinMargin = 1e-6;

struct MarginOutcome {
    bool feasible = false;
    Vector point;       ///< present when the weak/equality/box system is consistent
    double margin = -kInf; ///< best achievable t; -inf when the weak system is inconsistent
};

/**
 * Finds x with strict rows a^T x > b, weak rows a^T x >= b, equality rows and box,
 * by maximizing a common margin t (strict rows become a^T x >= b + t, t <= 1).
 * Feasible iff the optimal t reaches `min_margin`.
 */
inline MarginOutcome lp_feasibility_with_margin(const LinearRows& strict, const LinearRows& weak, const LinearRows& eq,
                                                const VariableBox& box, double min_margin = kMinMargin) {
    const std::size_t n = box.size();
    if (strict.width() != n || weak.width() != n || eq.width() != n) {
        throw DimensionError("lp_feasibility_with_margin: row widths do not match the variable box");
    }
    LpProblem lp(n + 1);
    lp.objective[n] = 1.0;
    lp.box.lower = box.lower;
    lp.box.upper = box.upper;
    lp.box.lower.push_back(-kInf);
    lp.box.upper.push_back(1.0);

    Vector row(n + 1);
    for (std::size_t i = 0; i < strict.count(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = -strict.coeffs(i, j);
        }
        row[n] = 1.0;
        lp.less_equal.add(row, -strict.rhs[i]);
    }
    for (std::size_t i = 0; i < weak.count(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = -weak.coeffs(i, j);
        }
        row[n] = 0.0;
        lp.less_equal.add(row, -weak.rhs[i]);
    }
    for (std::size_t i = 0; i < eq.count(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = eq.coeffs(i, j);
        }
        row[n] = 0.0;
        lp.equal.add(row, eq.rhs[i]);
    }

    const LpOutcome out = lp_solve(lp);
    MarginOutcome result;
    if (!out.optimal()) {
        return result;
    }
    result.point.assign(out.point->begin(), out.point->end() - 1);
    result.margin = out.point->back();
    result.feasible = result.margin >= min_margin;
    return result;
}

/**
 * Copositive certificate of Schur stability for a nonnegative matrix:
 * some d in [1, bound] with M d < d. Cross-check for the eigenvalue route.
 */
inline std::optional<Vector> schur_certificate(const Matrix& m, double bound = 1e4) {
    if (!m.is_square()) {
        throw DimensionError("schur_certificate: matrix is not square (" + m.shape() + ")");
    }
    const std::size_t n = m.rows();
    LinearRows strict(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vector a(n);
        for (std::size_t j = 0; j < n; ++j) {
            a[j] = (i == j ? 1.0 : 0.0) - m(i, j);
        }
        strict.add(a, 0.0);
    }
    const auto out = lp_feasibility_with_margin(strict, LinearRows(n), LinearRows(n), VariableBox::uniform(n, 1.0, bound));
    if (!out.feasible) {
        return std::nullopt;
    }
    return out.point;
}

} // namespace posobs
