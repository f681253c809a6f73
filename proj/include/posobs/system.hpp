#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "posobs/error.hpp"
#include "posobs/matrix.hpp"

namespace posobs {

/// x+ = A x + B u (+ E w),  y = C x (+ F v).
struct PositiveSystem {
    Matrix A;
    Matrix B;
    Matrix C;
    std::optional<Matrix> E;
    std::optional<Matrix> F;
    /// When set, A may have negative entries; feedback has to restore positivity.
    bool positivization_mode = false;

    std::size_t states() const noexcept { return A.rows(); }
    std::size_t inputs() const noexcept { return B.cols(); }
    std::size_t outputs() const noexcept { return C.rows(); }
    bool has_noise() const noexcept { return E.has_value() && F.has_value(); }

    void require_dimensions() const {
        const std::size_t n = states();
        if (!A.is_square()) {
            throw DimensionError("system: A must be square, got " + A.shape());
        }
        if (B.rows() != n) {
            throw DimensionError("system: B has " + std::to_string(B.rows()) + " rows, expected " + std::to_string(n));
        }
        if (C.cols() != n) {
            throw DimensionError("system: C has " + std::to_string(C.cols()) + " columns, expected " + std::to_string(n));
        }
        if (E && E->rows() != n) {
            throw DimensionError("system: E has " + std::to_string(E->rows()) + " rows, expected " + std::to_string(n));
        }
        if (F && F->rows() != outputs()) {
            throw DimensionError("system: F has " + std::to_string(F->rows()) + " rows, expected " +
                                 std::to_string(outputs()));
        }
    }
};

/// Observer gains for the upper and lower estimate, feedback gains from each.
struct GainSet {
    Matrix L_upper; ///< n x p
    Matrix L_lower; ///< n x p
    Matrix K_upper; ///< m x n
    Matrix K_lower; ///< m x n

    static GainSet zeros(const PositiveSystem& sys) {
        const std::size_t n = sys.states(), m = sys.inputs(), p = sys.outputs();
        return {Matrix(n, p), Matrix(n, p), Matrix(m, n), Matrix(m, n)};
    }

    void require_dimensions(const PositiveSystem& sys) const {
        const std::size_t n = sys.states(), m = sys.inputs(), p = sys.outputs();
        auto check = [](const Matrix& g, std::size_t r, std::size_t c, const char* name) {
            if (g.rows() != r || g.cols() != c) {
                throw DimensionError(std::string("gains: ") + name + " is " + g.shape() + ", expected " +
                                     std::to_string(r) + "x" + std::to_string(c));
            }
        };
        check(L_upper, n, p, "L_upper");
        check(L_lower, n, p, "L_lower");
        check(K_upper, m, n, "K_upper");
        check(K_lower, m, n, "K_lower");
    }
};

struct Violation {
    std::string matrix;     ///< "A" or "E"
    std::size_t row = 0;    ///< 1-based
    std::size_t col = 0;    ///< 1-based
    double value = 0.0;
    std::string constraint; ///< e.g. "A >= 0"

    std::string describe() const {
        return matrix + "(" + std::to_string(row) + "," + std::to_string(col) + ") = " + std::to_string(value) +
               " violates " + constraint;
    }
};

/// Structural requirements on the plant. An empty list means the system is admissible.
inline std::vector<Violation> validate_system(const PositiveSystem& sys, double tol = 0.0) {
    sys.require_dimensions();
    std::vector<Violation> out;
    auto scan = [&](const Matrix& m, const char* name, const char* constraint) {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            for (std::size_t j = 0; j < m.cols(); ++j) {
                if (m(i, j) < -tol) {
                    out.push_back({name, i + 1, j + 1, m(i, j), constraint});
                }
            }
        }
    };
    if (!sys.positivization_mode) {
        scan(sys.A, "A", "A >= 0 (enable positivization mode to allow negative entries)");
    }
    if (sys.E) {
        scan(*sys.E, "E", "E >= 0");
    }
    return out;
}

} // namespace posobs
