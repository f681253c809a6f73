#pragma once

#include <algorithm>
#include <cstddef>

#include "posobs/error.hpp"
#include "posobs/matrix.hpp"

namespace posobs {

/// A state together with its upper and lower estimate.
struct ConeState {
    Vector x;
    Vector x_upper;
    Vector x_lower;

    Vector stacked() const {
        Vector out = x;
        out.insert(out.end(), x_upper.begin(), x_upper.end());
        out.insert(out.end(), x_lower.begin(), x_lower.end());
        return out;
    }

    static ConeState unstack(std::span<const double> v) {
        if (v.size() % 3 != 0) {
            throw DimensionError("ConeState::unstack: length is not a multiple of 3");
        }
        const std::size_t n = v.size() / 3;
        return {Vector(v.begin(), v.begin() + n), Vector(v.begin() + n, v.begin() + 2 * n),
                Vector(v.begin() + 2 * n, v.end())};
    }

    ConeState scaled(double s) const {
        ConeState c = *this;
        for (auto* v : {&c.x, &c.x_upper, &c.x_lower}) {
            for (double& e : *v) {
                e *= s;
            }
        }
        return c;
    }
};

/// Largest amount by which 0 <= x_lower <= x <= x_upper fails; <= 0 inside the cone.
inline double cone_violation(const ConeState& c) {
    double worst = -kInf;
    for (std::size_t i = 0; i < c.x.size(); ++i) {
        worst = std::max({worst, -c.x_lower[i], c.x_lower[i] - c.x[i], c.x[i] - c.x_upper[i]});
    }
    return c.x.empty() ? 0.0 : worst;
}

/// One step of the extended closed loop (3n x 3n) applied to a cone state.
inline ConeState step_extended(const Matrix& extended, const ConeState& c) {
    return ConeState::unstack(extended * c.stacked());
}

} // namespace posobs
