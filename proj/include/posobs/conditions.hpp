#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "posobs/eigen.hpp"
#include "posobs/error.hpp"
#include "posobs/matrix.hpp"
#include "posobs/system.hpp"

namespace posobs {

/// Every certified inequality, named by its role.
enum class ConditionId {
    closed_loop_nonneg,         ///< 6a: A + B(Ku + Kl) >= 0
    upper_feedback_loop_nonneg, ///< 6b: A + B Ku >= 0
    upper_feedback_nonneg,      ///< 6c: B Ku >= 0
    upper_error_nonneg,         ///< 6d: A - Lu C >= 0
    lower_error_nonneg,         ///< 6e: A - Ll C >= 0
    lower_coupling_nonneg,      ///< 6f: B Ku + Ll C >= 0
    generic_closed_loop,        ///< 10a: A + B K >= 0
    generic_feedback,           ///< 10b: B K >= 0
    generic_injection,          ///< 10c: L C >= 0
    upper_noise_dominance,      ///< 17a: Lu F 1 - E 1 >= 0
    lower_noise_dominance,      ///< 17b: E 1 - Ll F 1 >= 0
    lower_noise_sign,           ///< 17c: Ll F 1 >= 0
};

inline constexpr std::array kInvarianceConditions{
    ConditionId::closed_loop_nonneg, ConditionId::upper_feedback_loop_nonneg, ConditionId::upper_feedback_nonneg,
    ConditionId::upper_error_nonneg, ConditionId::lower_error_nonneg,         ConditionId::lower_coupling_nonneg,
};

inline constexpr std::array kGenericConditions{
    ConditionId::generic_closed_loop, ConditionId::generic_feedback, ConditionId::generic_injection};

inline constexpr std::array kNoiseConditions{
    ConditionId::upper_noise_dominance, ConditionId::lower_noise_dominance, ConditionId::lower_noise_sign};

/// Report key, e.g. "cond6a".
inline std::string_view key(ConditionId id) {
    switch (id) {
    case ConditionId::closed_loop_nonneg: return "cond6a";
    case ConditionId::upper_feedback_loop_nonneg: return "cond6b";
    case ConditionId::upper_feedback_nonneg: return "cond6c";
    case ConditionId::upper_error_nonneg: return "cond6d";
    case ConditionId::lower_error_nonneg: return "cond6e";
    case ConditionId::lower_coupling_nonneg: return "cond6f";
    case ConditionId::generic_closed_loop: return "cond10a";
    case ConditionId::generic_feedback: return "cond10b";
    case ConditionId::generic_injection: return "cond10c";
    case ConditionId::upper_noise_dominance: return "cond17a";
    case ConditionId::lower_noise_dominance: return "cond17b";
    case ConditionId::lower_noise_sign: return "cond17c";
    }
    return "cond?";
}

/// Accepts "cond6a" or the short form "6a".
inline std::optional<ConditionId> parse_condition_id(std::string_view s) {
    if (s.starts_with("cond")) {
        s.remove_prefix(4);
    }
    static constexpr std::array all{
        ConditionId::closed_loop_nonneg,  ConditionId::upper_feedback_loop_nonneg,
        ConditionId::upper_feedback_nonneg, ConditionId::upper_error_nonneg,
        ConditionId::lower_error_nonneg,  ConditionId::lower_coupling_nonneg,
        ConditionId::generic_closed_loop, ConditionId::generic_feedback,
        ConditionId::generic_injection,   ConditionId::upper_noise_dominance,
        ConditionId::lower_noise_dominance, ConditionId::lower_noise_sign,
    };
    for (auto id : all) {
        if (key(id).substr(4) == s) {
            return id;
        }
    }
    return std::nullopt;
}

struct ConditionRecord {
    ConditionId id;
    double margin = 0.0; ///< minimum entry of the tested matrix or vector
    bool pass = false;
};

struct SpectralRadii {
    double rho_cl = 0.0;  ///< rho(A + B(Ku + Kl))
    double rho_up = 0.0;  ///< rho(A - Lu C)
    double rho_low = 0.0; ///< rho(A - Ll C)
    double rho_ext = 0.0; ///< rho of the extended closed loop
    bool consistent = true; ///< |rho_ext - max(block radii)| <= 1e-8

    double block_max() const noexcept { return std::max({rho_cl, rho_up, rho_low}); }
};

struct ConditionReport {
    std::vector<ConditionRecord> conditions;
    std::optional<SpectralRadii> radii;
    std::optional<bool> invariance_ok;
    std::optional<bool> stability_ok;
    std::optional<bool> noise_ok;
    std::optional<bool> generic_ok;

    const ConditionRecord* find(ConditionId id) const {
        auto it = std::find_if(conditions.begin(), conditions.end(), [id](const auto& r) { return r.id == id; });
        return it == conditions.end() ? nullptr : &*it;
    }

    double margin(ConditionId id) const {
        const auto* r = find(id);
        if (r == nullptr) {
            throw Error("ConditionReport: " + std::string(key(id)) + " was not checked");
        }
        return r->margin;
    }

    /// True iff every verdict that was computed passed.
    bool all_pass() const {
        for (const auto& v : {invariance_ok, stability_ok, noise_ok, generic_ok}) {
            if (v && !*v) {
                return false;
            }
        }
        return true;
    }

    ConditionReport& merge(const ConditionReport& o) {
        for (const auto& r : o.conditions) {
            auto it = std::find_if(conditions.begin(), conditions.end(), [&](const auto& x) { return x.id == r.id; });
            if (it == conditions.end()) {
                conditions.push_back(r);
            } else {
                *it = r;
            }
        }
        if (o.radii) radii = o.radii;
        if (o.invariance_ok) invariance_ok = o.invariance_ok;
        if (o.stability_ok) stability_ok = o.stability_ok;
        if (o.noise_ok) noise_ok = o.noise_ok;
        if (o.generic_ok) generic_ok = o.generic_ok;
        return *this;
    }
};

// ---------------------------------------------------------------------------
// Extended matrices
// ---------------------------------------------------------------------------

/// State/estimate closed loop acting on (x, x_upper, x_lower).
inline Matrix build_extended_closed_loop(const PositiveSystem& sys, const GainSet& g) {
    sys.require_dimensions();
    g.require_dimensions(sys);
    const std::size_t n = sys.states();
    const Matrix BKu = sys.B * g.K_upper;
    const Matrix BKl = sys.B * g.K_lower;
    const Matrix LuC = g.L_upper * sys.C;
    const Matrix LlC = g.L_lower * sys.C;

    Matrix out(3 * n, 3 * n);
    out.set_block(0, 0, sys.A);
    out.set_block(0, n, BKu);
    out.set_block(0, 2 * n, BKl);
    out.set_block(n, 0, LuC);
    out.set_block(n, n, sys.A - LuC + BKu);
    out.set_block(n, 2 * n, BKl);
    out.set_block(2 * n, 0, LlC);
    out.set_block(2 * n, n, BKu);
    out.set_block(2 * n, 2 * n, sys.A - LlC + BKl);
    return out;
}

struct ErrorDynamics {
    Matrix G;    ///< acts on (x, e_upper, e_lower), e_upper = x_upper - x, e_lower = x - x_lower
    Vector bias; ///< expected per-step noise injection (zero without a noise model)
};

inline ErrorDynamics build_error_dynamics(const PositiveSystem& sys, const GainSet& g) {
    sys.require_dimensions();
    g.require_dimensions(sys);
    const std::size_t n = sys.states();
    const Matrix BKu = sys.B * g.K_upper;
    const Matrix BKl = sys.B * g.K_lower;

    ErrorDynamics ed{Matrix(3 * n, 3 * n), Vector(3 * n, 0.0)};
    ed.G.set_block(0, 0, sys.A + BKu + BKl);
    ed.G.set_block(0, n, BKu);
    ed.G.set_block(0, 2 * n, -BKl);
    ed.G.set_block(n, n, sys.A - g.L_upper * sys.C);
    ed.G.set_block(2 * n, 2 * n, sys.A - g.L_lower * sys.C);

    if (sys.E && sys.F) {
        const Vector e1 = sys.E->row_sums();
        const Vector f1 = sys.F->row_sums();
        const Vector lu_f1 = g.L_upper * f1;
        const Vector ll_f1 = g.L_lower * f1;
        for (std::size_t i = 0; i < n; ++i) {
            ed.bias[i] = e1[i];
            ed.bias[n + i] = lu_f1[i] - e1[i];
            ed.bias[2 * n + i] = e1[i] - ll_f1[i];
        }
    }
    return ed;
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

namespace detail {

inline Vector noise_column(const std::optional<Matrix>& m, const char* name) {
    if (!m) {
        throw MissingNoiseModelError(std::string("noise conditions need ") + name);
    }
    return m->row_sums();
}

inline ConditionRecord record(ConditionId id, const Matrix& m, double tol) {
    const auto c = is_nonneg(m, tol);
    return {id, c.margin, c.ok};
}

} // namespace detail

/// The matrix (or column vector) whose nonnegativity an invariance, generic or noise condition asserts.
inline Matrix condition_matrix(const PositiveSystem& sys, const GainSet& g, ConditionId id) {
    switch (id) {
    case ConditionId::closed_loop_nonneg: return sys.A + sys.B * (g.K_upper + g.K_lower);
    case ConditionId::upper_feedback_loop_nonneg: return sys.A + sys.B * g.K_upper;
    case ConditionId::upper_feedback_nonneg: return sys.B * g.K_upper;
    case ConditionId::upper_error_nonneg: return sys.A - g.L_upper * sys.C;
    case ConditionId::lower_error_nonneg: return sys.A - g.L_lower * sys.C;
    case ConditionId::lower_coupling_nonneg: return sys.B * g.K_upper + g.L_lower * sys.C;
    case ConditionId::upper_noise_dominance: {
        const Vector e1 = detail::noise_column(sys.E, "E");
        const Vector f1 = detail::noise_column(sys.F, "F");
        return Matrix::column(sub(g.L_upper * f1, e1));
    }
    case ConditionId::lower_noise_dominance: {
        const Vector e1 = detail::noise_column(sys.E, "E");
        const Vector f1 = detail::noise_column(sys.F, "F");
        return Matrix::column(sub(e1, g.L_lower * f1));
    }
    case ConditionId::lower_noise_sign: {
        detail::noise_column(sys.E, "E");
        const Vector f1 = detail::noise_column(sys.F, "F");
        return Matrix::column(g.L_lower * f1);
    }
    default: break;
    }
    throw Error("condition_matrix: " + std::string(key(id)) + " is not defined on a gain set");
}

/// Necessary and sufficient conditions for the ordered cone 0 <= x_lower <= x <= x_upper to be invariant.
inline ConditionReport check_invariance_conditions(const PositiveSystem& sys, const GainSet& g,
                                                   double tol = kDefaultNonnegTol) {
    sys.require_dimensions();
    g.require_dimensions(sys);
    ConditionReport rep;
    bool ok = true;
    for (auto id : kInvarianceConditions) {
        rep.conditions.push_back(detail::record(id, condition_matrix(sys, g, id), tol));
        ok = ok && rep.conditions.back().pass;
    }
    rep.invariance_ok = ok;
    return rep;
}

/// Requirements for an unstructured positive observer with feedback u = K x_hat.
inline ConditionReport check_generic_conditions(const PositiveSystem& sys, const Matrix& K, const Matrix& L,
                                                double tol = kDefaultNonnegTol) {
    sys.require_dimensions();
    if (K.rows() != sys.inputs() || K.cols() != sys.states()) {
        throw DimensionError("generic check: K is " + K.shape());
    }
    if (L.rows() != sys.states() || L.cols() != sys.outputs()) {
        throw DimensionError("generic check: L is " + L.shape());
    }
    ConditionReport rep;
    rep.conditions.push_back(detail::record(ConditionId::generic_closed_loop, sys.A + sys.B * K, tol));
    rep.conditions.push_back(detail::record(ConditionId::generic_feedback, sys.B * K, tol));
    rep.conditions.push_back(detail::record(ConditionId::generic_injection, L * sys.C, tol));
    rep.generic_ok = std::all_of(rep.conditions.begin(), rep.conditions.end(), [](const auto& r) { return r.pass; });
    return rep;
}

/// Positivity-in-expectation requirements on the observer gains under unit-mean noise.
inline ConditionReport check_noise_conditions(const PositiveSystem& sys, const GainSet& g,
                                              double tol = kDefaultNonnegTol) {
    sys.require_dimensions();
    g.require_dimensions(sys);
    if (!sys.has_noise()) {
        throw MissingNoiseModelError("noise conditions need both E and F");
    }
    ConditionReport rep;
    bool ok = true;
    for (auto id : kNoiseConditions) {
        rep.conditions.push_back(detail::record(id, condition_matrix(sys, g, id), tol));
        ok = ok && rep.conditions.back().pass;
    }
    rep.noise_ok = ok;
    return rep;
}

inline constexpr double kSpectrumConsistencyTol = 1e-8;

/// Spectral radii of the three diagonal blocks and of the extended loop.
inline ConditionReport check_stability(const PositiveSystem& sys, const GainSet& g, double stability_tol = kSchurTol) {
    sys.require_dimensions();
    g.require_dimensions(sys);
    SpectralRadii r;
    r.rho_cl = spectral_radius(condition_matrix(sys, g, ConditionId::closed_loop_nonneg));
    r.rho_up = spectral_radius(condition_matrix(sys, g, ConditionId::upper_error_nonneg));
    r.rho_low = spectral_radius(condition_matrix(sys, g, ConditionId::lower_error_nonneg));
    r.rho_ext = spectral_radius(build_extended_closed_loop(sys, g));
    r.consistent = std::abs(r.rho_ext - r.block_max()) <= kSpectrumConsistencyTol * std::max(1.0, r.block_max());

    ConditionReport rep;
    rep.radii = r;
    rep.stability_ok = r.block_max() < 1.0 - stability_tol;
    return rep;
}

struct CertifyOptions {
    double tol = kDefaultNonnegTol;
    double stability_tol = kSchurTol;
    bool noise = true;    ///< include noise conditions when the system has E and F
    bool generic = false; ///< include the unstructured-observer conditions with K = Ku + Kl, L = Ll
};

/// Runs every applicable check and merges the results.
inline ConditionReport certify(const PositiveSystem& sys, const GainSet& g, const CertifyOptions& opts = {}) {
    ConditionReport rep = check_invariance_conditions(sys, g, opts.tol);
    if (opts.generic) {
        rep.merge(check_generic_conditions(sys, g.K_upper + g.K_lower, g.L_lower, opts.tol));
    }
    if (opts.noise && sys.has_noise()) {
        rep.merge(check_noise_conditions(sys, g, opts.tol));
    }
    rep.merge(check_stability(sys, g, opts.stability_tol));
    return rep;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string format_number(double v) {
    if (v == 0.0) {
        return "0";
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// Flat "key: value" lines, one per condition, radius and verdict.
inline std::string render(const ConditionReport& rep) {
    std::ostringstream os;
    for (const auto& r : rep.conditions) {
        os << key(r.id) << ": " << format_number(r.margin) << ' ' << (r.pass ? "pass" : "FAIL") << '\n';
    }
    if (rep.radii) {
        os << "rho_cl: " << format_number(rep.radii->rho_cl) << '\n';
        os << "rho_up: " << format_number(rep.radii->rho_up) << '\n';
        os << "rho_low: " << format_number(rep.radii->rho_low) << '\n';
        os << "rho_ext: " << format_number(rep.radii->rho_ext) << '\n';
        if (!rep.radii->consistent) {
            os << "warning: rho_ext differs from the largest block radius\n";
        }
    }
    auto verdict = [&](const char* name, const std::optional<bool>& v) {
        if (v) {
            os << name << ": " << (*v ? "true" : "false") << '\n';
        }
    };
    verdict("invariance_ok", rep.invariance_ok);
    verdict("generic_ok", rep.generic_ok);
    verdict("noise_ok", rep.noise_ok);
    verdict("stability_ok", rep.stability_ok);
    return os.str();
}

} // namespace posobs
