#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "posobs/conditions.hpp"
#include "posobs/cone.hpp"
#include "posobs/error.hpp"
#include "posobs/lp.hpp"
#include "posobs/matrix.hpp"
#include "posobs/system.hpp"

namespace posobs {

struct SynthesisBounds {
    double eps = kMinMargin; ///< floor on the LP margin
    double D = 1e4;          ///< upper bound on the diagonal scaling variables

    void validate() const {
        if (!(eps > 0.0)) {
            throw Error("synthesis: margin floor eps must be positive");
        }
        if (!(D >= 1.0)) {
            throw Error("synthesis: scaling bound D must be at least 1");
        }
    }
};

struct StateFeedback {
    Matrix K;
    Vector d;       ///< Schur certificate: (A + B K) d < d, d >= 1
    Matrix Z;       ///< K diag(d)
    double margin;
};

/**
 * Positivity-preserving stabilizing state feedback via diagonal scaling:
 * with Z = K diag(d), both A diag(d) + B Z >= 0 and A d + B Z 1 <= d - t 1
 * are linear in (d, Z). The LP maximizes t.
 */
inline std::optional<StateFeedback> synth_state_feedback(const Matrix& A, const Matrix& B,
                                                         const SynthesisBounds& bounds = {}) {
    bounds.validate();
    if (!A.is_square() || B.rows() != A.rows()) {
        throw DimensionError("synth_state_feedback: A is " + A.shape() + ", B is " + B.shape());
    }
    const std::size_t n = A.rows();
    const std::size_t m = B.cols();
    const std::size_t nv = n + m * n;
    auto z = [n](std::size_t k, std::size_t j) { return n + k * n + j; };

    VariableBox box = VariableBox::free(nv);
    for (std::size_t j = 0; j < n; ++j) {
        box.lower[j] = 1.0;
        box.upper[j] = bounds.D;
    }

    LinearRows weak(nv);
    LinearRows strict(nv);
    Vector row(nv);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::fill(row.begin(), row.end(), 0.0);
            row[j] = A(i, j);
            for (std::size_t k = 0; k < m; ++k) {
                row[z(k, j)] = B(i, k);
            }
            weak.add(row, 0.0);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        row[i] += 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] -= A(i, j);
            for (std::size_t k = 0; k < m; ++k) {
                row[z(k, j)] -= B(i, k);
            }
        }
        strict.add(row, 0.0);
    }

    const auto out = lp_feasibility_with_margin(strict, weak, LinearRows(nv), box, bounds.eps);
    if (!out.feasible) {
        return std::nullopt;
    }
    StateFeedback sf{Matrix(m, n), Vector(out.point.begin(), out.point.begin() + static_cast<std::ptrdiff_t>(n)),
                     Matrix(m, n), out.margin};
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            sf.Z(k, j) = out.point[z(k, j)];
            sf.K(k, j) = sf.Z(k, j) / sf.d[j];
        }
    }
    return sf;
}

/// Extra constraint rows for an observer-gain LP.
struct ObserverOptions {
    bool require_LC_nonneg = false;
    /// Upper-estimate noise dominance: L F 1 >= E 1.
    bool upper_noise = false;
    /// Lower-estimate noise rows: E 1 - L F 1 >= 0 and L F 1 >= 0.
    bool lower_noise = false;
    std::optional<Matrix> E;
    std::optional<Matrix> F;
    /// B * Ku for the coupling row diag(lambda) B Ku + V C >= 0.
    std::optional<Matrix> coupled_BKu;
};

struct ObserverGain {
    Matrix L;
    Vector lambda; ///< row certificate: lambda^T (A - L C) < lambda^T, lambda >= 1
    Matrix V;      ///< diag(lambda) L
    double margin;
};

namespace detail {

struct NoiseColumns {
    Vector e1;
    Vector f1;
};

inline std::optional<NoiseColumns> noise_columns(const ObserverOptions& o) {
    if (!o.upper_noise && !o.lower_noise) {
        return std::nullopt;
    }
    if (!o.E || !o.F) {
        throw MissingNoiseModelError("observer synthesis: noise rows need E and F");
    }
    return NoiseColumns{o.E->row_sums(), o.F->row_sums()};
}

/// Appends the observer rows over variables lambda (at lambda_at(i)) and
/// V (at v_at(i, q)); lambda entries may be fixed numbers instead.
template <typename LambdaTerm, typename VIndex>
void add_observer_rows(const Matrix& A, const Matrix& C, const ObserverOptions& o, LambdaTerm lambda_term,
                       VIndex v_at, std::size_t nv, LinearRows& weak, LinearRows& strict) {
    const std::size_t n = A.rows();
    const std::size_t p = C.rows();
    Vector row(nv);
    const auto noise = noise_columns(o);

    auto reset = [&] { std::fill(row.begin(), row.end(), 0.0); };
    // sum_q V_iq C_qj added with the given sign
    auto add_vc = [&](std::size_t i, std::size_t j, double sign) {
        for (std::size_t q = 0; q < p; ++q) {
            row[v_at(i, q)] += sign * C(q, j);
        }
    };
    // sum_q V_iq f_q
    auto add_vf = [&](std::size_t i, double sign) {
        for (std::size_t q = 0; q < p; ++q) {
            row[v_at(i, q)] += sign * noise->f1[q];
        }
    };

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            // lambda_i A_ij - (V C)_ij >= 0
            reset();
            double rhs = 0.0;
            lambda_term(row, rhs, i, A(i, j));
            add_vc(i, j, -1.0);
            weak.add(row, rhs);

            if (o.require_LC_nonneg) {
                reset();
                add_vc(i, j, 1.0);
                weak.add(row, 0.0);
            }
            if (o.coupled_BKu) {
                reset();
                rhs = 0.0;
                lambda_term(row, rhs, i, (*o.coupled_BKu)(i, j));
                add_vc(i, j, 1.0);
                weak.add(row, rhs);
            }
        }
        if (o.upper_noise) {
            // (V F 1)_i - lambda_i (E 1)_i >= 0
            reset();
            double rhs = 0.0;
            lambda_term(row, rhs, i, -noise->e1[i]);
            add_vf(i, 1.0);
            weak.add(row, rhs);
        }
        if (o.lower_noise) {
            reset();
            double rhs = 0.0;
            lambda_term(row, rhs, i, noise->e1[i]);
            add_vf(i, -1.0);
            weak.add(row, rhs);
            reset();
            add_vf(i, 1.0);
            weak.add(row, 0.0);
        }
    }
    // lambda_j - sum_i lambda_i A_ij + sum_i (V C)_ij > 0
    for (std::size_t j = 0; j < n; ++j) {
        reset();
        double rhs = 0.0;
        lambda_term(row, rhs, j, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            lambda_term(row, rhs, i, -A(i, j));
            add_vc(i, j, 1.0);
        }
        strict.add(row, rhs);
    }
}

} // namespace detail

/**
 * Observer gain with A - L C >= 0 and Schur, through the row scaling
 * V = diag(lambda) L. With `lambda_fixed` the scaling is held constant and
 * only V is free.
 */
inline std::optional<ObserverGain> synth_observer_gain(const Matrix& A, const Matrix& C, const ObserverOptions& opts = {},
                                                       const std::optional<Vector>& lambda_fixed = std::nullopt,
                                                       const SynthesisBounds& bounds = {}) {
    bounds.validate();
    if (!A.is_square() || C.cols() != A.rows()) {
        throw DimensionError("synth_observer_gain: A is " + A.shape() + ", C is " + C.shape());
    }
    const std::size_t n = A.rows();
    const std::size_t p = C.rows();
    if (opts.coupled_BKu && (opts.coupled_BKu->rows() != n || opts.coupled_BKu->cols() != n)) {
        throw DimensionError("synth_observer_gain: coupling matrix is " + opts.coupled_BKu->shape());
    }
    if (lambda_fixed && lambda_fixed->size() != n) {
        throw DimensionError("synth_observer_gain: fixed lambda has wrong length");
    }

    const std::size_t nv = n + n * p;
    auto v_at = [n, p](std::size_t i, std::size_t q) { return n + i * p + q; };
    auto lambda_term = [](Vector& row, double&, std::size_t i, double coeff) { row[i] += coeff; };

    VariableBox box = VariableBox::free(nv);
    for (std::size_t i = 0; i < n; ++i) {
        box.lower[i] = lambda_fixed ? (*lambda_fixed)[i] : 1.0;
        box.upper[i] = lambda_fixed ? (*lambda_fixed)[i] : bounds.D;
    }

    LinearRows weak(nv);
    LinearRows strict(nv);
    detail::add_observer_rows(A, C, opts, lambda_term, v_at, nv, weak, strict);

    const auto out = lp_feasibility_with_margin(strict, weak, LinearRows(nv), box, bounds.eps);
    if (!out.feasible) {
        return std::nullopt;
    }
    ObserverGain og{Matrix(n, p), Vector(out.point.begin(), out.point.begin() + static_cast<std::ptrdiff_t>(n)),
                    Matrix(n, p), out.margin};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t q = 0; q < p; ++q) {
            og.V(i, q) = out.point[v_at(i, q)];
            og.L(i, q) = og.V(i, q) / og.lambda[i];
        }
    }
    return og;
}

struct UpperFeedback {
    Matrix K_upper;
    ObserverGain lower; ///< lower-estimate gain solved jointly at the fixed scaling
};

/**
 * Joint LP for the upper-estimate feedback and the lower observer gain at a
 * fixed row scaling lambda: B Ku >= 0, A + B Ku >= 0, the coupling row
 * diag(lambda) B Ku + V C >= 0 and the lower-observer rows of
 * synth_observer_gain (with `lower_opts`).
 */
inline std::optional<UpperFeedback> synth_upper_feedback(const Matrix& A, const Matrix& B, const Matrix& C,
                                                         const Vector& lambda, const ObserverOptions& lower_opts = {},
                                                         const SynthesisBounds& bounds = {}) {
    bounds.validate();
    if (!A.is_square() || B.rows() != A.rows() || C.cols() != A.rows()) {
        throw DimensionError("synth_upper_feedback: inconsistent A, B, C");
    }
    const std::size_t n = A.rows();
    const std::size_t m = B.cols();
    const std::size_t p = C.rows();
    if (lambda.size() != n) {
        throw DimensionError("synth_upper_feedback: lambda has wrong length");
    }

    // Variables: Ku (m x n) then V (n x p).
    const std::size_t nv = m * n + n * p;
    auto k_at = [n](std::size_t k, std::size_t j) { return k * n + j; };
    auto v_at = [m, n, p](std::size_t i, std::size_t q) { return m * n + i * p + q; };
    auto lambda_term = [&lambda](Vector&, double& rhs, std::size_t i, double coeff) { rhs -= coeff * lambda[i]; };

    LinearRows weak(nv);
    LinearRows strict(nv);
    Vector row(nv);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::fill(row.begin(), row.end(), 0.0);
            for (std::size_t k = 0; k < m; ++k) {
                row[k_at(k, j)] = B(i, k);
            }
            weak.add(row, 0.0);        // B Ku >= 0
            weak.add(row, -A(i, j));   // A + B Ku >= 0
            for (std::size_t k = 0; k < m; ++k) {
                row[k_at(k, j)] = lambda[i] * B(i, k);
            }
            for (std::size_t q = 0; q < p; ++q) {
                row[v_at(i, q)] = C(q, j);
            }
            weak.add(row, 0.0);        // diag(lambda) B Ku + V C >= 0
        }
    }
    ObserverOptions obs = lower_opts;
    obs.coupled_BKu.reset();
    obs.upper_noise = false;
    detail::add_observer_rows(A, C, obs, lambda_term, v_at, nv, weak, strict);

    const auto out = lp_feasibility_with_margin(strict, weak, LinearRows(nv), VariableBox::free(nv), bounds.eps);
    if (!out.feasible) {
        return std::nullopt;
    }
    UpperFeedback uf{Matrix(m, n), ObserverGain{Matrix(n, p), lambda, Matrix(n, p), out.margin}};
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            uf.K_upper(k, j) = out.point[k_at(k, j)];
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t q = 0; q < p; ++q) {
            uf.lower.V(i, q) = out.point[v_at(i, q)];
            uf.lower.L(i, q) = uf.lower.V(i, q) / lambda[i];
        }
    }
    return uf;
}

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

enum class SynthesisMode {
    decoupled, ///< L_lower C >= 0, Ku = 0; observer and feedback designed independently
    coupled,   ///< staged relaxation using the coupling row
};

inline const char* to_string(SynthesisMode m) { return m == SynthesisMode::decoupled ? "thm1" : "coupled"; }

inline std::optional<SynthesisMode> parse_synthesis_mode(std::string_view s) {
    if (s == "thm1") return SynthesisMode::decoupled;
    if (s == "coupled") return SynthesisMode::coupled;
    return std::nullopt;
}

enum class SynthesisStage { state_feedback, lower_observer, coupling, upper_observer, recheck };

inline const char* to_string(SynthesisStage s) {
    switch (s) {
    case SynthesisStage::state_feedback: return "state-feedback";
    case SynthesisStage::lower_observer: return "observer";
    case SynthesisStage::coupling: return "coupling";
    case SynthesisStage::upper_observer: return "upper-observer";
    case SynthesisStage::recheck: return "recheck";
    }
    return "?";
}

struct SynthesisRequest {
    PositiveSystem system;
    SynthesisMode mode = SynthesisMode::coupled;
    bool include_noise_conditions = false;
    SynthesisBounds bounds;
    int refinements = 3; ///< coupled mode: extra (scaling, joint) rounds
};

struct SynthesisCertificates {
    Vector d;            ///< closed-loop scaling
    Vector lambda_lower; ///< lower-observer scaling
    Vector lambda_upper; ///< upper-observer scaling
    double feedback_margin = 0.0;
    double lower_margin = 0.0;
    double upper_margin = 0.0;
};

inline constexpr double kSynthesisRadiusCap = 1.0 - 1e-6;

struct SynthesisResult {
    bool feasible = false;
    std::optional<SynthesisStage> failed_stage;
    std::optional<GainSet> gains;
    SynthesisCertificates certificates;
    ConditionReport report;

    /// "feasible", or the stage at which the staged pipeline gave up.
    /// Stage infeasibility is not a proof that no gains exist.
    std::string summary() const {
        if (feasible) {
            return "feasible";
        }
        return std::string("stage-infeasible at ") + to_string(*failed_stage) + " stage";
    }
};

namespace detail {

inline SynthesisResult fail_at(SynthesisStage s) {
    SynthesisResult r;
    r.failed_stage = s;
    return r;
}

inline ObserverOptions lower_observer_options(const PositiveSystem& sys, bool noise, bool lc_nonneg) {
    ObserverOptions o;
    o.require_LC_nonneg = lc_nonneg;
    o.lower_noise = noise;
    if (noise) {
        o.E = sys.E;
        o.F = sys.F;
    }
    return o;
}

inline ObserverOptions upper_observer_options(const PositiveSystem& sys, bool noise) {
    ObserverOptions o;
    o.upper_noise = noise;
    if (noise) {
        o.E = sys.E;
        o.F = sys.F;
    }
    return o;
}

inline SynthesisResult finish(const SynthesisRequest& req, GainSet gains, SynthesisCertificates cert) {
    SynthesisResult r;
    CertifyOptions copts;
    copts.noise = req.include_noise_conditions;
    r.report = certify(req.system, gains, copts);
    r.certificates = std::move(cert);
    const bool radii_ok = r.report.radii && r.report.radii->block_max() <= kSynthesisRadiusCap;
    const bool ok = r.report.invariance_ok.value_or(false) && radii_ok &&
                    (!req.include_noise_conditions || r.report.noise_ok.value_or(false));
    r.gains = std::move(gains);
    if (ok) {
        r.feasible = true;
    } else {
        r.failed_stage = SynthesisStage::recheck;
    }
    return r;
}

} // namespace detail

/**
 * Gain synthesis for the interval observer with feedback.
 *
 * decoupled: state feedback K and an observer gain with L C >= 0, assembled as
 *   (Lu, Ll, Ku, Kl) = (L, L, 0, K); with noise rows the two observer gains
 *   are solved separately.
 * coupled: (1) total feedback K; (2) lower-observer scaling lambda ignoring the
 *   coupling row; (3) joint (Ku, Ll) at that lambda; (4) Kl = K - Ku;
 *   (5) upper observer gain. Rounds of (lambda refresh, joint solve) follow
 *   while they improve the joint margin.
 *
 * Every assembled gain set is re-certified; a failed re-check is reported as
 * infeasible at the "recheck" stage.
 */
inline SynthesisResult synth_full(const SynthesisRequest& req) {
    const PositiveSystem& sys = req.system;
    const auto violations = validate_system(sys);
    if (!violations.empty()) {
        throw Error("synth_full: invalid system: " + violations.front().describe());
    }
    req.bounds.validate();
    if (req.include_noise_conditions && !sys.has_noise()) {
        throw MissingNoiseModelError("synth_full: noise conditions requested without E and F");
    }
    const bool noise = req.include_noise_conditions;

    const auto feedback = synth_state_feedback(sys.A, sys.B, req.bounds);
    if (!feedback) {
        return detail::fail_at(SynthesisStage::state_feedback);
    }
    SynthesisCertificates cert;
    cert.d = feedback->d;
    cert.feedback_margin = feedback->margin;

    if (req.mode == SynthesisMode::decoupled) {
        const auto lower = synth_observer_gain(sys.A, sys.C, detail::lower_observer_options(sys, noise, true),
                                               std::nullopt, req.bounds);
        if (!lower) {
            return detail::fail_at(SynthesisStage::lower_observer);
        }
        std::optional<ObserverGain> upper = lower;
        if (noise) {
            upper = synth_observer_gain(sys.A, sys.C, detail::upper_observer_options(sys, true), std::nullopt,
                                        req.bounds);
            if (!upper) {
                return detail::fail_at(SynthesisStage::upper_observer);
            }
        }
        cert.lambda_lower = lower->lambda;
        cert.lambda_upper = upper->lambda;
        cert.lower_margin = lower->margin;
        cert.upper_margin = upper->margin;
        GainSet g{upper->L, lower->L, Matrix(sys.inputs(), sys.states()), feedback->K};
        return detail::finish(req, std::move(g), std::move(cert));
    }

    const ObserverOptions lower_opts = detail::lower_observer_options(sys, noise, false);
    const auto pass1 = synth_observer_gain(sys.A, sys.C, lower_opts, std::nullopt, req.bounds);
    if (!pass1) {
        return detail::fail_at(SynthesisStage::lower_observer);
    }
    auto joint = synth_upper_feedback(sys.A, sys.B, sys.C, pass1->lambda, lower_opts, req.bounds);
    if (!joint) {
        return detail::fail_at(SynthesisStage::coupling);
    }
    for (int round = 0; round < req.refinements; ++round) {
        ObserverOptions refresh = lower_opts;
        refresh.coupled_BKu = sys.B * joint->K_upper;
        const auto rescaled = synth_observer_gain(sys.A, sys.C, refresh, std::nullopt, req.bounds);
        if (!rescaled) {
            break;
        }
        auto next = synth_upper_feedback(sys.A, sys.B, sys.C, rescaled->lambda, lower_opts, req.bounds);
        if (!next || next->lower.margin <= joint->lower.margin + 1e-12) {
            break;
        }
        joint = std::move(next);
    }

    const auto upper = synth_observer_gain(sys.A, sys.C, detail::upper_observer_options(sys, noise), std::nullopt,
                                           req.bounds);
    if (!upper) {
        return detail::fail_at(SynthesisStage::upper_observer);
    }
    cert.lambda_lower = joint->lower.lambda;
    cert.lambda_upper = upper->lambda;
    cert.lower_margin = joint->lower.margin;
    cert.upper_margin = upper->margin;
    GainSet g{upper->L, joint->lower.L, joint->K_upper, feedback->K - joint->K_upper};
    return detail::finish(req, std::move(g), std::move(cert));
}

// ---------------------------------------------------------------------------
// Necessity witnesses
// ---------------------------------------------------------------------------

struct Counterexample {
    ConeState point; ///< inside the ordered cone
    ConeState image; ///< one step of the extended closed loop
    double exit = 0.0; ///< cone_violation(image), > 0
};

/**
 * A point of the ordered cone whose image under the extended closed loop
 * leaves the cone, built from the most negative entry (i, j) of the violated
 * condition's matrix. Returns nullopt when the condition holds at `tol`.
 * The point is scaled so that the exit is at least 1.
 */
inline std::optional<Counterexample> find_necessity_counterexample(const PositiveSystem& sys, const GainSet& g,
                                                                   ConditionId violated,
                                                                   double tol = kDefaultNonnegTol) {
    if (std::find(kInvarianceConditions.begin(), kInvarianceConditions.end(), violated) ==
        kInvarianceConditions.end()) {
        throw Error("find_necessity_counterexample: " + std::string(key(violated)) +
                    " is not a cone-invariance condition");
    }
    const Matrix M = condition_matrix(sys, g, violated);
    std::size_t wi = 0, wj = 0;
    for (std::size_t i = 0; i < M.rows(); ++i) {
        for (std::size_t j = 0; j < M.cols(); ++j) {
            if (M(i, j) < M(wi, wj)) {
                wi = i;
                wj = j;
            }
        }
    }
    if (M(wi, wj) >= -tol) {
        return std::nullopt;
    }

    const std::size_t n = sys.states();
    Vector unit(n, 0.0);
    unit[wj] = 1.0;
    const Vector zero(n, 0.0);

    ConeState c;
    switch (violated) {
    case ConditionId::closed_loop_nonneg: // no estimation error at all
        c = {unit, unit, unit};
        break;
    case ConditionId::upper_feedback_loop_nonneg: // upper estimate exact, lower estimate at zero
    case ConditionId::lower_error_nonneg:
        c = {unit, unit, zero};
        break;
    case ConditionId::upper_feedback_nonneg: { // lower estimate exact, large upper error along column j
        const Matrix closed = condition_matrix(sys, g, ConditionId::closed_loop_nonneg);
        const double ratio = (closed * unit)[wi] / M(wi, wj);
        const double scale = (1.0 + std::abs(ratio)) * 10.0;
        Vector upper = unit;
        upper[wj] += scale;
        c = {unit, upper, unit};
        break;
    }
    case ConditionId::upper_error_nonneg: // pure upper error
        c = {zero, unit, zero};
        break;
    case ConditionId::lower_coupling_nonneg: // lower estimate at zero, upper estimate exact
        c = {unit, unit, zero};
        break;
    default:
        break;
    }

    const Matrix ext = build_extended_closed_loop(sys, g);
    ConeState image = step_extended(ext, c);
    double exit = cone_violation(image);
    if (!(exit > 0.0)) {
        return std::nullopt;
    }
    if (exit < 1.0) {
        c = c.scaled(1.0 / exit);
        image = step_extended(ext, c);
        exit = cone_violation(image);
    }
    return Counterexample{std::move(c), std::move(image), exit};
}

} // namespace posobs
