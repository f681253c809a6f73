#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "posobs/conditions.hpp"
#include "posobs/cone.hpp"
#include "posobs/eigen.hpp"
#include "posobs/error.hpp"
#include "posobs/matrix.hpp"
#include "posobs/solve.hpp"
#include "posobs/system.hpp"

namespace posobs {

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// SplitMix64; used to expand seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/**
 * xoshiro256** generator. The 256-bit state is filled by four successive
 * SplitMix64 outputs starting from the 64-bit seed. Satisfies
 * UniformRandomBitGenerator.
 */
class Xoshiro256 {
public:
    using result_type = std::uint64_t;

    explicit Xoshiro256(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& w : s_) {
            w = splitmix64(sm);
        }
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4];
};

/// Stream labels for seed derivation.
enum class Stream : std::uint64_t { noise = 1, initial_state = 2 };

/// Seed of run `index` in stream `stream`, a pure function of its arguments.
inline std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index, Stream stream = Stream::noise) {
    std::uint64_t s = parent ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL);
    const std::uint64_t a = splitmix64(s);
    std::uint64_t t = a ^ (index + 0x632be59bd9b4e019ULL);
    return splitmix64(t);
}

struct NoiseConfig {
    double shape = 1.0; ///< gamma shape k; scale is 1/k so the mean is 1
    std::uint64_t seed = 0;
};

/// One draw from Gamma(k, 1/k). For k = 1 this is Exp(1) by inversion.
inline double sample_gamma_unit_mean(const NoiseConfig& cfg, Xoshiro256& rng) {
    if (!(cfg.shape > 0.0)) {
        throw Error("sample_gamma_unit_mean: shape must be positive");
    }
    if (cfg.shape == 1.0) {
        return -std::log1p(-rng.uniform01());
    }
    std::gamma_distribution<double> dist(cfg.shape, 1.0 / cfg.shape);
    return dist(rng);
}

/// Entries drawn uniformly from [0, 1) on the dedicated initial-state stream.
inline Vector uniform_initial_state(std::size_t n, std::uint64_t seed) {
    Xoshiro256 rng(child_seed(seed, 0, Stream::initial_state));
    Vector v(n);
    for (double& e : v) {
        e = rng.uniform01();
    }
    return v;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

struct TrajectoryStep {
    Vector x;
    Vector x_upper;
    Vector x_lower;
    Vector u;
    Vector y;
};

/// Records for t = 0..T.
struct Trajectory {
    std::vector<TrajectoryStep> steps;

    std::size_t horizon() const noexcept { return steps.empty() ? 0 : steps.size() - 1; }
};

namespace detail {

inline void require_initial(const PositiveSystem& sys, const ConeState& init) {
    const std::size_t n = sys.states();
    if (init.x.size() != n || init.x_upper.size() != n || init.x_lower.size() != n) {
        throw DimensionError("simulate: initial vectors must have length " + std::to_string(n));
    }
}

/// Propagates the plant and both observers; `draw` supplies (w, v) per step or nothing.
template <typename NoiseDraw>
Trajectory propagate(const PositiveSystem& sys, const GainSet& g, const ConeState& init, std::size_t T,
                     NoiseDraw&& draw) {
    sys.require_dimensions();
    g.require_dimensions(sys);
    require_initial(sys, init);

    const Matrix Au = sys.A - g.L_upper * sys.C;
    const Matrix Al = sys.A - g.L_lower * sys.C;

    Trajectory tr;
    tr.steps.reserve(T + 1);
    Vector x = init.x, xu = init.x_upper, xl = init.x_lower;
    for (std::size_t t = 0;; ++t) {
        Vector u = add(g.K_lower * xl, g.K_upper * xu);
        Vector y = sys.C * x;
        Vector w;
        draw(y, w);
        tr.steps.push_back({x, xu, xl, u, y});
        if (t == T) {
            break;
        }
        const Vector Bu = sys.B * u;
        Vector xn = add(sys.A * x, Bu);
        if (!w.empty()) {
            xn = add(xn, *sys.E * w);
        }
        xu = add(add(Au * xu, g.L_upper * y), Bu);
        xl = add(add(Al * xl, g.L_lower * y), Bu);
        x = std::move(xn);
    }
    return tr;
}

} // namespace detail

/// Noise-free closed loop with u = Kl x_lower + Ku x_upper.
inline Trajectory simulate_deterministic(const PositiveSystem& sys, const GainSet& g, const ConeState& init,
                                         std::size_t T) {
    return detail::propagate(sys, g, init, T, [](Vector&, Vector&) {});
}

/// Noisy closed loop driven by an explicit generator; w and v are i.i.d. unit-mean gamma draws.
inline Trajectory simulate_noisy(const PositiveSystem& sys, const GainSet& g, const ConeState& init, std::size_t T,
                                 const NoiseConfig& cfg, Xoshiro256& rng) {
    if (!sys.has_noise()) {
        throw MissingNoiseModelError("simulate_noisy: system has no E/F noise model");
    }
    const std::size_t qw = sys.E->cols();
    const std::size_t qv = sys.F->cols();
    const Matrix& F = *sys.F;
    return detail::propagate(sys, g, init, T, [&](Vector& y, Vector& w) {
        Vector v(qv);
        for (double& e : v) {
            e = sample_gamma_unit_mean(cfg, rng);
        }
        y = add(y, F * v);
        w.resize(qw);
        for (double& e : w) {
            e = sample_gamma_unit_mean(cfg, rng);
        }
    });
}

/// Single noisy run; uses the same seed as run 0 of monte_carlo_mean.
inline Trajectory simulate_noisy(const PositiveSystem& sys, const GainSet& g, const ConeState& init, std::size_t T,
                                 const NoiseConfig& cfg) {
    Xoshiro256 rng(child_seed(cfg.seed, 0));
    return simulate_noisy(sys, g, init, T, cfg, rng);
}

// ---------------------------------------------------------------------------
// Expectation
// ---------------------------------------------------------------------------

struct ExpectedState {
    Vector X;     ///< (x, x_upper, x_lower)
    Vector X_e;   ///< (x, e_upper, e_lower)
    bool in_cone = false;
    bool attracting = false;
    double rho_G = 0.0;
    double residual = 0.0; ///< ||(I - G) X_e - bias||_inf
};

inline constexpr double kConeTol = 1e-9;

/// Fixed point of the expected error recursion X_e+ = G X_e + bias.
inline ExpectedState expected_fixed_point(const PositiveSystem& sys, const GainSet& g) {
    if (!sys.has_noise()) {
        throw MissingNoiseModelError("expected_fixed_point: system has no E/F noise model");
    }
    const ErrorDynamics ed = build_error_dynamics(sys, g);
    const std::size_t n = sys.states();
    const Matrix I_minus_G = Matrix::identity(3 * n) - ed.G;

    ExpectedState es;
    const auto lambdas = eigenvalues(ed.G);
    for (const auto& l : lambdas) {
        es.rho_G = std::max(es.rho_G, std::abs(l));
    }
    try {
        es.X_e = solve_linear(I_minus_G, ed.bias);
    } catch (const SingularMatrixError&) {
        double closest = kInf;
        for (const auto& l : lambdas) {
            closest = std::min(closest, std::abs(l - 1.0));
        }
        throw SingularMatrixError("expected_fixed_point: I - G is singular; closest eigenvalue of G lies " +
                                  format_number(closest) + " from 1");
    }
    es.residual = norm_inf(sub(I_minus_G * es.X_e, ed.bias));

    es.X.resize(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        es.X[i] = es.X_e[i];
        es.X[n + i] = es.X_e[i] + es.X_e[n + i];
        es.X[2 * n + i] = es.X_e[i] - es.X_e[2 * n + i];
    }
    es.in_cone = cone_violation(ConeState::unstack(es.X)) <= kConeTol;
    es.attracting = es.rho_G < 1.0 - kSchurTol;
    return es;
}

struct EnsembleMean {
    Trajectory mean;                   ///< per-step ensemble means of x, bounds, u, y
    std::vector<ConeState> std_error;  ///< per-step standard errors of x and the bounds
    std::size_t runs = 0;
};

namespace detail {

/// Welford accumulator over flattened per-step vectors.
struct StepMoments {
    std::size_t count = 0;
    std::vector<Vector> mean;
    std::vector<Vector> m2;

    void add(const std::vector<Vector>& sample) {
        if (count == 0) {
            mean.assign(sample.size(), {});
            m2.assign(sample.size(), {});
            for (std::size_t t = 0; t < sample.size(); ++t) {
                mean[t].assign(sample[t].size(), 0.0);
                m2[t].assign(sample[t].size(), 0.0);
            }
        }
        ++count;
        for (std::size_t t = 0; t < sample.size(); ++t) {
            for (std::size_t k = 0; k < sample[t].size(); ++k) {
                const double d = sample[t][k] - mean[t][k];
                mean[t][k] += d / static_cast<double>(count);
                m2[t][k] += d * (sample[t][k] - mean[t][k]);
            }
        }
    }

    /// Chan et al. pairwise combination.
    void merge(const StepMoments& o) {
        if (o.count == 0) {
            return;
        }
        if (count == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(count), nb = static_cast<double>(o.count);
        const double n = na + nb;
        for (std::size_t t = 0; t < mean.size(); ++t) {
            for (std::size_t k = 0; k < mean[t].size(); ++k) {
                const double d = o.mean[t][k] - mean[t][k];
                mean[t][k] += d * nb / n;
                m2[t][k] += o.m2[t][k] + d * d * na * nb / n;
            }
        }
        count += o.count;
    }
};

inline std::vector<Vector> flatten(const Trajectory& tr) {
    std::vector<Vector> out;
    out.reserve(tr.steps.size());
    for (const auto& s : tr.steps) {
        Vector v = s.x;
        v.insert(v.end(), s.x_upper.begin(), s.x_upper.end());
        v.insert(v.end(), s.x_lower.begin(), s.x_lower.end());
        v.insert(v.end(), s.u.begin(), s.u.end());
        v.insert(v.end(), s.y.begin(), s.y.end());
        out.push_back(std::move(v));
    }
    return out;
}

inline constexpr std::size_t kRunsPerBlock = 64;

} // namespace detail

/**
 * Ensemble mean of N independent noisy runs. Run r is seeded with
 * child_seed(cfg.seed, r). Runs are grouped in fixed blocks of 64 that may
 * execute in parallel; blocks are combined in index order, so the result does
 * not depend on the thread count.
 */
inline EnsembleMean monte_carlo_mean(const PositiveSystem& sys, const GainSet& g, const ConeState& init,
                                     std::size_t T, std::size_t N, const NoiseConfig& cfg,
                                     unsigned threads = std::thread::hardware_concurrency()) {
    if (N == 0) {
        throw Error("monte_carlo_mean: need at least one run");
    }
    if (!sys.has_noise()) {
        throw MissingNoiseModelError("monte_carlo_mean: system has no E/F noise model");
    }
    const std::size_t blocks = (N + detail::kRunsPerBlock - 1) / detail::kRunsPerBlock;
    std::vector<detail::StepMoments> partial(blocks);
    auto run_block = [&](std::size_t b) {
        const std::size_t first = b * detail::kRunsPerBlock;
        const std::size_t last = std::min(N, first + detail::kRunsPerBlock);
        for (std::size_t r = first; r < last; ++r) {
            Xoshiro256 rng(child_seed(cfg.seed, r));
            partial[b].add(detail::flatten(simulate_noisy(sys, g, init, T, cfg, rng)));
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(threads, 1, blocks);
    if (workers == 1) {
        for (std::size_t b = 0; b < blocks; ++b) {
            run_block(b);
        }
    } else {
        std::vector<std::future<void>> jobs;
        for (std::size_t w = 0; w < workers; ++w) {
            jobs.push_back(std::async(std::launch::async, [&, w] {
                for (std::size_t b = w; b < blocks; b += workers) {
                    run_block(b);
                }
            }));
        }
        for (auto& j : jobs) {
            j.get();
        }
    }

    detail::StepMoments total;
    for (const auto& p : partial) {
        total.merge(p);
    }

    const std::size_t n = sys.states(), m = sys.inputs(), p = sys.outputs();
    EnsembleMean em;
    em.runs = N;
    for (std::size_t t = 0; t <= T; ++t) {
        const Vector& mu = total.mean[t];
        auto slice = [&](std::size_t off, std::size_t len) {
            return Vector(mu.begin() + static_cast<std::ptrdiff_t>(off),
                          mu.begin() + static_cast<std::ptrdiff_t>(off + len));
        };
        em.mean.steps.push_back({slice(0, n), slice(n, n), slice(2 * n, n), slice(3 * n, m), slice(3 * n + m, p)});

        Vector se(3 * n, 0.0);
        if (N > 1) {
            for (std::size_t k = 0; k < 3 * n; ++k) {
                const double var = total.m2[t][k] / static_cast<double>(N - 1);
                se[k] = std::sqrt(std::max(var, 0.0) / static_cast<double>(N));
            }
        }
        em.std_error.push_back(ConeState::unstack(se));
    }
    return em;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct OrderingViolation {
    std::size_t step = 0;
    std::size_t coordinate = 0; ///< 1-based
    double magnitude = 0.0;
    std::string kind;           ///< "x_lower > x", "x > x_upper" or "x_lower < 0"

    std::string describe() const {
        return "step " + std::to_string(step) + ", coordinate " + std::to_string(coordinate) + ": " + kind + " by " +
               format_number(magnitude);
    }
};

/// First step/coordinate where 0 <= x_lower <= x <= x_upper fails by more than tol.
inline std::optional<OrderingViolation> check_ordering(const Trajectory& tr, double tol = kConeTol) {
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
        const auto& s = tr.steps[t];
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (s.x_lower[i] - s.x[i] > tol) {
                return OrderingViolation{t, i + 1, s.x_lower[i] - s.x[i], "x_lower > x"};
            }
            if (s.x[i] - s.x_upper[i] > tol) {
                return OrderingViolation{t, i + 1, s.x[i] - s.x_upper[i], "x > x_upper"};
            }
            if (-s.x_lower[i] > tol) {
                return OrderingViolation{t, i + 1, -s.x_lower[i], "x_lower < 0"};
            }
        }
    }
    return std::nullopt;
}

} // namespace posobs
