#pragma once

// Reference plants and gains used by the repro command and the tests.

#include <optional>
#include <string_view>

#include "posobs/scenario.hpp"

namespace posobs::fixtures {

inline PositiveSystem example1_system() {
    PositiveSystem s;
    s.A = Matrix{{1.2, 0.2}, {0.0, 0.2}};
    s.B = Matrix::identity(2);
    s.C = Matrix{{1.0, -1.0}};
    return s;
}

inline GainSet example1_gains() {
    return {Matrix{{0.3}, {0.0}}, Matrix{{0.3}, {0.0}}, Matrix{{0.0, 0.3}, {0.0, 0.0}},
            Matrix{{-0.3, 0.0}, {0.0, 0.0}}};
}

/// Same plant with a negative off-diagonal entry; needs positivization.
inline PositiveSystem example2_system() {
    PositiveSystem s = example1_system();
    s.A = Matrix{{1.2, 0.2}, {-0.1, 0.2}};
    s.positivization_mode = true;
    return s;
}

inline GainSet example2_gains() {
    return {Matrix{{0.3}, {-0.1}}, Matrix{{0.3}, {-0.1}}, Matrix{{0.0, 0.3}, {0.1, 0.0}},
            Matrix{{-0.3, 0.0}, {0.0, 0.0}}};
}

inline PositiveSystem example3_system() {
    PositiveSystem s;
    s.A = Matrix{{0.9, 0.2}, {0.5, 0.2}};
    s.B = Matrix::identity(2);
    s.C = Matrix{{1.0, -1.0}};
    s.E = Matrix{{0.02, 0.0}, {0.0, 0.02}};
    s.F = Matrix{{0.06}};
    return s;
}

inline GainSet example3_gains() {
    return {Matrix{{0.6}, {0.5}}, Matrix{{0.2}, {0.2}}, Matrix{{0.0, 0.3}, {0.0, 0.2}},
            Matrix{{-0.3, 0.0}, {0.0, 0.0}}};
}

/// One-state noisy plant whose expected fixed point is known in closed form.
inline PositiveSystem scalar_system() {
    PositiveSystem s;
    s.A = Matrix{{1.2}};
    s.B = Matrix{{1.0}};
    s.C = Matrix{{1.0}};
    s.E = Matrix{{0.02}};
    s.F = Matrix{{0.06}};
    return s;
}

inline GainSet scalar_gains() { return {Matrix{{0.5}}, Matrix{{0.25}}, Matrix{{0.0}}, Matrix{{-0.6}}}; }

inline Scenario make_scenario(PositiveSystem sys, GainSet g, std::size_t T) {
    Scenario sc;
    sc.system = std::move(sys);
    sc.gains = std::move(g);
    SimulationBlock sim;
    sim.T = T;
    sc.simulation = sim;
    sc.synthesis = SynthesisBlock{};
    return sc;
}

/// Named reference scenario: ex1, ex2, ex3 or scalar.
inline std::optional<Scenario> by_name(std::string_view name) {
    if (name == "ex1") return make_scenario(example1_system(), example1_gains(), 50);
    if (name == "ex2") return make_scenario(example2_system(), example2_gains(), 50);
    if (name == "ex3") {
        auto sc = make_scenario(example3_system(), example3_gains(), 100);
        sc.synthesis->include_noise_conditions = true;
        return sc;
    }
    if (name == "scalar") return make_scenario(scalar_system(), scalar_gains(), 100);
    return std::nullopt;
}

} // namespace posobs::fixtures
