#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

#include "json.hpp"

#include "posobs/cone.hpp"
#include "posobs/error.hpp"
#include "posobs/matrix.hpp"
#include "posobs/sim.hpp"
#include "posobs/synthesis.hpp"
#include "posobs/system.hpp"

namespace posobs {

/// Malformed scenario input; the message names the line or field.
class ScenarioError : public Error {
public:
    using Error::Error;
};

enum class InitialPreset { uniform01, ones, zeros };

using InitialSpec = std::variant<InitialPreset, Vector>;

struct SimulationBlock {
    std::size_t T = 50;
    std::size_t N = 1;
    std::uint64_t seed = 1;
    double shape = 1.0;
    InitialSpec x0 = InitialPreset::uniform01;
    InitialSpec xbar0 = InitialPreset::ones;
    InitialSpec xlow0 = InitialPreset::zeros;

    friend bool operator==(const SimulationBlock&, const SimulationBlock&) = default;
};

struct SynthesisBlock {
    SynthesisMode mode = SynthesisMode::coupled;
    double eps = kMinMargin;
    double D = 1e4;
    bool include_noise_conditions = false;

    friend bool operator==(const SynthesisBlock&, const SynthesisBlock&) = default;
};

struct Scenario {
    PositiveSystem system;
    std::optional<GainSet> gains;
    std::optional<SimulationBlock> simulation;
    std::optional<SynthesisBlock> synthesis;
};

namespace detail {

using nlohmann::json;

inline const char* preset_name(InitialPreset p) {
    switch (p) {
    case InitialPreset::uniform01: return "uniform01";
    case InitialPreset::ones: return "ones";
    case InitialPreset::zeros: return "zeros";
    }
    return "?";
}

inline double number_at(const json& j, const std::string& path) {
    if (!j.is_number()) {
        throw ScenarioError(path + ": expected a number");
    }
    return j.get<double>();
}

inline Matrix matrix_at(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) {
        throw ScenarioError(path + ": expected a non-empty array of rows");
    }
    const std::size_t rows = j.size();
    std::size_t cols = 0;
    Vector data;
    for (std::size_t i = 0; i < rows; ++i) {
        const auto& r = j[i];
        const std::string rp = path + "[" + std::to_string(i) + "]";
        if (!r.is_array()) {
            throw ScenarioError(rp + ": expected a row array");
        }
        if (i == 0) {
            cols = r.size();
        } else if (r.size() != cols) {
            throw ScenarioError(rp + ": row has " + std::to_string(r.size()) + " entries, expected " +
                                std::to_string(cols));
        }
        for (std::size_t k = 0; k < r.size(); ++k) {
            data.push_back(number_at(r[k], rp + "[" + std::to_string(k) + "]"));
        }
    }
    return Matrix(rows, cols, std::move(data));
}

inline json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const auto r = m.row(i);
        rows.push_back(json(Vector(r.begin(), r.end())));
    }
    return rows;
}

inline const json& require(const json& obj, const char* field, const std::string& path) {
    if (!obj.contains(field)) {
        throw ScenarioError(path + ": missing field '" + field + "'");
    }
    return obj.at(field);
}

inline InitialSpec initial_at(const json& j, const std::string& path) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        for (auto p : {InitialPreset::uniform01, InitialPreset::ones, InitialPreset::zeros}) {
            if (s == preset_name(p)) {
                return p;
            }
        }
        throw ScenarioError(path + ": unknown preset '" + s + "' (uniform01, ones, zeros)");
    }
    if (!j.is_array()) {
        throw ScenarioError(path + ": expected a preset name or an array of numbers");
    }
    Vector v;
    for (std::size_t k = 0; k < j.size(); ++k) {
        v.push_back(number_at(j[k], path + "[" + std::to_string(k) + "]"));
    }
    return v;
}

inline json initial_json(const InitialSpec& s) {
    if (const auto* p = std::get_if<InitialPreset>(&s)) {
        return preset_name(*p);
    }
    return json(std::get<Vector>(s));
}

inline std::size_t count_at(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<long long>() < 0) {
        throw ScenarioError(path + ": expected a nonnegative integer");
    }
    return j.get<std::size_t>();
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& path) {
    for (const auto& [k, v] : obj.items()) {
        bool ok = false;
        for (const char* name : known) {
            ok = ok || k == name;
        }
        if (!ok) {
            throw ScenarioError(path + ": unknown field '" + k + "'");
        }
    }
}

inline std::size_t line_of(const std::string& text, std::size_t byte) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        line += text[i] == '\n' ? 1 : 0;
    }
    return line;
}

} // namespace detail

inline GainSet parse_gains(const nlohmann::json& g, const std::string& path = "gains") {
    using namespace detail;
    if (!g.is_object()) {
        throw ScenarioError(path + ": expected an object");
    }
    reject_unknown(g, {"L_upper", "L_lower", "K_upper", "K_lower"}, path);
    return {matrix_at(require(g, "L_upper", path), path + ".L_upper"),
            matrix_at(require(g, "L_lower", path), path + ".L_lower"),
            matrix_at(require(g, "K_upper", path), path + ".K_upper"),
            matrix_at(require(g, "K_lower", path), path + ".K_lower")};
}

inline nlohmann::json gains_json(const GainSet& g) {
    using detail::matrix_json;
    return {{"L_upper", matrix_json(g.L_upper)},
            {"L_lower", matrix_json(g.L_lower)},
            {"K_upper", matrix_json(g.K_upper)},
            {"K_lower", matrix_json(g.K_lower)}};
}

/// Parses and dimension-checks a JSON scenario.
inline Scenario parse_scenario(const std::string& text) {
    using namespace detail;
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError("line " + std::to_string(line_of(text, e.byte == 0 ? 0 : e.byte - 1)) +
                            ": invalid JSON (" + e.what() + ")");
    }
    if (!root.is_object()) {
        throw ScenarioError("scenario: top level must be an object");
    }
    reject_unknown(root, {"system", "gains", "simulation", "synthesis"}, "scenario");

    Scenario sc;
    const json& s = require(root, "system", "scenario");
    if (!s.is_object()) {
        throw ScenarioError("system: expected an object");
    }
    reject_unknown(s, {"A", "B", "C", "E", "F", "positivization_mode"}, "system");
    sc.system.A = matrix_at(require(s, "A", "system"), "system.A");
    sc.system.B = matrix_at(require(s, "B", "system"), "system.B");
    sc.system.C = matrix_at(require(s, "C", "system"), "system.C");
    if (s.contains("E")) {
        sc.system.E = matrix_at(s["E"], "system.E");
    }
    if (s.contains("F")) {
        sc.system.F = matrix_at(s["F"], "system.F");
    }
    if (s.contains("positivization_mode")) {
        if (!s["positivization_mode"].is_boolean()) {
            throw ScenarioError("system.positivization_mode: expected true or false");
        }
        sc.system.positivization_mode = s["positivization_mode"].get<bool>();
    }
    try {
        sc.system.require_dimensions();
    } catch (const DimensionError& e) {
        throw ScenarioError(e.what());
    }

    if (root.contains("gains")) {
        sc.gains = parse_gains(root["gains"]);
        try {
            sc.gains->require_dimensions(sc.system);
        } catch (const DimensionError& e) {
            throw ScenarioError(e.what());
        }
    }

    if (root.contains("simulation")) {
        const json& j = root["simulation"];
        if (!j.is_object()) {
            throw ScenarioError("simulation: expected an object");
        }
        reject_unknown(j, {"T", "N", "seed", "shape", "x0", "xbar0", "xlow0"}, "simulation");
        SimulationBlock b;
        if (j.contains("T")) b.T = count_at(j["T"], "simulation.T");
        if (j.contains("N")) b.N = count_at(j["N"], "simulation.N");
        if (j.contains("seed")) {
            if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0)) {
                throw ScenarioError("simulation.seed: expected a nonnegative integer");
            }
            b.seed = j["seed"].get<std::uint64_t>();
        }
        if (j.contains("shape")) b.shape = number_at(j["shape"], "simulation.shape");
        if (!(b.shape > 0.0)) {
            throw ScenarioError("simulation.shape: must be positive");
        }
        if (b.N == 0) {
            throw ScenarioError("simulation.N: must be at least 1");
        }
        const std::size_t n = sc.system.states();
        auto init = [&](const char* name, InitialSpec& dst) {
            if (!j.contains(name)) {
                return;
            }
            dst = initial_at(j[name], std::string("simulation.") + name);
            if (const auto* v = std::get_if<Vector>(&dst); v && v->size() != n) {
                throw ScenarioError(std::string("simulation.") + name + ": expected " + std::to_string(n) +
                                    " entries");
            }
        };
        init("x0", b.x0);
        init("xbar0", b.xbar0);
        init("xlow0", b.xlow0);
        sc.simulation = b;
    }

    if (root.contains("synthesis")) {
        const json& j = root["synthesis"];
        if (!j.is_object()) {
            throw ScenarioError("synthesis: expected an object");
        }
        reject_unknown(j, {"mode", "eps", "D", "include_noise_conditions"}, "synthesis");
        SynthesisBlock b;
        if (j.contains("mode")) {
            const auto& m = j["mode"];
            const auto mode = m.is_string() ? parse_synthesis_mode(m.get<std::string>()) : std::nullopt;
            if (!mode) {
                throw ScenarioError("synthesis.mode: expected \"thm1\" or \"coupled\"");
            }
            b.mode = *mode;
        }
        if (j.contains("eps")) b.eps = number_at(j["eps"], "synthesis.eps");
        if (j.contains("D")) b.D = number_at(j["D"], "synthesis.D");
        if (j.contains("include_noise_conditions")) {
            if (!j["include_noise_conditions"].is_boolean()) {
                throw ScenarioError("synthesis.include_noise_conditions: expected true or false");
            }
            b.include_noise_conditions = j["include_noise_conditions"].get<bool>();
        }
        if (!(b.eps > 0.0) || !(b.D >= 1.0)) {
            throw ScenarioError("synthesis: eps must be positive and D at least 1");
        }
        sc.synthesis = b;
    }
    return sc;
}

inline nlohmann::json scenario_json(const Scenario& sc) {
    using namespace detail;
    json root;
    json s;
    s["A"] = matrix_json(sc.system.A);
    s["B"] = matrix_json(sc.system.B);
    s["C"] = matrix_json(sc.system.C);
    if (sc.system.E) s["E"] = matrix_json(*sc.system.E);
    if (sc.system.F) s["F"] = matrix_json(*sc.system.F);
    s["positivization_mode"] = sc.system.positivization_mode;
    root["system"] = s;
    if (sc.gains) {
        root["gains"] = gains_json(*sc.gains);
    }
    if (sc.simulation) {
        const auto& b = *sc.simulation;
        root["simulation"] = {{"T", b.T},
                              {"N", b.N},
                              {"seed", b.seed},
                              {"shape", b.shape},
                              {"x0", initial_json(b.x0)},
                              {"xbar0", initial_json(b.xbar0)},
                              {"xlow0", initial_json(b.xlow0)}};
    }
    if (sc.synthesis) {
        const auto& b = *sc.synthesis;
        root["synthesis"] = {{"mode", to_string(b.mode)},
                             {"eps", b.eps},
                             {"D", b.D},
                             {"include_noise_conditions", b.include_noise_conditions}};
    }
    return root;
}

inline std::string serialize_scenario(const Scenario& sc) { return scenario_json(sc).dump(2) + "\n"; }

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ScenarioError(path + ": cannot open file");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_scenario(ss.str());
    } catch (const ScenarioError& e) {
        throw ScenarioError(path + ": " + e.what());
    }
}

/// Resolves presets into concrete initial vectors; uniform01 draws on the initial-state stream of `seed`.
inline ConeState resolve_initial(const SimulationBlock& b, std::size_t n) {
    auto one = [&](const InitialSpec& s) -> Vector {
        if (const auto* v = std::get_if<Vector>(&s)) {
            return *v;
        }
        switch (std::get<InitialPreset>(s)) {
        case InitialPreset::uniform01: return uniform_initial_state(n, b.seed);
        case InitialPreset::ones: return Vector(n, 1.0);
        case InitialPreset::zeros: return Vector(n, 0.0);
        }
        return Vector(n, 0.0);
    };
    return {one(b.x0), one(b.xbar0), one(b.xlow0)};
}

// ---------------------------------------------------------------------------
// CSV and plot script
// ---------------------------------------------------------------------------

inline std::string csv_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Header t,x1,xbar1,xlow1; with `full`, every coordinate as x_i,xbar_i,xlow_i follows.
inline std::string trajectory_csv(const Trajectory& tr, bool full = false) {
    std::ostringstream os;
    os << "t,x1,xbar1,xlow1";
    const std::size_t n = tr.steps.empty() ? 0 : tr.steps.front().x.size();
    if (full) {
        for (std::size_t i = 1; i <= n; ++i) {
            os << ",x_" << i << ",xbar_" << i << ",xlow_" << i;
        }
    }
    os << '\n';
    for (std::size_t t = 0; t < tr.steps.size(); ++t) {
        const auto& s = tr.steps[t];
        os << t << ',' << csv_number(s.x[0]) << ',' << csv_number(s.x_upper[0]) << ',' << csv_number(s.x_lower[0]);
        if (full) {
            for (std::size_t i = 0; i < n; ++i) {
                os << ',' << csv_number(s.x[i]) << ',' << csv_number(s.x_upper[i]) << ','
                   << csv_number(s.x_lower[i]);
            }
        }
        os << '\n';
    }
    return os.str();
}

/// gnuplot script drawing the first state and its bounds from a trajectory CSV.
inline std::string plot_script(const std::string& csv_name, const std::string& png_name) {
    std::ostringstream os;
    os << "# gnuplot " << "script; run: gnuplot <this file>\n"
       << "set datafile separator ','\n"
       << "set terminal pngcairo size 800,600\n"
       << "set output '" << png_name << "'\n"
       << "set xlabel 'Time t'\n"
       << "set ylabel 'Magnitude'\n"
       << "set grid\n"
       << "set key bottom right\n"
       << "plot '" << csv_name << "' using 1:2 skip 1 with lines lw 2 lc rgb '#1f3f8f' title 'x_1', \\\n"
       << "     '' using 1:3 skip 1 with lines dt 2 lc rgb '#8f1f1f' title 'upper / lower estimate', \\\n"
       << "     '' using 1:4 skip 1 with lines dt 2 lc rgb '#8f1f1f' notitle\n";
    return os.str();
}

} // namespace posobs
