/// @file manifest.hpp
/// @brief Resolved command configuration and its JSON manifest.

#pragma once

#include "dlss/errors.hpp"
#include "dlss/fisher.hpp"
#include "dlss/io.hpp"
#include "dlss/lab.hpp"
#include "dlss/stepper.hpp"

#include <json.hpp>

#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace dlss {

inline constexpr const char* tool_version = "0.1.0";

/// Everything a command needs; a manifest is this plus provenance fields.
struct RunSettings {
    std::string command = "run";  ///< run | convergence | consistency
    std::string preset;

    int dim = 1;
    int n = 100;
    double length = 1.0;
    Scheme scheme = Scheme::explicit_implicit;
    double dt = 1e-7;
    double t_end = 7.2e-4;
    std::string ic = "cosine:eps=0.001,m=8";
    std::vector<double> report;
    EnergyVariant energy = EnergyVariant::forward;
    double tol = 1e-10;

    std::vector<int> ns;
    double dt_coeff = 1.6e-8;

    int levels = 5;
    int n0 = 16;
    double dt0 = 1e-5;
    double t_eval = 0.0;
    std::string profile = "cosine";

    std::string note;

    SchemeConfig scheme_config() const {
        SchemeConfig c;
        c.scheme = scheme;
        c.dt = dt;
        c.energy = energy;
        c.newton.tol = tol;
        return c;
    }

    friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

namespace detail {

/// Parses "key=value,key=value".
inline std::vector<std::pair<std::string, std::string>> parse_kv(std::string_view s) {
    std::vector<std::pair<std::string, std::string>> out;
    if (s.empty()) return out;
    for (auto part : io::split(s)) {
        const auto eq = part.find('=');
        if (eq == std::string_view::npos) throw InvalidArgument("expected key=value, got '" + std::string(part) + "'");
        out.emplace_back(std::string(part.substr(0, eq)), std::string(part.substr(eq + 1)));
    }
    return out;
}

}  // namespace detail

/// "cosine:eps=..,m=.." or "csv:PATH" (a snapshot file).
inline InitialCondition parse_initial_condition(const std::string& text, const GridSpec& grid) {
    if (text.rfind("cosine", 0) == 0) {
        double eps = 0.001, m = 8.0;
        const auto colon = text.find(':');
        if (colon != std::string::npos) {
            for (const auto& [k, v] : detail::parse_kv(std::string_view(text).substr(colon + 1))) {
                if (k == "eps") eps = io::parse_real(v);
                else if (k == "m") m = io::parse_real(v);
                else throw InvalidArgument("unknown cosine parameter '" + k + "'");
            }
        } else if (text != "cosine") {
            throw InvalidArgument("malformed initial condition '" + text + "'");
        }
        return InitialCondition::cosine(eps, m);
    }
    if (text.rfind("csv:", 0) == 0) {
        const std::string path = text.substr(4);
        std::ifstream in(path);
        if (!in) throw InvalidArgument("cannot open initial condition file '" + path + "'");
        const CellField u = io::read_snapshot(in);
        // Compare by coordinates: the file pins L only up to lengths with equal cell positions.
        bool same = u.grid().dim() == grid.dim() && u.grid().n() == grid.n();
        for (int i = 0; same && i < grid.n(); ++i) same = u.grid().coord(i) == grid.coord(i);
        if (!same)
            throw InvalidArgument("initial condition file '" + path + "' does not match the requested grid");
        return InitialCondition::custom(CellField(grid, std::vector<double>(u.values().begin(), u.values().end())));
    }
    throw InvalidArgument("unknown initial condition '" + text + "'");
}

/// "cosine[:scale=..]" or "constant:c=..".
inline ManufacturedSolution parse_profile(const std::string& text, double length) {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const auto params = colon == std::string::npos ? std::vector<std::pair<std::string, std::string>>{}
                                                   : detail::parse_kv(std::string_view(text).substr(colon + 1));
    if (kind == "cosine") {
        double scale = 1.0;
        for (const auto& [k, v] : params) {
            if (k == "scale") scale = io::parse_real(v);
            else throw InvalidArgument("unknown cosine profile parameter '" + k + "'");
        }
        if (!(scale > 0.0)) throw InvalidArgument("profile scale must be positive");
        return ManufacturedSolution::cosine_decay(scale, length);
    }
    if (kind == "constant") {
        double c = 1.0;
        for (const auto& [k, v] : params) {
            if (k == "c") c = io::parse_real(v);
            else throw InvalidArgument("unknown constant profile parameter '" + k + "'");
        }
        return ManufacturedSolution::constant(c);
    }
    throw InvalidArgument("unknown manufactured profile '" + text + "'");
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

/// Manifest document. The timestamp is null unless one is passed, so that identical
/// settings give identical files.
inline nlohmann::ordered_json to_manifest(const RunSettings& s,
                                          const std::optional<std::string>& timestamp = std::nullopt) {
    nlohmann::ordered_json j;
    j["tool"] = "dlss";
    j["version"] = tool_version;
    j["command"] = s.command;
    j["preset"] = s.preset.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(s.preset);
    j["grid"] = {{"dim", s.dim}, {"n", s.n}, {"length", s.length}};
    const SchemeConfig c = s.scheme_config();
    j["scheme"] = {{"name", std::string(to_string(s.scheme))},
                   {"dt", s.dt},
                   {"energy", std::string(to_string(s.energy))},
                   {"newton_tol", c.newton.tol},
                   {"newton_max_iters", c.newton.max_iters},
                   {"newton_min_damping", c.newton.min_damping},
                   {"positivity_margin", c.newton.positivity_margin},
                   {"substep_on_failure", c.substep_on_failure},
                   {"max_halvings", c.max_halvings},
                   {"diagnostic_tol", c.diagnostic_tol}};
    j["initial_condition"] = s.ic;
    j["t_end"] = s.t_end;
    j["report"] = s.report;
    if (s.command == "convergence") j["convergence"] = {{"ns", s.ns}, {"dt_coeff", s.dt_coeff}};
    if (s.command == "consistency")
        j["consistency"] = {{"levels", s.levels}, {"n0", s.n0}, {"dt0", s.dt0},
                            {"t", s.t_eval},      {"profile", s.profile}};
    j["note"] = s.note.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(s.note);
    j["timestamp"] = timestamp ? nlohmann::ordered_json(*timestamp) : nlohmann::ordered_json(nullptr);
    return j;
}

inline RunSettings from_manifest(const nlohmann::json& j) {
    try {
        if (j.at("tool") != "dlss") throw InvalidArgument("manifest was not written by dlss");
        RunSettings s;
        s.command = j.at("command").get<std::string>();
        if (j.contains("preset") && !j["preset"].is_null()) s.preset = j["preset"].get<std::string>();
        const auto& g = j.at("grid");
        s.dim = g.at("dim").get<int>();
        s.n = g.at("n").get<int>();
        s.length = g.at("length").get<double>();
        const auto& sc = j.at("scheme");
        s.scheme = parse_scheme(sc.at("name").get<std::string>());
        s.dt = sc.at("dt").get<double>();
        s.energy = parse_energy_variant(sc.at("energy").get<std::string>());
        s.tol = sc.at("newton_tol").get<double>();
        s.ic = j.at("initial_condition").get<std::string>();
        s.t_end = j.at("t_end").get<double>();
        s.report = j.at("report").get<std::vector<double>>();
        if (j.contains("convergence")) {
            s.ns = j["convergence"].at("ns").get<std::vector<int>>();
            s.dt_coeff = j["convergence"].at("dt_coeff").get<double>();
        }
        if (j.contains("consistency")) {
            const auto& k = j["consistency"];
            s.levels = k.at("levels").get<int>();
            s.n0 = k.at("n0").get<int>();
            s.dt0 = k.at("dt0").get<double>();
            s.t_eval = k.at("t").get<double>();
            s.profile = k.at("profile").get<std::string>();
        }
        if (j.contains("note") && !j["note"].is_null()) s.note = j["note"].get<std::string>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed manifest: ") + e.what());
    }
}

}  // namespace dlss
