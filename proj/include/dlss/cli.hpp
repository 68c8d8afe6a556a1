/// @file cli.hpp
/// @brief The `dlss` command line: run / convergence / consistency subcommands,
/// presets, and output layout. Exit codes: 0 success, 1 solver failure, 2 usage error.

#pragma once

#include "dlss/errors.hpp"
#include "dlss/io.hpp"
#include "dlss/lab.hpp"
#include "dlss/manifest.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace dlss::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_usage = 2;

inline const std::vector<double>& default_report_times() {
    static const std::vector<double> times{0.0, 8e-6, 3.2e-5, 1e-4, 7.2e-4};
    return times;
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"fig2-m1", "fig2-m8", "fig4-2d", "fig3-convergence"};
    return names;
}

/// Settings for a named preset. The trajectory presets use dt = 1e-7, which the
/// reference experiments leave unstated; the manifest note records that.
inline RunSettings preset(const std::string& name) {
    RunSettings s;
    s.preset = name;
    s.scheme = Scheme::explicit_implicit;
    s.energy = EnergyVariant::forward;
    s.t_end = 7.2e-4;
    const std::string dt_note = "time step 1e-7 chosen by this tool; the reference trajectory does not state one";
    if (name == "fig2-m1" || name == "fig2-m8") {
        s.command = "run";
        s.dim = 1;
        s.n = 100;
        s.dt = 1e-7;
        s.ic = name == "fig2-m1" ? "cosine:eps=0.001,m=1" : "cosine:eps=0.001,m=8";
        s.report = default_report_times();
        s.note = dt_note;
    } else if (name == "fig4-2d") {
        s.command = "run";
        s.dim = 2;
        s.n = 64;
        s.dt = 1e-7;
        s.ic = "cosine:eps=0.001,m=8";
        s.report = {0.0, 8e-6, 3.2e-5, 7.2e-4};
        s.note = dt_note;
    } else if (name == "fig3-convergence") {
        s.command = "convergence";
        s.dim = 1;
        s.ic = "cosine:eps=0.001,m=1";
        s.ns = {10, 20, 40, 80, 160};
        s.dt_coeff = 1.6e-8;
    } else {
        throw InvalidArgument("unknown preset '" + name + "'");
    }
    return s;
}

/// Study concurrency: DLSS_THREADS if set to a positive integer, else the hardware count.
inline unsigned study_threads() {
    if (const char* env = std::getenv("DLSS_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return unsigned(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << content;
    if (!f) throw Error("failed writing '" + path.string() + "'");
}

template <class Fn>
void write_with(const std::filesystem::path& path, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    write_file(path, os.str());
}

inline void write_manifest(const std::filesystem::path& dir, const RunSettings& s,
                           const std::optional<std::string>& timestamp) {
    write_file(dir / "manifest.json", to_manifest(s, timestamp).dump(2) + "\n");
}

}  // namespace detail

/// Runs fully resolved settings, writing into `out`.
inline void execute(RunSettings s, const std::filesystem::path& out,
                    const std::optional<std::string>& timestamp, std::ostream& log) {
    std::filesystem::create_directories(out);
    if (s.command == "run") {
        const GridSpec grid(s.dim, s.n, s.length);
        const InitialCondition ic = parse_initial_condition(s.ic, grid);
        const SchemeConfig cfg = s.scheme_config();
        std::vector<double> report = s.report;
        if (std::find(report.begin(), report.end(), s.t_end) == report.end()) report.push_back(s.t_end);
        std::sort(report.begin(), report.end());
        s.report = report;
        const RunResult res = run(ic, grid, cfg, s.t_end, report);
        detail::write_with(out / "trace.csv", [&](std::ostream& os) { io::write_trace(os, res.trace); });
        for (const auto& snap : res.snapshots)
            detail::write_with(out / io::snapshot_filename(snap.t),
                               [&](std::ostream& os) { io::write_snapshot(os, snap.u); });
        detail::write_manifest(out, s, timestamp);
        log << "run: " << res.trace.rows.size() - 1 << " steps, " << res.snapshots.size()
            << " snapshots, min_u " << io::format_real(std::min_element(res.trace.rows.begin(), res.trace.rows.end(),
                                                                         [](const TraceRow& a, const TraceRow& b) {
                                                                             return a.min_u < b.min_u;
                                                                         })->min_u)
            << '\n';
    } else if (s.command == "convergence") {
        const GridSpec probe(s.dim, s.ns.empty() ? 3 : s.ns.front(), s.length);
        const InitialCondition ic = parse_initial_condition(s.ic, probe);
        const unsigned threads = std::min<unsigned>(study_threads(), unsigned(std::max<std::size_t>(1, s.ns.size())));
        const ConvergenceResult res =
            convergence_study(ic, s.dim, s.length, s.scheme_config(), s.ns, s.dt_coeff, s.t_end, threads);
        detail::write_with(out / "convergence.csv", [&](std::ostream& os) { io::write_convergence(os, res.rows); });
        detail::write_manifest(out, s, timestamp);
        for (const auto& r : res.rows)
            log << "N=" << r.n << " l2_error=" << io::format_real(r.l2_error)
                << (r.order ? " order=" + io::format_real(*r.order) : std::string()) << '\n';
    } else if (s.command == "consistency") {
        if (s.dim != 1) throw InvalidArgument("the consistency study is one-dimensional");
        const ManufacturedSolution profile = parse_profile(s.profile, s.length);
        const auto rows = consistency_study(profile, s.n0, s.dt0, s.levels, s.t_eval, s.length, s.energy);
        detail::write_with(out / "consistency.csv", [&](std::ostream& os) { io::write_consistency(os, rows); });
        detail::write_manifest(out, s, timestamp);
        for (const auto& r : rows)
            log << "N=" << r.n << " tau_inf=" << io::format_real(r.tau_inf)
                << (r.ratio ? " ratio=" + io::format_real(*r.ratio) : std::string()) << '\n';
    } else {
        throw InvalidArgument("unknown command '" + s.command + "'");
    }
}

namespace detail {

struct Flags {
    std::string preset, from_manifest, out = "out";
    int dim = 1, n = 100;
    double length = 1.0;
    std::string scheme = "exim", energy = "forward", ic, report;
    double dt = 0, t_end = 0, tol = 0;
    std::vector<int> ns;
    double dt_coeff = 0;
    int levels = 0, n0 = 0;
    double dt0 = 0, t_eval = 0;
    std::string profile;
    bool timestamp = false;
};

inline void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--preset", f.preset, "Reference configuration")->check(CLI::IsMember(preset_names()));
    sub->add_option("--from-manifest", f.from_manifest, "Re-run the settings stored in a manifest.json")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", f.out, "Output directory")->capture_default_str();
    sub->add_option("--dim", f.dim, "Spatial dimension")->check(CLI::IsMember({1, 2}));
    sub->add_option("--n", f.n, "Cells per direction")->check(CLI::Range(3, 1 << 20));
    sub->add_option("--length", f.length, "Period L of the torus")->check(CLI::PositiveNumber);
    sub->add_option("--scheme", f.scheme, "Time stepping scheme")
        ->check(CLI::IsMember({"explicit", "implicit", "linear-m", "exim"}));
    sub->add_option("--energy", f.energy, "Discrete energy variant")
        ->check(CLI::IsMember({"forward", "backward", "symmetric", "central"}));
    sub->add_option("--dt", f.dt, "Time step")->check(CLI::PositiveNumber);
    sub->add_option("--t-end", f.t_end, "Final time")->check(CLI::PositiveNumber);
    sub->add_option("--ic", f.ic, "Initial condition: cosine:eps=E,m=M or csv:PATH");
    sub->add_option("--tol", f.tol, "Newton tolerance (max-norm residual)")->check(CLI::PositiveNumber);
    sub->add_flag("--timestamp", f.timestamp, "Record the wall-clock time in the manifest");
}

inline bool given(const CLI::App* sub, const std::string& name) {
    const CLI::Option* opt = sub->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
}

inline void apply(const CLI::App* sub, const Flags& f, RunSettings& s) {
    if (given(sub, "--dim")) s.dim = f.dim;
    if (given(sub, "--n")) s.n = f.n;
    if (given(sub, "--length")) s.length = f.length;
    if (given(sub, "--scheme")) s.scheme = parse_scheme(f.scheme);
    if (given(sub, "--energy")) s.energy = parse_energy_variant(f.energy);
    if (given(sub, "--dt")) s.dt = f.dt;
    if (given(sub, "--t-end")) s.t_end = f.t_end;
    if (given(sub, "--ic")) s.ic = f.ic;
    if (given(sub, "--tol")) s.tol = f.tol;
    if (given(sub, "--report")) s.report = io::parse_real_list(f.report);
    if (given(sub, "--ns")) s.ns = f.ns;
    if (given(sub, "--dt-coeff")) s.dt_coeff = f.dt_coeff;
    if (given(sub, "--levels")) s.levels = f.levels;
    if (given(sub, "--n0")) s.n0 = f.n0;
    if (given(sub, "--dt0")) s.dt0 = f.dt0;
    if (given(sub, "--t")) s.t_eval = f.t_eval;
    if (given(sub, "--profile")) s.profile = f.profile;
}

inline RunSettings resolve(const CLI::App* sub, const Flags& f, const std::string& command) {
    RunSettings s;
    s.command = command;
    if (command == "convergence") {
        s.ic = "cosine:eps=0.001,m=1";
        s.ns = {10, 20, 40, 80, 160};
    }
    if (!f.preset.empty()) {
        s = preset(f.preset);
        if (s.command != command)
            throw InvalidArgument("preset '" + f.preset + "' belongs to the '" + s.command + "' command");
    }
    if (!f.from_manifest.empty()) {
        std::ifstream in(f.from_manifest);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw InvalidArgument(std::string("malformed manifest: ") + e.what());
        }
        s = from_manifest(j);
        if (s.command != command)
            throw InvalidArgument("manifest belongs to the '" + s.command + "' command");
    }
    const bool explicit_report = given(sub, "--report");
    apply(sub, f, s);
    if (command == "run" && !explicit_report && f.preset.empty() && f.from_manifest.empty()) {
        s.report.clear();
        for (double t : default_report_times())
            if (t <= s.t_end) s.report.push_back(t);
    }
    return s;
}

}  // namespace detail

/// Entry point of the `dlss` executable.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    CLI::App app{"Positivity-preserving, energy-stable solver for the DLSS equation", "dlss"};
    app.require_subcommand(1);
    app.set_version_flag("--version", tool_version);

    detail::Flags run_flags, conv_flags, cons_flags;
    CLI::App* run_cmd = app.add_subcommand("run", "Integrate one trajectory");
    detail::add_common(run_cmd, run_flags);
    run_cmd->add_option("--report", run_flags.report, "Comma-separated snapshot times");

    CLI::App* conv_cmd = app.add_subcommand("convergence", "Grid-refinement study against the finest level");
    detail::add_common(conv_cmd, conv_flags);
    conv_cmd->add_option("--ns", conv_flags.ns, "Grid sizes, strictly increasing")->delimiter(',');
    conv_cmd->add_option("--dt-coeff", conv_flags.dt_coeff, "dt = coefficient * h")->check(CLI::PositiveNumber);

    CLI::App* cons_cmd = app.add_subcommand("consistency", "Truncation error under joint (h, dt) halving");
    detail::add_common(cons_cmd, cons_flags);
    cons_cmd->add_option("--levels", cons_flags.levels, "Number of rows")->check(CLI::Range(1, 20));
    cons_cmd->add_option("--n0", cons_flags.n0, "Coarsest grid size")->check(CLI::Range(3, 1 << 20));
    cons_cmd->add_option("--dt0", cons_flags.dt0, "Coarsest time step")->check(CLI::PositiveNumber);
    cons_cmd->add_option("--t", cons_flags.t_eval, "Evaluation time")->check(CLI::NonNegativeNumber);
    cons_cmd->add_option("--profile", cons_flags.profile, "cosine[:scale=S] or constant:c=C");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    CLI::App* sub = nullptr;
    detail::Flags* flags = nullptr;
    std::string command;
    if (run_cmd->parsed()) sub = run_cmd, flags = &run_flags, command = "run";
    else if (conv_cmd->parsed()) sub = conv_cmd, flags = &conv_flags, command = "convergence";
    else sub = cons_cmd, flags = &cons_flags, command = "consistency";

    RunSettings settings;
    try {
        settings = detail::resolve(sub, *flags, command);
    } catch (const InvalidArgument& e) {
        err << "dlss: usage error: " << e.what() << '\n';
        return exit_usage;
    }

    const std::optional<std::string> stamp =
        flags->timestamp ? std::optional<std::string>(utc_timestamp()) : std::nullopt;
    try {
        execute(settings, flags->out, stamp, out);
    } catch (const InvalidArgument& e) {
        err << "dlss: usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const RunFailure& e) {
        err << "dlss: solver failure: " << e.what() << '\n';
        return exit_failure;
    } catch (const std::exception& e) {
        err << "dlss: error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_ok;
}

}  // namespace dlss::cli
