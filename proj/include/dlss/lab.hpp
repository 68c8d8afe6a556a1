/// @file lab.hpp
/// @brief Experiment harness: trajectories with per-step diagnostics, the
/// truncation-error (consistency) study and the grid-convergence study.

#pragma once

#include "dlss/errors.hpp"
#include "dlss/fisher.hpp"
#include "dlss/grid.hpp"
#include "dlss/stepper.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dlss {

/// Initial data. The cosine bump is
///   1D: u0(x)   = (sqrt(eps) + ((1 + cos 2 pi x/L) / 2)^m)^2
///   2D: u0(x,y) = (sqrt(eps) + ((1 + cos 2 pi x/L cos 2 pi y/L) / 2)^m)^2
struct InitialCondition {
    enum class Kind { cosine_bump, custom };

    Kind kind = Kind::cosine_bump;
    double eps = 0.001;
    double m = 8.0;
    std::vector<double> values;  ///< custom data, flat cell order

    static InitialCondition cosine(double eps, double m) {
        if (!(eps > 0.0)) throw InvalidArgument("cosine bump needs eps > 0");
        if (!(m >= 0.0)) throw InvalidArgument("cosine bump needs m >= 0");
        return {Kind::cosine_bump, eps, m, {}};
    }
    static InitialCondition custom(const CellField& u) {
        return {Kind::custom, 0.0, 0.0, std::vector<double>(u.values().begin(), u.values().end())};
    }

    CellField sample(const GridSpec& g) const {
        if (kind == Kind::custom) {
            CellField u(g, values);
            require_positive(u);
            return u;
        }
        const double k = 2.0 * std::numbers::pi / g.length();
        const double root_eps = std::sqrt(eps);
        if (g.dim() == 1)
            return CellField::sample(g, [&](double x, double) {
                const double b = root_eps + std::pow(0.5 * (1.0 + std::cos(k * x)), m);
                return b * b;
            });
        return CellField::sample(g, [&](double x, double y) {
            const double b = root_eps + std::pow(0.5 * (1.0 + std::cos(k * x) * std::cos(k * y)), m);
            return b * b;
        });
    }

    std::string describe() const {
        if (kind == Kind::custom) return "custom";
        std::ostringstream os;
        os.precision(17);
        os << "cosine:eps=" << eps << ",m=" << m;
        return os.str();
    }
};

struct TraceRow {
    long step = 0;
    double t = 0.0;
    double mass = 0.0;
    double min_u = 0.0;
    double energy = 0.0;
    double slack = 0.0;
    int newton_iters = 0;
    int substeps = 0;
};

struct RunTrace {
    GridSpec grid;
    SchemeConfig config;
    std::string initial_condition;
    std::vector<TraceRow> rows;
};

struct Snapshot {
    double t;
    CellField u;
};

struct RunResult {
    RunTrace trace;
    std::vector<Snapshot> snapshots;
    CellField final_state;
};

namespace detail {

inline double energy_or_nan(const CellField& u, EnergyVariant v) {
    return is_positive(u) ? energy(u, v) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Advances u0 to t_end with cfg, snapshotting at every report time. Steps are
/// shortened so that report times and t_end are hit exactly (the recorded time is
/// the requested value itself).
inline RunResult run(const CellField& u0, const SchemeConfig& cfg, double t_end,
                     std::vector<double> report_times, std::string ic_label = "custom") {
    cfg.validate();
    require_positive(u0);
    if (!(t_end > 0.0) || !std::isfinite(t_end)) throw InvalidArgument("t_end must be positive");
    for (double r : report_times)
        if (!(r >= 0.0 && r <= t_end)) throw InvalidArgument("report times must lie in [0, t_end]");
    std::sort(report_times.begin(), report_times.end());
    report_times.erase(std::unique(report_times.begin(), report_times.end()), report_times.end());

    std::vector<double> targets = report_times;
    if (targets.empty() || targets.back() != t_end) targets.push_back(t_end);

    RunResult out{RunTrace{u0.grid(), cfg, std::move(ic_label), {}}, {}, u0};
    CellField& u = out.final_state;
    double t = 0.0;
    long step_index = 0;
    out.trace.rows.push_back({0, 0.0, mass(u), u.min(), detail::energy_or_nan(u, cfg.energy), 0.0, 0, 0});

    NewtonWorkspace workspace(cfg.newton.direct_limit);
    auto is_report = [&](double target) {
        return std::binary_search(report_times.begin(), report_times.end(), target);
    };
    if (is_report(0.0)) out.snapshots.push_back({0.0, u});

    for (double target : targets) {
        if (target == 0.0) continue;
        while (t < target) {
            SchemeConfig step_cfg = cfg;
            const double remaining = target - t;
            const bool landing = remaining <= cfg.dt * (1.0 + 1e-6);
            if (landing) step_cfg.dt = remaining;
            std::optional<StepResult> sr;
            try {
                sr.emplace(step(u, step_cfg, &workspace));
            } catch (const InvalidArgument&) {
                throw;
            } catch (const Error& e) {
                throw RunFailure(step_index + 1, t, e.what());
            }
            u = std::move(sr->u);
            t = landing ? target : t + step_cfg.dt;
            ++step_index;
            out.trace.rows.push_back({step_index, t, mass(u), u.min(),
                                      detail::energy_or_nan(u, cfg.energy),
                                      sr->report.dissipation_slack, sr->report.newton_iters,
                                      sr->report.substeps_taken});
        }
        if (is_report(target)) out.snapshots.push_back({target, u});
    }
    return out;
}

inline RunResult run(const InitialCondition& ic, const GridSpec& grid, const SchemeConfig& cfg,
                     double t_end, std::vector<double> report_times) {
    return run(ic.sample(grid), cfg, t_end, std::move(report_times), ic.describe());
}

// ---------------------------------------------------------------------------
// Consistency
// ---------------------------------------------------------------------------

/// A smooth positive 1D profile u(x,t) together with its continuous residual
///   R(x,t) = u_t - d/dx(u d/dx mu),  mu = u_x^2/(2u^2) - u_xx/u,
/// i.e. the source term for which u solves the forced equation exactly.
struct ManufacturedSolution {
    std::function<double(double, double)> value;
    std::function<double(double, double)> residual;
    std::string name;

    /// scale * (2 + cos(2 pi x / L) e^{-t}).
    static ManufacturedSolution cosine_decay(double scale = 1.0, double length = 1.0) {
        const double k = 2.0 * std::numbers::pi / length;
        auto value = [=](double x, double t) { return scale * (2.0 + std::cos(k * x) * std::exp(-t)); };
        auto residual = [=](double x, double t) {
            const double amp = scale * std::exp(-t);
            const double c = std::cos(k * x), s = std::sin(k * x);
            const double u = scale * 2.0 + amp * c;
            const double u1 = -amp * k * s;
            const double u2 = -amp * k * k * c;
            const double u3 = amp * k * k * k * s;
            const double u4 = amp * k * k * k * k * c;
            const double ut = -amp * c;
            const double iu = 1.0 / u;
            const double mu1 = 2.0 * u1 * u2 * iu * iu - u1 * u1 * u1 * iu * iu * iu - u3 * iu;
            const double mu2 = 2.0 * u2 * u2 * iu * iu + 3.0 * u1 * u3 * iu * iu -
                               7.0 * u1 * u1 * u2 * iu * iu * iu +
                               3.0 * u1 * u1 * u1 * u1 * iu * iu * iu * iu - u4 * iu;
            return ut - (u1 * mu1 + u * mu2);
        };
        return {value, residual, "cosine-decay"};
    }

    static ManufacturedSolution constant(double c) {
        if (!(c > 0.0)) throw InvalidArgument("constant profile must be positive");
        return {[=](double, double) { return c; }, [](double, double) { return 0.0; }, "constant"};
    }
};

/// ||tau||_inf of the explicit-implicit scheme at (t, dt) on a 1D grid:
///   tau_j = (u(x_j,t+dt) - u(x_j,t))/dt - d_h(avg(u(.,t)) D_h H(u(.,t+dt)))_j - R(x_j,t).
/// R vanishes for exact solutions, where this is the usual local truncation error.
inline double truncation_error(const ManufacturedSolution& profile, const GridSpec& grid, double dt,
                               double t, EnergyVariant v = EnergyVariant::forward) {
    if (grid.dim() != 1) throw InvalidArgument("truncation_error is implemented for 1D grids");
    if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
    const CellField now = CellField::sample(grid, [&](double x, double) { return profile.value(x, t); });
    const CellField next =
        CellField::sample(grid, [&](double x, double) { return profile.value(x, t + dt); });
    require_positive(now);
    require_positive(next);
    const CellField flux_div = divergence(edge_average(now) * gradient(potential(next, v)));
    double worst = 0.0;
    for (int i = 0; i < grid.n(); ++i) {
        const double tau =
            (next.at(i) - now.at(i)) / dt - flux_div.at(i) - profile.residual(grid.coord(i), t);
        worst = std::max(worst, std::abs(tau));
    }
    return worst;
}

struct ConsistencyRow {
    int n;
    double h;
    double dt;
    double tau_inf;
    std::optional<double> ratio;  ///< tau of the previous (coarser) row / this tau
};

/// Halves (h, dt) together `levels - 1` times starting from (L/n0, dt0).
inline std::vector<ConsistencyRow> consistency_study(const ManufacturedSolution& profile, int n0,
                                                     double dt0, int levels, double t = 0.0,
                                                     double length = 1.0,
                                                     EnergyVariant v = EnergyVariant::forward) {
    if (levels < 1) throw InvalidArgument("consistency study needs at least one level");
    std::vector<ConsistencyRow> rows;
    int n = n0;
    double dt = dt0;
    for (int level = 0; level < levels; ++level) {
        const GridSpec grid = GridSpec::line(n, length);
        const double tau = truncation_error(profile, grid, dt, t, v);
        std::optional<double> ratio;
        if (!rows.empty()) ratio = rows.back().tau_inf / tau;
        rows.push_back({n, grid.h(), dt, tau, ratio});
        n *= 2;
        dt *= 0.5;
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Grid convergence
// ---------------------------------------------------------------------------

/// L2 distance between a coarse solution and a reference on a finer grid, with the
/// coarse solution carried to each reference cell by nearest-neighbour lookup
/// (ties go to the upper coarse cell).
inline double nearest_neighbor_l2(const CellField& coarse, const CellField& reference) {
    const GridSpec& gc = coarse.grid();
    const GridSpec& gf = reference.grid();
    if (gc.dim() != gf.dim() || gc.length() != gf.length())
        throw InvalidArgument("grids cover different domains");
    auto nearest = [&](long i) {
        const double x = gf.coord(i);
        return long(std::floor(x / gc.h() + 0.5)) - 1;  // coarse cell k sits at (k+1) h_c
    };
    CompensatedSum s;
    const int nf = gf.n();
    if (gf.dim() == 1) {
        for (int i = 0; i < nf; ++i) {
            const double d = coarse.at(nearest(i)) - reference.at(i);
            s.add(d * d);
        }
    } else {
        for (int j = 0; j < nf; ++j)
            for (int i = 0; i < nf; ++i) {
                const double d = coarse.at(nearest(i), nearest(j)) - reference.at(i, j);
                s.add(d * d);
            }
    }
    return std::sqrt(gf.cell_volume() * s.value());
}

struct ConvergenceRow {
    int n;
    double h;
    double l2_error;
    std::optional<double> order;  ///< log2(e_previous / e_this)
};

struct ConvergenceResult {
    std::vector<ConvergenceRow> rows;  ///< one per non-reference level
    std::vector<CellField> solutions;  ///< final states, one per level (reference last)
};

/// Runs each level with dt = dt_coeff * h to t_end and compares every level except the
/// finest against the finest.
inline ConvergenceResult convergence_study(const InitialCondition& ic, int dim, double length,
                                           const SchemeConfig& cfg, const std::vector<int>& ns,
                                           double dt_coeff, double t_end, unsigned threads = 1) {
    if (ns.size() < 2) throw InvalidArgument("convergence study needs at least two levels");
    for (std::size_t k = 1; k < ns.size(); ++k)
        if (ns[k] <= ns[k - 1]) throw InvalidArgument("grid sizes must be strictly increasing");
    if (!(dt_coeff > 0.0)) throw InvalidArgument("dt coefficient must be positive");

    auto level = [&](int n) {
        const GridSpec grid(dim, n, length);
        SchemeConfig c = cfg;
        c.dt = dt_coeff * grid.h();
        return run(ic, grid, c, t_end, {}).final_state;
    };

    std::vector<CellField> finals;
    finals.reserve(ns.size());
    threads = std::max(1u, threads);
    for (std::size_t start = 0; start < ns.size(); start += threads) {
        std::vector<std::future<CellField>> batch;
        for (std::size_t k = start; k < std::min(ns.size(), start + threads); ++k)
            batch.push_back(std::async(threads > 1 ? std::launch::async : std::launch::deferred,
                                       level, ns[k]));
        for (auto& f : batch) finals.push_back(f.get());
    }

    ConvergenceResult out;
    const CellField& reference = finals.back();
    for (std::size_t k = 0; k + 1 < ns.size(); ++k) {
        const double err = nearest_neighbor_l2(finals[k], reference);
        std::optional<double> order;
        if (!out.rows.empty()) order = std::log2(out.rows.back().l2_error / err);
        out.rows.push_back({ns[k], finals[k].grid().h(), err, order});
    }
    out.solutions = std::move(finals);
    return out;
}

}  // namespace dlss
