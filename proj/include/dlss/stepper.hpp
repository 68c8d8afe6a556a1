/// @file stepper.hpp
/// @brief One time step u^n -> u^{n+1} of the quantum diffusion equation
///   u_t = div(u grad H),  H = dF/du,
/// for the four time discretisations:
///
///   Explicit          (u1-u0)/dt = d_h( avg(u0) D_h H(u0) )
///   FullyImplicit     (u1-u0)/dt = d_h( avg(u1) D_h H(u1) )
///   LinearM           (u1-u0)/dt = d_h( avg(M) D_h (u1/M) ),  M = u0 exp(min H(u0) - H(u0))
///   ExplicitImplicit  (u1-u0)/dt = d_h( avg(u0) D_h H(u1) )
///
/// All four are in conservative form, so mass is preserved by construction.

#pragma once

#include "dlss/elliptic.hpp"
#include "dlss/errors.hpp"
#include "dlss/fisher.hpp"
#include "dlss/grid.hpp"
#include "dlss/newton.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

namespace dlss {

enum class Scheme { explicit_euler, fully_implicit, linear_m, explicit_implicit };

inline std::string_view to_string(Scheme s) {
    switch (s) {
        case Scheme::explicit_euler: return "explicit";
        case Scheme::fully_implicit: return "implicit";
        case Scheme::linear_m: return "linear-m";
        case Scheme::explicit_implicit: return "exim";
    }
    return "?";
}

inline Scheme parse_scheme(std::string_view s) {
    if (s == "explicit") return Scheme::explicit_euler;
    if (s == "implicit") return Scheme::fully_implicit;
    if (s == "linear-m") return Scheme::linear_m;
    if (s == "exim") return Scheme::explicit_implicit;
    throw InvalidArgument("unknown scheme '" + std::string(s) + "'");
}

struct SchemeConfig {
    Scheme scheme = Scheme::explicit_implicit;
    double dt = 1e-7;
    EnergyVariant energy = EnergyVariant::forward;
    NewtonConfig newton{};
    bool substep_on_failure = true;
    int max_halvings = 6;
    /// Relative CG tolerance for the dissipation diagnostic.
    double diagnostic_tol = 1e-10;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("time step must be positive");
        if (max_halvings < 0) throw InvalidArgument("max_halvings must be >= 0");
        newton.validate();
    }
};

struct StepReport {
    int newton_iters = 0;
    double residual = 0.0;
    int substeps_taken = 1;
    /// F(u1) + ||u1-u0||^2_{L^{-1}(avg u0)} / dt - F(u0); NaN when u1 is not positive.
    double dissipation_slack = 0.0;
    bool positive = true;
};

struct StepResult {
    CellField u;
    StepReport report;
};

namespace detail {

inline double dissipation_slack(const CellField& u0, const CellField& u1, const SchemeConfig& cfg,
                                const CellField* guess = nullptr) {
    if (!is_positive(u1)) return std::numeric_limits<double>::quiet_NaN();
    const WeightedLaplacian op(edge_average(u0));
    CellField change = u1 - u0;
    const double drift = mean(change);
    if (std::abs(drift) <= 1e-12 * mean(u0)) change += -drift;  // rounding in the mass
    const double metric = inv_norm_sq(op, change, cfg.diagnostic_tol, guess);
    return energy(u1, cfg.energy) + metric / cfg.dt - energy(u0, cfg.energy);
}

inline SparseMatrix identity(Eigen::Index n) {
    SparseMatrix id(n, n);
    id.setIdentity();
    return id;
}

}  // namespace detail

/// Explicit-implicit step: solves u - u0 - dt d_h(avg(u0) D_h H(u)) = 0 by Newton.
inline StepResult step_explicit_implicit(const CellField& u0, const SchemeConfig& cfg,
                                         NewtonWorkspace* ws = nullptr) {
    cfg.validate();
    require_positive(u0);
    const GridSpec& g = u0.grid();
    const EdgeField mobility = edge_average(u0);
    std::optional<SparseMatrix> flux_op;  // d_h(avg(u0) D_h .), built on first use

    auto residual = [&](const CellField& u) {
        CellField r = divergence(mobility * gradient(potential(u, cfg.energy)));
        r *= -cfg.dt;
        r += u;
        r -= u0;
        return r;
    };
    auto jacobian = [&](const CellField& u) {
        if (!flux_op) flux_op = -matrix::weighted_laplacian(mobility);
        SparseMatrix j = detail::identity(Eigen::Index(g.cells())) -
                         cfg.dt * (*flux_op * hessian_matrix(u, cfg.energy));
        return j;
    };
    NewtonResult nr = solve_step_residual(ws ? ws->predict(u0, cfg.dt) : u0, residual, jacobian,
                                          cfg.newton, ws);
    if (ws) ws->record(u0, nr.u, cfg.dt);
    StepResult out{std::move(nr.u), {}};
    out.report.newton_iters = nr.iterations;
    out.report.residual = nr.residual;
    // f = -dt H(u) solves L f = u - u0 up to the Newton residual.
    CellField guess = potential(out.u, cfg.energy);
    guess *= -cfg.dt;
    out.report.dissipation_slack = detail::dissipation_slack(u0, out.u, cfg, &guess);
    return out;
}

/// Fully implicit step: mobility is the edge average of the unknown.
inline StepResult step_fully_implicit(const CellField& u0, const SchemeConfig& cfg,
                                      NewtonWorkspace* ws = nullptr) {
    cfg.validate();
    require_positive(u0);
    const GridSpec& g = u0.grid();
    const SparseMatrix div = matrix::divergence(g);
    const SparseMatrix grad = matrix::gradient(g);
    const SparseMatrix avg = matrix::average(g);
    const SparseMatrix id = detail::identity(Eigen::Index(g.cells()));

    auto residual = [&](const CellField& u) {
        CellField r = divergence(edge_average(u) * gradient(potential(u, cfg.energy)));
        r *= -cfg.dt;
        r += u;
        r -= u0;
        return r;
    };
    auto jacobian = [&](const CellField& u) {
        const EdgeField grad_h = gradient(potential(u, cfg.energy));
        const SparseMatrix mobility_part =
            div * matrix::edge_diagonal(edge_average(u)) * grad * hessian_matrix(u, cfg.energy);
        const SparseMatrix transport_part = div * matrix::edge_diagonal(grad_h) * avg;
        SparseMatrix j = id - cfg.dt * (mobility_part + transport_part);
        return j;
    };
    NewtonResult nr = solve_step_residual(ws ? ws->predict(u0, cfg.dt) : u0, residual, jacobian,
                                          cfg.newton, ws);
    if (ws) ws->record(u0, nr.u, cfg.dt);
    StepResult out{std::move(nr.u), {}};
    out.report.newton_iters = nr.iterations;
    out.report.residual = nr.residual;
    out.report.dissipation_slack = detail::dissipation_slack(u0, out.u, cfg);
    return out;
}

/// Explicit step. No positivity guarantee: a non-positive result is returned and
/// flagged in the report.
inline StepResult step_explicit(const CellField& u0, const SchemeConfig& cfg) {
    cfg.validate();
    require_positive(u0);
    CellField u1 = divergence(edge_average(u0) * gradient(potential(u0, cfg.energy)));
    u1 *= cfg.dt;
    u1 += u0;
    StepResult out{std::move(u1), {}};
    out.report.positive = is_positive(out.u);
    out.report.dissipation_slack = detail::dissipation_slack(u0, out.u, cfg);
    return out;
}

/// System matrix A of the linear M-scheme written for the unknown u1 = G M:
///   A u1 = u0,  A = I - dt d_h( avg(M) D_h( . / M ) ).
/// Only neighbour ratios M_b/M_a = exp(log M_b - log M_a) enter, so the matrix stays
/// finite even where M itself would underflow. A has positive diagonal, non-positive
/// off-diagonals and unit column sums (column diagonal dominance).
inline SparseMatrix linear_m_system(const CellField& u0, const SchemeConfig& cfg) {
    cfg.validate();
    require_positive(u0);
    const GridSpec& g = u0.grid();
    const CellField h = potential(u0, cfg.energy);
    const double h_min = h.min();
    CellField log_m(g);
    for (std::size_t k = 0; k < u0.size(); ++k) log_m[k] = std::log(u0[k]) - (h[k] - h_min);

    const double c = cfg.dt / (2.0 * g.h() * g.h());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * g.edges() + g.cells());
    for (std::size_t k = 0; k < g.cells(); ++k) t.emplace_back(Eigen::Index(k), Eigen::Index(k), 1.0);
    detail::for_each_edge(g, [&](std::size_t a, std::size_t b) {
        const double delta = log_m[b] - log_m[a];
        if (std::abs(delta) > 700.0)
            throw LinearSolveFailure("linear M-scheme: neighbouring mobility ratio exp(" +
                                     std::to_string(delta) + ") overflows");
        const double up = c * (1.0 + std::exp(delta));     // weight of u_a in the edge flux
        const double down = c * (1.0 + std::exp(-delta));  // weight of u_b in the edge flux
        const auto ia = Eigen::Index(a), ib = Eigen::Index(b);
        t.emplace_back(ia, ia, up);
        t.emplace_back(ia, ib, -down);
        t.emplace_back(ib, ib, down);
        t.emplace_back(ib, ia, -up);
    });
    const auto n = Eigen::Index(g.cells());
    SparseMatrix a(n, n);
    a.setFromTriplets(t.begin(), t.end());
    return a;
}

namespace detail {

/// Gaussian elimination for a column diagonally dominant M-matrix, in the
/// Grassmann-Taksar-Heyman form: pivots are rebuilt from the column excess plus
/// off-diagonal magnitudes, so no subtraction ever happens and a positive
/// right-hand side yields a strictly positive solution. `excess` holds the exact
/// column sums of A (summing entries that span many orders of magnitude would not
/// recover them); the diagonal of A is never read.
inline Eigen::VectorXd gth_solve(const SparseMatrix& a_sparse, Eigen::VectorXd excess,
                                 const Eigen::VectorXd& rhs) {
    const auto n = a_sparse.rows();
    Eigen::MatrixXd a = Eigen::MatrixXd(a_sparse);
    Eigen::VectorXd y = rhs;
    for (Eigen::Index k = 0; k < n; ++k) {
        double off = 0.0;
        for (Eigen::Index i = k + 1; i < n; ++i) off -= a(i, k);
        const double pivot = excess[k] + off;
        a(k, k) = pivot;
        if (!(pivot > 0.0)) throw LinearSolveFailure("linear M-scheme: singular system");
        for (Eigen::Index j = k + 1; j < n; ++j) {
            const double akj = a(k, j);
            if (akj == 0.0) continue;
            const double f = akj / pivot;  // <= 0
            excess[j] -= f * excess[k];
            for (Eigen::Index i = k + 1; i < n; ++i)
                if (i != j) a(i, j) -= a(i, k) * f;
        }
        for (Eigen::Index i = k + 1; i < n; ++i) y[i] -= a(i, k) / pivot * y[k];
    }
    Eigen::VectorXd x(n);
    for (Eigen::Index k = n - 1; k >= 0; --k) {
        double s = y[k];
        for (Eigen::Index j = k + 1; j < n; ++j) s -= a(k, j) * x[j];
        x[k] = s / a(k, k);
    }
    return x;
}

}  // namespace detail

/// Linear M-scheme step. Grids up to 1024 cells use the subtraction-free dense
/// elimination; larger grids fall back to sparse LU.
inline StepResult step_linear_m(const CellField& u0, const SchemeConfig& cfg) {
    const SparseMatrix a = linear_m_system(u0, cfg);
    const Eigen::VectorXd b = as_vector(u0);
    Eigen::VectorXd x;
    if (a.rows() <= 1024) {
        x = detail::gth_solve(a, Eigen::VectorXd::Ones(a.cols()), b);
    } else {
        Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu(a);
        if (lu.info() != Eigen::Success) throw LinearSolveFailure("linear M-scheme: LU failed");
        x = lu.solve(b);
    }
    if (!x.allFinite()) throw LinearSolveFailure("linear M-scheme: non-finite solution");
    StepResult out{from_vector(u0.grid(), x), {}};
    out.report.positive = is_positive(out.u);
    out.report.dissipation_slack = detail::dissipation_slack(u0, out.u, cfg);
    return out;
}

inline StepResult step_once(const CellField& u0, const SchemeConfig& cfg,
                            NewtonWorkspace* ws = nullptr) {
    switch (cfg.scheme) {
        case Scheme::explicit_euler: return step_explicit(u0, cfg);
        case Scheme::fully_implicit: return step_fully_implicit(u0, cfg, ws);
        case Scheme::linear_m: return step_linear_m(u0, cfg);
        case Scheme::explicit_implicit: return step_explicit_implicit(u0, cfg, ws);
    }
    throw InvalidArgument("unknown scheme");
}

namespace detail {

inline StepResult step_halving(const CellField& u0, const SchemeConfig& cfg, int halvings_left,
                               NewtonWorkspace* ws) {
    try {
        return step_once(u0, cfg, ws);
    } catch (const SolverFailure&) {
        if (!cfg.substep_on_failure || halvings_left == 0) throw;
    } catch (const NonPositiveState&) {
        if (!cfg.substep_on_failure || halvings_left == 0) throw;
    }
    SchemeConfig half = cfg;
    half.dt = 0.5 * cfg.dt;
    StepResult first = step_halving(u0, half, halvings_left - 1, ws);
    StepResult second = step_halving(first.u, half, halvings_left - 1, ws);
    StepReport rep;
    rep.newton_iters = first.report.newton_iters + second.report.newton_iters;
    rep.residual = std::max(first.report.residual, second.report.residual);
    rep.substeps_taken = first.report.substeps_taken + second.report.substeps_taken;
    rep.dissipation_slack = first.report.dissipation_slack + second.report.dissipation_slack;
    rep.positive = second.report.positive;
    return {std::move(second.u), rep};
}

}  // namespace detail

/// One step with the configured scheme. On a solver failure the step is retried as
/// two half steps, recursively, up to max_halvings times. A workspace lets the
/// Newton-based schemes reuse Jacobian factorisations across calls.
inline StepResult step(const CellField& u0, const SchemeConfig& cfg, NewtonWorkspace* ws = nullptr) {
    cfg.validate();
    require_positive(u0);
    return detail::step_halving(u0, cfg, cfg.substep_on_failure ? cfg.max_halvings : 0, ws);
}

}  // namespace dlss
