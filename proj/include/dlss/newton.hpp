/// @file newton.hpp
/// @brief Nonlinear solvers.
///
///  - solve_step_residual: damped Newton for the implicit time steps, with a
///    positivity-preserving backtracking line search.
///  - minimize_J: the variational reformulation of one explicit-implicit step,
///        J[u] = ||u - u_n||^2_{L^{-1}(u_n^)} / (2 dt) + F_h(u),
///    minimised over {u > 0, mass(u) = mass(u_n)} by log-barrier Newton with
///    mean-zero search directions. Dense; meant as a cross-check on small grids.

#pragma once

#include "dlss/elliptic.hpp"
#include "dlss/errors.hpp"
#include "dlss/fisher.hpp"
#include "dlss/grid.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace dlss {

struct NewtonConfig {
    double tol = 1e-10;                        ///< on ||residual||_inf
    int max_iters = 50;
    double min_damping = 1.0 / 1048576.0;      ///< 2^-20
    double positivity_margin = 0.1;            ///< min(iterate) >= margin * min(previous)
    bool conserve_mass = true;                 ///< residual has the form u - u_n - div(...)
    long direct_limit = 4096;                  ///< sparse LU up to this many unknowns

    void validate() const {
        if (!(tol > 0.0)) throw InvalidArgument("Newton tolerance must be positive");
        if (max_iters < 1) throw InvalidArgument("Newton needs max_iters >= 1");
        if (!(positivity_margin > 0.0 && positivity_margin < 1.0))
            throw InvalidArgument("positivity margin must lie in (0,1)");
        if (!(min_damping > 0.0 && min_damping <= 1.0))
            throw InvalidArgument("min_damping must lie in (0,1]");
    }
};

struct NewtonResult {
    CellField u;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> history;  ///< ||residual||_inf per iterate, starting with the initial one
};

namespace detail {

inline double inf_norm(const CellField& f) {
    double m = 0.0;
    for (double v : f.values()) {
        if (std::isnan(v)) return std::numeric_limits<double>::infinity();
        m = std::max(m, std::abs(v));
    }
    return m;
}

/// Direct sparse LU for moderate sizes, ILU-preconditioned BiCGSTAB above.
/// The last LU factorisation is kept so it can be reused for later right-hand sides.
class JacobianSolver {
public:
    JacobianSolver(long direct_limit, double krylov_tol)
        : direct_limit_(direct_limit), krylov_tol_(krylov_tol) {}

    bool direct(Eigen::Index rows) const { return rows <= direct_limit_; }
    bool has_factor(Eigen::Index rows) const { return factored_ && size_ == rows; }
    void drop_factor() { factored_ = false; }

    void factorize(const SparseMatrix& a) {
        if (!analyzed_ || size_ != a.rows() || nnz_ != a.nonZeros()) {
            lu_.analyzePattern(a);
            analyzed_ = true;
            size_ = a.rows();
            nnz_ = a.nonZeros();
        }
        lu_.factorize(a);
        factored_ = lu_.info() == Eigen::Success;
        if (!factored_) throw LinearSolveFailure("sparse LU factorisation of the Newton Jacobian failed");
    }

    /// Solves with the stored factorisation.
    Eigen::VectorXd solve_factored(const Eigen::VectorXd& b) const { return lu_.solve(b); }

    Eigen::VectorXd solve(const SparseMatrix& a, const Eigen::VectorXd& b) {
        if (direct(a.rows())) {
            factorize(a);
            return lu_.solve(b);
        }
        Eigen::BiCGSTAB<SparseMatrix, Eigen::IncompleteLUT<double>> krylov;
        krylov.setTolerance(krylov_tol_);
        krylov.compute(a);
        Eigen::VectorXd x = krylov.solve(b);
        if (krylov.info() != Eigen::Success)
            throw LinearSolveFailure("BiCGSTAB on the Newton Jacobian did not converge");
        return x;
    }

private:
    long direct_limit_;
    double krylov_tol_;
    bool analyzed_ = false;
    bool factored_ = false;
    Eigen::Index size_ = 0;
    Eigen::Index nnz_ = 0;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

}  // namespace detail

/// State carried between Newton solves of consecutive time steps: the most recent
/// Jacobian factorisation. Passing one to solve_step_residual turns the solver into a
/// chord iteration that refactorises only when the stored Jacobian stops contracting.
class NewtonWorkspace {
public:
    explicit NewtonWorkspace(long direct_limit = 4096) : solver_(direct_limit, 0.0) {}

    int factorizations() const noexcept { return factorizations_; }
    void reset() { solver_.drop_factor(); }

    detail::JacobianSolver& solver() noexcept { return solver_; }
    void count_factorization() noexcept { ++factorizations_; }

    /// Starting iterate for the step from u0: the previous increment, rescaled to dt,
    /// added to u0 when u0 is where the previous step ended. Falls back to u0.
    CellField predict(const CellField& u0, double dt) const {
        if (!last_end_ || !(*last_end_ == u0)) return u0;
        CellField guess = *last_increment_;
        guess *= dt / last_dt_;
        guess += u0;
        return guess.min() > 0.5 * u0.min() ? guess : u0;
    }

    void record(const CellField& u0, const CellField& u1, double dt) {
        last_increment_ = u1 - u0;
        last_end_ = u1;
        last_dt_ = dt;
    }

private:
    detail::JacobianSolver solver_;
    std::optional<CellField> last_end_;
    std::optional<CellField> last_increment_;
    double last_dt_ = 1.0;
    int factorizations_ = 0;
};

/// Damped Newton for residual(u) = 0 starting from a positive u0.
///
/// Each step is halved until the trial iterate stays above
/// positivity_margin * min(current iterate) and strictly lowers ||residual||_inf.
/// With conserve_mass set, the Newton correction is shifted by a constant so that
/// sum(delta) = -sum(residual), which is exact for residuals of the form
/// u - u_n - (divergence) and keeps every iterate on the mass level of u0.
///
/// With a workspace (direct sizes only), a stored factorisation is tried first; its
/// full step is kept only if it at least halves the residual, otherwise the Jacobian
/// is rebuilt at the current iterate and the step is redone as plain Newton.
template <class Residual, class Jacobian>
NewtonResult solve_step_residual(const CellField& u0, Residual&& residual, Jacobian&& jacobian,
                                 const NewtonConfig& cfg = {}, NewtonWorkspace* ws = nullptr) {
    cfg.validate();
    require_positive(u0);
    const GridSpec& grid = u0.grid();
    const auto n = Eigen::Index(grid.cells());

    NewtonResult out{u0, 0, 0.0, {}};
    CellField r = residual(out.u);
    double rnorm = detail::inf_norm(r);
    out.history.push_back(rnorm);
    detail::JacobianSolver local(cfg.direct_limit, 1e-2 * cfg.tol);
    const bool chord = ws != nullptr && n <= cfg.direct_limit;
    detail::JacobianSolver& linear = chord ? ws->solver() : local;

    auto correct_mass = [&](Eigen::VectorXd& delta) {
        if (!delta.allFinite()) throw LinearSolveFailure("Newton correction is not finite");
        if (!cfg.conserve_mass) return;
        const double target = -compensated_sum(r.values());
        double current = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) current += delta[k];
        delta.array() += (target - current) / double(n);
    };

    CellField trial(grid);
    CellField trial_r(grid);
    double trial_norm = 0.0;
    auto try_step = [&](const Eigen::VectorXd& delta, double step, double floor) {
        trial = out.u;
        auto tv = as_vector(trial);
        tv += step * delta;
        if (!(trial.min() > floor && tv.allFinite())) return false;
        trial_r = residual(trial);
        trial_norm = detail::inf_norm(trial_r);
        return true;
    };

    while (rnorm > cfg.tol) {
        if (out.iterations >= cfg.max_iters) throw NoConvergence(out.iterations, rnorm, "Newton");
        const double floor = cfg.positivity_margin * out.u.min();
        ++out.iterations;

        if (chord && linear.has_factor(n)) {
            Eigen::VectorXd delta = linear.solve_factored(-as_vector(r));
            correct_mass(delta);
            if (try_step(delta, 1.0, floor) && trial_norm <= 0.5 * rnorm) {
                out.u = std::move(trial);
                r = std::move(trial_r);
                rnorm = trial_norm;
                out.history.push_back(rnorm);
                continue;
            }
        }

        Eigen::VectorXd delta;
        if (chord) {
            linear.factorize(jacobian(out.u));
            ws->count_factorization();
            delta = linear.solve_factored(-as_vector(r));
        } else {
            delta = linear.solve(jacobian(out.u), -as_vector(r));
        }
        correct_mass(delta);

        bool accepted = false;
        for (double step = 1.0; step >= cfg.min_damping; step *= 0.5) {
            if (try_step(delta, step, floor) && trial_norm < rnorm) {
                accepted = true;
                break;
            }
        }
        if (!accepted) throw LineSearchStalled(out.iterations, rnorm);
        out.u = std::move(trial);
        r = std::move(trial_r);
        rnorm = trial_norm;
        out.history.push_back(rnorm);
    }
    out.residual = rnorm;
    return out;
}

// ---------------------------------------------------------------------------
// Variational form of the explicit-implicit step
// ---------------------------------------------------------------------------

struct BarrierConfig {
    double mu_init = 1e-2;
    double mu_min = 1e-12;
    double inner_tol = 1e-9;   ///< relative KKT residual required at mu_min
    double shrink = 0.1;       ///< mu <- shrink * mu per continuation stage
    int max_inner = 200;       ///< Newton iterations per stage

    void validate() const {
        if (!(mu_init > 0.0 && mu_min > 0.0 && mu_min < mu_init))
            throw InvalidArgument("barrier weights need 0 < mu_min < mu_init");
        if (!(shrink > 0.0 && shrink < 1.0)) throw InvalidArgument("barrier shrink must lie in (0,1)");
        if (!(inner_tol > 0.0)) throw InvalidArgument("barrier inner_tol must be positive");
    }
};

struct BarrierResult {
    CellField u;
    std::vector<double> stage_objective;  ///< J (without barrier) at the end of each stage
    std::vector<double> stage_mu;
    double kkt_residual = 0.0;
    int newton_iters = 0;
};

/// J[u] = inv_norm_sq(L_{avg(u_n)}, u - u_n) / (2 dt) + F_h(u).
inline double evaluate_J(const CellField& u, const CellField& u_n, double dt,
                         EnergyVariant energy_variant = EnergyVariant::forward) {
    require_same_grid(u.grid(), u_n.grid());
    if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
    require_positive(u);
    require_positive(u_n);
    const WeightedLaplacian op(edge_average(u_n));
    const double metric = inv_norm_sq(op, u - u_n);
    return metric / (2.0 * dt) + energy(u, energy_variant);
}

namespace detail {

/// Pseudo-inverse of a symmetric operator matrix whose kernel is the constants.
inline Eigen::MatrixXd constant_kernel_pinv(const Eigen::MatrixXd& l) {
    const auto n = l.rows();
    const double beta = l.diagonal().mean() / double(n);
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(n, n, 1.0);
    const Eigen::MatrixXd shifted = l + beta * ones;
    Eigen::MatrixXd inv = shifted.ldlt().solve(Eigen::MatrixXd::Identity(n, n));
    inv -= ones / (beta * double(n) * double(n));
    return 0.5 * (inv + inv.transpose());
}

}  // namespace detail

/// Minimiser of J over {u > 0, mass(u) = mass(u_n)}; dense, cells <= 256.
inline BarrierResult minimize_J(const CellField& u_n, double dt,
                                EnergyVariant energy_variant = EnergyVariant::forward,
                                const BarrierConfig& cfg = {}) {
    cfg.validate();
    if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
    require_positive(u_n);
    const GridSpec& grid = u_n.grid();
    if (grid.cells() > 256) throw InvalidArgument("minimize_J is limited to 256 cells");
    detail::check_variant(grid, energy_variant);

    const auto n = Eigen::Index(grid.cells());
    const double vol = grid.cell_volume();
    const Eigen::MatrixXd lpinv =
        detail::constant_kernel_pinv(Eigen::MatrixXd(WeightedLaplacian(edge_average(u_n)).matrix()));
    const Eigen::VectorXd un = as_vector(u_n);

    // Objective and derivatives in the <.,.> = h^dim sum metric.
    auto objective = [&](const CellField& u, double mu) {
        const Eigen::VectorXd d = as_vector(u) - un;
        CompensatedSum logs;
        for (double v : u.values()) logs.add(std::log(v));
        return vol * d.dot(lpinv * d) / (2.0 * dt) + energy(u, energy_variant) - mu * vol * logs.value();
    };
    auto gradient_of = [&](const CellField& u, double mu) {
        const Eigen::VectorXd d = as_vector(u) - un;
        Eigen::VectorXd g = lpinv * d / dt + as_vector(potential(u, energy_variant));
        g.array() -= mu / as_vector(u).array();
        return g;
    };
    auto project = [](Eigen::VectorXd v) {
        v.array() -= v.mean();
        return v;
    };

    BarrierResult out{u_n, {}, {}, 0.0, 0};
    double mu = cfg.mu_init;
    for (;;) {
        const bool last = mu <= cfg.mu_min * (1.0 + 1e-12);
        const double step_tol = last ? 1e-15 : 1e-9;
        int inner = 0;
        for (; inner < cfg.max_inner; ++inner) {
            CellField& u = out.u;
            const Eigen::VectorXd g = project(gradient_of(u, mu));
            Eigen::MatrixXd hess = lpinv / dt + Eigen::MatrixXd(hessian_matrix(u, energy_variant));
            hess.diagonal().array() += mu / as_vector(u).array().square();
            // Restrict to the mean-zero subspace and lift the constant mode.
            const Eigen::VectorXd row_mean = hess.rowwise().mean();
            const double all_mean = row_mean.mean();
            hess.rowwise() -= row_mean.transpose();
            hess.colwise() -= row_mean;
            hess.array() += all_mean;
            hess.array() += hess.diagonal().mean() / double(n);
            const Eigen::VectorXd p = project(hess.ldlt().solve(-g));
            if (!p.allFinite()) throw NoConvergence(out.newton_iters, g.cwiseAbs().maxCoeff(), "barrier Newton");

            const double slope = vol * g.dot(p);
            if (!(slope < 0.0) || p.cwiseAbs().maxCoeff() <= step_tol * as_vector(u).cwiseAbs().maxCoeff())
                break;
            const double f0 = objective(u, mu);
            double t = 1.0;
            bool moved = false;
            while (t > 1e-14) {
                CellField trial = u;
                as_vector(trial) += t * p;
                if (trial.min() > 0.0 && objective(trial, mu) <= f0 + 1e-4 * t * slope) {
                    u = std::move(trial);
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            ++out.newton_iters;
            if (!moved) break;  // no representable decrease left
        }
        out.stage_mu.push_back(mu);
        out.stage_objective.push_back(objective(out.u, 0.0));
        if (last) break;
        mu = std::max(mu * cfg.shrink, cfg.mu_min);
    }

    const Eigen::VectorXd kkt = project(gradient_of(out.u, mu));
    const double h_scale = project(as_vector(potential(out.u, energy_variant))).cwiseAbs().maxCoeff();
    out.kkt_residual = kkt.cwiseAbs().maxCoeff() / std::max(1.0, h_scale);
    if (!(out.kkt_residual <= cfg.inner_tol))
        throw NoConvergence(out.newton_iters, out.kkt_residual, "barrier Newton");
    return out;
}

}  // namespace dlss
