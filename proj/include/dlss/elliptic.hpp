/// @file elliptic.hpp
/// @brief Weighted discrete Laplacian L_phi f = -d_h(phi D_h f), its inverse on
/// mean-zero fields and the induced dual norm ||g||^2 = [phi D_h f, D_h f], f = L^{-1} g.

#pragma once

#include "dlss/errors.hpp"
#include "dlss/grid.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>

namespace dlss {

class WeightedLaplacian {
public:
    explicit WeightedLaplacian(EdgeField weight) : weight_(std::move(weight)) {
        if (!(weight_.min() > 0.0)) throw InvalidArgument("Laplacian weight must be positive");
    }

    const GridSpec& grid() const noexcept { return weight_.grid(); }
    const EdgeField& weight() const noexcept { return weight_; }

    CellField apply(const CellField& f) const {
        require_same_grid(grid(), f.grid());
        CellField out = divergence(weight_ * gradient(f));
        out *= -1.0;
        return out;
    }

    /// Diagonal of the operator matrix (sum of adjacent edge weights / h^2).
    CellField diagonal() const {
        const GridSpec& g = grid();
        const double inv_h2 = 1.0 / (g.h() * g.h());
        CellField d(g);
        const int n = g.n();
        if (g.dim() == 1) {
            for (int i = 0; i < n; ++i) d.at(i) = (weight_.xe(i) + weight_.xe(i - 1)) * inv_h2;
        } else {
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i)
                    d.at(i, j) = (weight_.xe(i, j) + weight_.xe(i - 1, j) + weight_.ye(i, j) +
                                  weight_.ye(i, j - 1)) *
                                 inv_h2;
        }
        return d;
    }

    /// Sparse matrix of apply().
    SparseMatrix matrix() const {
        return matrix::weighted_laplacian(weight_);
    }

private:
    EdgeField weight_;
};

struct CgStats {
    int iterations = 0;
    double relative_residual = 0.0;
};

namespace detail {

inline void remove_mean(Eigen::VectorXd& v) { v.array() -= v.mean(); }

inline void require_mean_zero(const CellField& g) {
    CompensatedSum total, scale;
    for (double v : g.values()) {
        total.add(v);
        scale.add(std::abs(v));
    }
    if (scale.value() == 0.0) return;
    const double rel = std::abs(total.value()) / scale.value();
    if (rel > 1e-11) throw NotMeanZero(rel);
}

}  // namespace detail

/// Solves L f = g for mean-zero f by Jacobi-preconditioned conjugate gradients,
/// projecting out the constant mode every iteration.
/// Converged when ||L f - g||_2 <= tol ||g||_2. An initial guess only changes the
/// iteration count.
inline CellField solve(const WeightedLaplacian& op, const CellField& g, double tol = 1e-12,
                       CgStats* stats = nullptr, const CellField* guess = nullptr) {
    const GridSpec& grid = op.grid();
    require_same_grid(grid, g.grid());
    detail::require_mean_zero(g);

    const auto n = Eigen::Index(grid.cells());
    const SparseMatrix a = op.matrix();
    const Eigen::VectorXd inv_diag = as_vector(op.diagonal()).cwiseInverse();

    Eigen::VectorXd b = as_vector(g);
    detail::remove_mean(b);
    const double bnorm = b.norm();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (bnorm == 0.0) {
        if (stats) *stats = {};
        return CellField(grid);
    }
    if (guess) {
        require_same_grid(grid, guess->grid());
        x = as_vector(*guess);
        detail::remove_mean(x);
    }

    const long max_iters = 50L * long(n);
    Eigen::VectorXd r = b - a * x;
    double rel = r.norm() / bnorm;
    long it = 0;
    if (rel <= tol) {
        if (stats) *stats = {0, rel};
        return from_vector(grid, x);
    }
    Eigen::VectorXd z = inv_diag.cwiseProduct(r);
    detail::remove_mean(z);
    Eigen::VectorXd p = z;
    Eigen::VectorXd q(n);
    double rz = r.dot(z);
    while (it < max_iters) {
        q.noalias() = a * p;
        const double pq = p.dot(q);
        if (!(pq > 0.0)) break;
        const double alpha = rz / pq;
        x += alpha * p;
        r -= alpha * q;
        ++it;
        // Refresh with the true residual periodically to avoid recurrence drift.
        if (it % 50 == 0) {
            detail::remove_mean(x);
            r = b - a * x;
        }
        rel = r.norm() / bnorm;
        if (rel <= tol) {
            detail::remove_mean(x);
            const double true_rel = (b - a * x).norm() / bnorm;
            if (true_rel <= tol) {
                rel = true_rel;
                break;
            }
            r = b - a * x;
        }
        z = inv_diag.cwiseProduct(r);
        detail::remove_mean(z);
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    detail::remove_mean(x);
    rel = (b - a * x).norm() / bnorm;
    if (stats) *stats = {int(it), rel};
    if (!(rel <= tol)) throw NoConvergence(int(it), rel, "conjugate gradient");
    return from_vector(grid, x);
}

/// ||g||^2_{L_phi^{-1}} = [phi D_h f, D_h f] with f = solve(g).
inline double inv_norm_sq(const WeightedLaplacian& op, const CellField& g, double tol = 1e-12,
                          const CellField* guess = nullptr) {
    const CellField f = solve(op, g, tol, nullptr, guess);
    const EdgeField df = gradient(f);
    return edge_inner(op.weight() * df, df);
}

/// Dense reference solve for small grids (cells <= 64): the row of the first cell is
/// replaced by the constraint sum f = 0 and the system is factorised directly.
inline CellField dense_solve(const WeightedLaplacian& op, const CellField& g) {
    const GridSpec& grid = op.grid();
    require_same_grid(grid, g.grid());
    if (grid.cells() > 64) throw InvalidArgument("dense_solve is limited to 64 cells");
    detail::require_mean_zero(g);
    Eigen::MatrixXd a = Eigen::MatrixXd(op.matrix());
    Eigen::VectorXd b = as_vector(g);
    a.row(0).setOnes();
    b[0] = 0.0;
    const Eigen::VectorXd x = a.fullPivLu().solve(b);
    return from_vector(grid, x);
}

}  // namespace dlss
