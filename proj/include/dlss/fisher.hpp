/// @file fisher.hpp
/// @brief Discrete Fisher-information energies, their gradient (the chemical
/// potential H) and Hessian.
///
/// Every variant is a sum over edges of a two-point term g(a, b), with a the
/// value at the lower cell of the edge and b the value at the upper cell:
///
///   forward    g = (b-a)^2 / (2a)
///   backward   g = (b-a)^2 / (2b)
///   symmetric  g = (b-a)^2 (1/a + 1/b) / 4
///   central    g = (b-a)^2 / (a+b)            (1D only)
///
/// F_h = s * sum_edges g, with s = 1/h in 1D and s = 1 in 2D. The potential is
/// H = h^{-dim} dF_h/du, so that the 1D forward case reproduces
///   H_i = -(u_{i+1}-u_i)^2/(2h^2 u_i^2) - [(u_{i+1}-u_i)/u_i - (u_i-u_{i-1})/u_{i-1}]/h^2.
/// Each g is a perspective-type function, jointly convex in (a, b) for a, b > 0.

#pragma once

#include "dlss/errors.hpp"
#include "dlss/grid.hpp"

#include <array>
#include <string>
#include <string_view>

namespace dlss {

enum class EnergyVariant { forward, backward, symmetric, central };

inline std::string_view to_string(EnergyVariant v) {
    switch (v) {
        case EnergyVariant::forward: return "forward";
        case EnergyVariant::backward: return "backward";
        case EnergyVariant::symmetric: return "symmetric";
        case EnergyVariant::central: return "central";
    }
    return "?";
}

inline EnergyVariant parse_energy_variant(std::string_view s) {
    if (s == "forward") return EnergyVariant::forward;
    if (s == "backward") return EnergyVariant::backward;
    if (s == "symmetric") return EnergyVariant::symmetric;
    if (s == "central") return EnergyVariant::central;
    throw InvalidArgument("unknown energy variant '" + std::string(s) + "'");
}

namespace detail {

/// Value, gradient and Hessian of one edge term.
struct PairTerm {
    double g;
    double ga, gb;
    double gaa, gab, gbb;
};

/// (b-a)^2/(2a): Hessian (1/a^3) [b^2, -ab; -ab, a^2].
inline PairTerm forward_term(double a, double b) {
    const double d = b - a;
    const double ia = 1.0 / a;
    return {0.5 * d * d * ia,
            -d * ia - 0.5 * d * d * ia * ia,
            d * ia,
            b * b * ia * ia * ia,
            -b * ia * ia,
            ia};
}

inline PairTerm swap(const PairTerm& t) { return {t.g, t.gb, t.ga, t.gbb, t.gab, t.gaa}; }

inline PairTerm pair_term(EnergyVariant v, double a, double b) {
    switch (v) {
        case EnergyVariant::forward: return forward_term(a, b);
        case EnergyVariant::backward: return swap(forward_term(b, a));
        case EnergyVariant::symmetric: {
            const PairTerm f = forward_term(a, b);
            const PairTerm r = swap(forward_term(b, a));
            return {0.5 * (f.g + r.g),     0.5 * (f.ga + r.ga),   0.5 * (f.gb + r.gb),
                    0.5 * (f.gaa + r.gaa), 0.5 * (f.gab + r.gab), 0.5 * (f.gbb + r.gbb)};
        }
        case EnergyVariant::central: {
            // (b-a)^2/(a+b): Hessian (8/s^3) [b^2, -ab; -ab, a^2]
            const double s = a + b, d = b - a;
            const double is = 1.0 / s;
            const double c = 8.0 * is * is * is;
            return {d * d * is,       -2.0 * d * is - d * d * is * is, 2.0 * d * is - d * d * is * is,
                    c * b * b,        -c * a * b,                      c * a * a};
        }
    }
    return {};
}

inline double energy_scale(const GridSpec& g) { return g.dim() == 1 ? 1.0 / g.h() : 1.0; }

inline void check_variant(const GridSpec& g, EnergyVariant v) {
    if (v == EnergyVariant::central && g.dim() != 1)
        throw InvalidArgument("the central energy variant is only defined in 1D");
}

/// Calls fn(lower_cell, upper_cell) for every edge, x-edges first.
template <class Fn>
void for_each_edge(const GridSpec& g, Fn&& fn) {
    const int n = g.n();
    if (g.dim() == 1) {
        for (int i = 0; i < n; ++i) fn(g.index(i), g.index(i + 1));
    } else {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) fn(g.index(i, j), g.index(i + 1, j));
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) fn(g.index(i, j), g.index(i, j + 1));
    }
}

}  // namespace detail

/// Discrete energy F_h(u). Requires u > 0.
inline double energy(const CellField& u, EnergyVariant v = EnergyVariant::forward) {
    const GridSpec& g = u.grid();
    detail::check_variant(g, v);
    require_positive(u);
    CompensatedSum s;
    detail::for_each_edge(g, [&](std::size_t a, std::size_t b) {
        s.add(detail::pair_term(v, u[a], u[b]).g);
    });
    return detail::energy_scale(g) * s.value();
}

/// Chemical potential H = h^{-dim} dF_h/du.
inline CellField potential(const CellField& u, EnergyVariant v = EnergyVariant::forward) {
    const GridSpec& g = u.grid();
    detail::check_variant(g, v);
    require_positive(u);
    CellField out(g);
    detail::for_each_edge(g, [&](std::size_t a, std::size_t b) {
        const auto t = detail::pair_term(v, u[a], u[b]);
        out[a] += t.ga;
        out[b] += t.gb;
    });
    out *= detail::energy_scale(g) / g.cell_volume();
    return out;
}

/// Directional derivative of potential(u) along w.
inline CellField hessian_apply(const CellField& u, const CellField& w,
                               EnergyVariant v = EnergyVariant::forward) {
    const GridSpec& g = u.grid();
    require_same_grid(g, w.grid());
    detail::check_variant(g, v);
    require_positive(u);
    CellField out(g);
    detail::for_each_edge(g, [&](std::size_t a, std::size_t b) {
        const auto t = detail::pair_term(v, u[a], u[b]);
        out[a] += t.gaa * w[a] + t.gab * w[b];
        out[b] += t.gab * w[a] + t.gbb * w[b];
    });
    out *= detail::energy_scale(g) / g.cell_volume();
    return out;
}

/// Jacobian of potential(u) as a sparse symmetric matrix (3-point in 1D, 5-point in 2D).
inline SparseMatrix hessian_matrix(const CellField& u, EnergyVariant v = EnergyVariant::forward) {
    const GridSpec& g = u.grid();
    detail::check_variant(g, v);
    require_positive(u);
    const double scale = detail::energy_scale(g) / g.cell_volume();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * g.edges());
    detail::for_each_edge(g, [&](std::size_t a, std::size_t b) {
        const auto p = detail::pair_term(v, u[a], u[b]);
        const auto ia = Eigen::Index(a), ib = Eigen::Index(b);
        t.emplace_back(ia, ia, scale * p.gaa);
        t.emplace_back(ia, ib, scale * p.gab);
        t.emplace_back(ib, ia, scale * p.gab);
        t.emplace_back(ib, ib, scale * p.gbb);
    });
    const auto nc = Eigen::Index(g.cells());
    SparseMatrix m(nc, nc);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

}  // namespace dlss
