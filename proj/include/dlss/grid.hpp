/// @file grid.hpp
/// @brief Periodic cell/edge fields and the staggered difference operators.
///
/// Layout (0-based):
///   - cell i sits at x_i = (i+1) h, i = 0..N-1 (2D: cell (i,j), flat index i + N j)
///   - x-edge i sits at x_{i+1/2}, between cells i and i+1 (2D: (i+1/2, j))
///   - y-edge (i,j) sits at (i, j+1/2), between cells (i,j) and (i,j+1)
///   - all indices wrap modulo N
///
/// Operators:
///   gradient   (D_h f)_{i+1/2}   = (f_{i+1} - f_i) / h               cell -> edge
///   divergence (d_h g)_i         = (g_{i+1/2} - g_{i-1/2}) / h       edge -> cell
///   edge_average  f^_{i+1/2}     = (f_i + f_{i+1}) / 2               cell -> edge
///   cell_inner <f,g>             = h^dim sum f g
///   edge_inner [a,b]             = h^dim sum over all edges a b

#pragma once

#include "dlss/errors.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace dlss {

/// Neumaier-compensated accumulator.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
    CompensatedSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

/// Uniform periodic grid on [0,L]^dim with N intervals per axis.
class GridSpec {
public:
    GridSpec(int dim, int n, double length = 1.0) : dim_(dim), n_(n), length_(length) {
        if (dim != 1 && dim != 2) throw InvalidArgument("grid dimension must be 1 or 2");
        if (n < 3) throw InvalidArgument("grid needs N >= 3 intervals per axis");
        if (!(length > 0.0) || !std::isfinite(length))
            throw InvalidArgument("domain length must be positive and finite");
        h_ = length / n;
    }

    static GridSpec line(int n, double length = 1.0) { return GridSpec(1, n, length); }
    static GridSpec square(int n, double length = 1.0) { return GridSpec(2, n, length); }

    int dim() const noexcept { return dim_; }
    int n() const noexcept { return n_; }
    double length() const noexcept { return length_; }
    double h() const noexcept { return h_; }
    /// h^dim, the cell measure.
    double cell_volume() const noexcept { return dim_ == 1 ? h_ : h_ * h_; }

    std::size_t cells() const noexcept {
        return dim_ == 1 ? std::size_t(n_) : std::size_t(n_) * std::size_t(n_);
    }
    std::size_t edges() const noexcept { return std::size_t(dim_) * cells(); }

    std::size_t wrap(long i) const noexcept {
        const long r = i % n_;
        return std::size_t(r < 0 ? r + n_ : r);
    }
    std::size_t index(long i) const noexcept { return wrap(i); }
    std::size_t index(long i, long j) const noexcept { return wrap(i) + std::size_t(n_) * wrap(j); }

    /// Cell-centre coordinate along one axis.
    double coord(long i) const noexcept { return double(wrap(i) + 1) * h_; }

    friend bool operator==(const GridSpec& a, const GridSpec& b) noexcept {
        return a.dim_ == b.dim_ && a.n_ == b.n_ && a.length_ == b.length_;
    }

private:
    int dim_;
    int n_;
    double length_;
    double h_;
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b) {
    if (!(a == b)) throw InvalidArgument("fields live on different grids");
}

/// Scalar on cell centres.
class CellField {
public:
    explicit CellField(const GridSpec& grid, double value = 0.0)
        : grid_(grid), values_(grid.cells(), value) {}

    CellField(const GridSpec& grid, std::vector<double> values)
        : grid_(grid), values_(std::move(values)) {
        if (values_.size() != grid_.cells())
            throw InvalidArgument("cell field has wrong number of values");
    }

    /// Samples f at the cell centres; 1D f(x), 2D f(x, y) (y ignored in 1D).
    static CellField sample(const GridSpec& grid, const std::function<double(double, double)>& f) {
        CellField out(grid);
        const int n = grid.n();
        if (grid.dim() == 1) {
            for (int i = 0; i < n; ++i) out[i] = f(grid.coord(i), 0.0);
        } else {
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < n; ++i) out.at(i, j) = f(grid.coord(i), grid.coord(j));
        }
        return out;
    }

    const GridSpec& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    double operator[](std::size_t k) const noexcept { return values_[k]; }
    double& operator[](std::size_t k) noexcept { return values_[k]; }
    double at(long i) const noexcept { return values_[grid_.index(i)]; }
    double& at(long i) noexcept { return values_[grid_.index(i)]; }
    double at(long i, long j) const noexcept { return values_[grid_.index(i, j)]; }
    double& at(long i, long j) noexcept { return values_[grid_.index(i, j)]; }

    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }

    CellField& operator+=(const CellField& o) {
        require_same_grid(grid_, o.grid_);
        for (std::size_t k = 0; k < size(); ++k) values_[k] += o.values_[k];
        return *this;
    }
    CellField& operator-=(const CellField& o) {
        require_same_grid(grid_, o.grid_);
        for (std::size_t k = 0; k < size(); ++k) values_[k] -= o.values_[k];
        return *this;
    }
    CellField& operator*=(double s) noexcept {
        for (double& v : values_) v *= s;
        return *this;
    }
    CellField& operator+=(double s) noexcept {
        for (double& v : values_) v += s;
        return *this;
    }

    friend CellField operator+(CellField a, const CellField& b) { return a += b; }
    friend CellField operator-(CellField a, const CellField& b) { return a -= b; }
    friend CellField operator*(CellField a, double s) { return a *= s; }
    friend CellField operator*(double s, CellField a) { return a *= s; }
    friend bool operator==(const CellField& a, const CellField& b) {
        return a.grid_ == b.grid_ && a.values_ == b.values_;
    }

private:
    GridSpec grid_;
    std::vector<double> values_;
};

/// Scalar on edge midpoints: x-edges always, y-edges in 2D.
class EdgeField {
public:
    explicit EdgeField(const GridSpec& grid, double value = 0.0)
        : grid_(grid), x_(grid.cells(), value), y_(grid.dim() == 2 ? grid.cells() : 0, value) {}

    const GridSpec& grid() const noexcept { return grid_; }

    std::span<const double> x() const noexcept { return x_; }
    std::span<double> x() noexcept { return x_; }
    std::span<const double> y() const noexcept { return y_; }
    std::span<double> y() noexcept { return y_; }

    /// x-edge (i+1/2) or (i+1/2, j).
    double xe(long i, long j = 0) const noexcept { return x_[flat(i, j)]; }
    double& xe(long i, long j = 0) noexcept { return x_[flat(i, j)]; }
    /// y-edge (i, j+1/2).
    double ye(long i, long j) const noexcept { return y_[grid_.index(i, j)]; }
    double& ye(long i, long j) noexcept { return y_[grid_.index(i, j)]; }

    /// Pointwise product.
    EdgeField& operator*=(const EdgeField& o) {
        require_same_grid(grid_, o.grid_);
        for (std::size_t k = 0; k < x_.size(); ++k) x_[k] *= o.x_[k];
        for (std::size_t k = 0; k < y_.size(); ++k) y_[k] *= o.y_[k];
        return *this;
    }
    EdgeField& operator*=(double s) noexcept {
        for (double& v : x_) v *= s;
        for (double& v : y_) v *= s;
        return *this;
    }
    friend EdgeField operator*(EdgeField a, const EdgeField& b) { return a *= b; }
    friend EdgeField operator*(EdgeField a, double s) { return a *= s; }

    double min() const {
        double m = *std::min_element(x_.begin(), x_.end());
        if (!y_.empty()) m = std::min(m, *std::min_element(y_.begin(), y_.end()));
        return m;
    }

private:
    std::size_t flat(long i, long j) const noexcept {
        return grid_.dim() == 1 ? grid_.index(i) : grid_.index(i, j);
    }

    GridSpec grid_;
    std::vector<double> x_;
    std::vector<double> y_;
};

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

inline EdgeField gradient(const CellField& f) {
    const GridSpec& g = f.grid();
    const double inv_h = 1.0 / g.h();
    const int n = g.n();
    EdgeField out(g);
    if (g.dim() == 1) {
        for (int i = 0; i < n; ++i) out.xe(i) = (f.at(i + 1) - f.at(i)) * inv_h;
    } else {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                out.xe(i, j) = (f.at(i + 1, j) - f.at(i, j)) * inv_h;
                out.ye(i, j) = (f.at(i, j + 1) - f.at(i, j)) * inv_h;
            }
    }
    return out;
}

inline CellField divergence(const EdgeField& e) {
    const GridSpec& g = e.grid();
    const double inv_h = 1.0 / g.h();
    const int n = g.n();
    CellField out(g);
    if (g.dim() == 1) {
        for (int i = 0; i < n; ++i) out.at(i) = (e.xe(i) - e.xe(i - 1)) * inv_h;
    } else {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                out.at(i, j) = (e.xe(i, j) - e.xe(i - 1, j)) * inv_h +
                               (e.ye(i, j) - e.ye(i, j - 1)) * inv_h;
    }
    return out;
}

inline EdgeField edge_average(const CellField& f) {
    const GridSpec& g = f.grid();
    const int n = g.n();
    EdgeField out(g);
    if (g.dim() == 1) {
        for (int i = 0; i < n; ++i) out.xe(i) = 0.5 * (f.at(i) + f.at(i + 1));
    } else {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                out.xe(i, j) = 0.5 * (f.at(i, j) + f.at(i + 1, j));
                out.ye(i, j) = 0.5 * (f.at(i, j) + f.at(i, j + 1));
            }
    }
    return out;
}

inline double cell_inner(const CellField& f, const CellField& g) {
    require_same_grid(f.grid(), g.grid());
    CompensatedSum s;
    for (std::size_t k = 0; k < f.size(); ++k) s.add(f[k] * g[k]);
    return f.grid().cell_volume() * s.value();
}

/// Full-sum form: every edge once with weight h^dim. On a periodic grid this is
/// identical to the half-sum over the two edges adjacent to each cell.
inline double edge_inner(const EdgeField& a, const EdgeField& b) {
    require_same_grid(a.grid(), b.grid());
    CompensatedSum s;
    for (std::size_t k = 0; k < a.x().size(); ++k) s.add(a.x()[k] * b.x()[k]);
    for (std::size_t k = 0; k < a.y().size(); ++k) s.add(a.y()[k] * b.y()[k]);
    return a.grid().cell_volume() * s.value();
}

/// Total mass h^dim sum f.
inline double mass(const CellField& f) {
    return f.grid().cell_volume() * compensated_sum(f.values());
}

inline double mean(const CellField& f) { return compensated_sum(f.values()) / double(f.size()); }

/// Cyclic shift: out(i) = f(i - k) (2D: out(i,j) = f(i - kx, j - ky)).
inline CellField shift(const CellField& f, long kx, long ky = 0) {
    const GridSpec& g = f.grid();
    CellField out(g);
    const int n = g.n();
    if (g.dim() == 1) {
        for (int i = 0; i < n; ++i) out.at(i) = f.at(i - kx);
    } else {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) out.at(i, j) = f.at(i - kx, j - ky);
    }
    return out;
}

/// Throws NonPositiveState at the first entry that is not > 0.
inline void require_positive(const CellField& u) {
    for (std::size_t k = 0; k < u.size(); ++k)
        if (!(u[k] > 0.0)) throw NonPositiveState(k, u[k]);
}

inline bool is_positive(const CellField& u) {
    return std::all_of(u.values().begin(), u.values().end(), [](double v) { return v > 0.0; });
}

// ---------------------------------------------------------------------------
// Assembled operator matrices (edge vectors ordered x-edges then y-edges)
// ---------------------------------------------------------------------------

using SparseMatrix = Eigen::SparseMatrix<double>;

namespace matrix {

/// D_h as an (edges x cells) matrix.
inline SparseMatrix gradient(const GridSpec& g) {
    const long nc = long(g.cells());
    const int n = g.n();
    const double inv_h = 1.0 / g.h();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(2 * g.edges());
    if (g.dim() == 1) {
        for (int i = 0; i < n; ++i) {
            t.emplace_back(i, long(g.index(i + 1)), inv_h);
            t.emplace_back(i, i, -inv_h);
        }
    } else {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const long c = long(g.index(i, j));
                t.emplace_back(c, long(g.index(i + 1, j)), inv_h);
                t.emplace_back(c, c, -inv_h);
                t.emplace_back(nc + c, long(g.index(i, j + 1)), inv_h);
                t.emplace_back(nc + c, c, -inv_h);
            }
    }
    SparseMatrix m(long(g.edges()), nc);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

/// d_h as a (cells x edges) matrix; equals -gradient(g)^T.
inline SparseMatrix divergence(const GridSpec& g) {
    SparseMatrix m = -SparseMatrix(gradient(g).transpose());
    return m;
}

/// Cell-to-edge averaging as an (edges x cells) matrix.
inline SparseMatrix average(const GridSpec& g) {
    const long nc = long(g.cells());
    const int n = g.n();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(2 * g.edges());
    if (g.dim() == 1) {
        for (int i = 0; i < n; ++i) {
            t.emplace_back(i, long(g.index(i + 1)), 0.5);
            t.emplace_back(i, i, 0.5);
        }
    } else {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const long c = long(g.index(i, j));
                t.emplace_back(c, long(g.index(i + 1, j)), 0.5);
                t.emplace_back(c, c, 0.5);
                t.emplace_back(nc + c, long(g.index(i, j + 1)), 0.5);
                t.emplace_back(nc + c, c, 0.5);
            }
    }
    SparseMatrix m(long(g.edges()), nc);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

/// Diagonal matrix holding an edge field (x-edges then y-edges).
inline SparseMatrix edge_diagonal(const EdgeField& e) {
    const long ne = long(e.grid().edges());
    SparseMatrix m(ne, ne);
    m.reserve(Eigen::VectorXi::Constant(ne, 1));
    const long nx = long(e.x().size());
    for (long k = 0; k < nx; ++k) m.insert(k, k) = e.x()[k];
    for (long k = 0; k < long(e.y().size()); ++k) m.insert(nx + k, nx + k) = e.y()[k];
    m.makeCompressed();
    return m;
}

/// -d_h(w D_h .) assembled directly from its stencil; the same matrix as
/// -(divergence * edge_diagonal(w) * gradient).
inline SparseMatrix weighted_laplacian(const EdgeField& w) {
    const GridSpec& g = w.grid();
    const double inv_h2 = 1.0 / (g.h() * g.h());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(4 * g.edges());
    auto edge = [&](long a, long b, double weight) {
        const double c = weight * inv_h2;
        t.emplace_back(a, a, c);
        t.emplace_back(b, b, c);
        t.emplace_back(a, b, -c);
        t.emplace_back(b, a, -c);
    };
    const int n = g.n();
    if (g.dim() == 1) {
        for (int i = 0; i < n; ++i) edge(long(g.index(i)), long(g.index(i + 1)), w.xe(i));
    } else {
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                edge(long(g.index(i, j)), long(g.index(i + 1, j)), w.xe(i, j));
                edge(long(g.index(i, j)), long(g.index(i, j + 1)), w.ye(i, j));
            }
    }
    const long nc = long(g.cells());
    SparseMatrix m(nc, nc);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

}  // namespace matrix

// ---------------------------------------------------------------------------
// Eigen interop
// ---------------------------------------------------------------------------

inline Eigen::Map<const Eigen::VectorXd> as_vector(const CellField& f) {
    return {f.values().data(), Eigen::Index(f.size())};
}

inline Eigen::Map<Eigen::VectorXd> as_vector(CellField& f) {
    return {f.values().data(), Eigen::Index(f.size())};
}

inline CellField from_vector(const GridSpec& g, const Eigen::VectorXd& v) {
    return CellField(g, std::vector<double>(v.data(), v.data() + v.size()));
}

inline Eigen::VectorXd edge_vector(const EdgeField& e) {
    Eigen::VectorXd v(Eigen::Index(e.grid().edges()));
    const auto nx = Eigen::Index(e.x().size());
    for (Eigen::Index k = 0; k < nx; ++k) v[k] = e.x()[k];
    for (Eigen::Index k = 0; k < Eigen::Index(e.y().size()); ++k) v[nx + k] = e.y()[k];
    return v;
}

}  // namespace dlss
