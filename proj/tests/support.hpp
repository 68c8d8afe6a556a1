/// Shared helpers for the unit tests: seeded random fields.
#pragma once

#include "dlss/grid.hpp"

#include <cmath>
#include <random>

namespace dlss::testing {

inline std::mt19937_64& rng() {
    static std::mt19937_64 gen(20240611);
    return gen;
}

inline double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }

inline CellField random_cells(const GridSpec& g, double lo = -1.0, double hi = 1.0) {
    CellField f(g);
    for (double& v : f.values()) v = uniform(lo, hi);
    return f;
}

inline CellField random_positive(const GridSpec& g, double lo = 0.2, double hi = 1.5) {
    return random_cells(g, lo, hi);
}

/// Positive field built from a few low Fourier modes, smooth enough for every scheme.
inline CellField random_smooth(const GridSpec& g, double amplitude = 0.05) {
    const double k = 2.0 * 3.14159265358979323846 / g.length();
    double a[4];
    for (double& c : a) c = uniform(-amplitude / 4.0, amplitude / 4.0);
    const double px = uniform(0.0, 6.3), py = uniform(0.0, 6.3);
    return CellField::sample(g, [&](double x, double y) {
        return 1.0 + a[0] * std::cos(k * x + px) + a[1] * std::sin(2.0 * k * x) +
               (g.dim() == 2 ? a[2] * std::cos(k * y + py) + a[3] * std::sin(k * (x + y)) : 0.0);
    });
}

inline EdgeField random_edges(const GridSpec& g, double lo = -1.0, double hi = 1.0) {
    EdgeField e(g);
    for (double& v : e.x()) v = uniform(lo, hi);
    for (double& v : e.y()) v = uniform(lo, hi);
    return e;
}

inline CellField mean_zero(CellField f) {
    f += -mean(f);
    return f;
}

inline double max_abs_diff(const CellField& a, const CellField& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

inline double max_abs(const CellField& a) {
    double m = 0.0;
    for (double v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace dlss::testing
