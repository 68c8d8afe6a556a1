#include "dlss/fisher.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dlss;
using dlss::testing::random_positive;

namespace {

const EnergyVariant all_variants[] = {EnergyVariant::forward, EnergyVariant::backward,
                                      EnergyVariant::symmetric, EnergyVariant::central};

bool valid(int dim, EnergyVariant v) { return dim == 1 || v != EnergyVariant::central; }

/// Central difference of energy in coordinate k with a step relative to u_k.
double fd_partial(const CellField& u, std::size_t k, EnergyVariant v) {
    const double eps = 1e-6 * u[k];
    CellField up = u, dn = u;
    up[k] += eps;
    dn[k] -= eps;
    return (energy(up, v) - energy(dn, v)) / (2.0 * eps);
}

/// 1D forward potential as written out by hand, with a 1-based cyclic index.
CellField closed_form_1d(const CellField& u) {
    const GridSpec& g = u.grid();
    const double h = g.h();
    CellField H(g);
    for (int i = 0; i < g.n(); ++i) {
        const double um = u.at(i - 1), uc = u.at(i), up = u.at(i + 1);
        H.at(i) = -(up - uc) * (up - uc) / (2.0 * h * h * uc * uc) - ((up - uc) / uc - (uc - um) / um) / (h * h);
    }
    return H;
}

/// 2D forward potential as written out by hand.
CellField closed_form_2d(const CellField& u) {
    const GridSpec& g = u.grid();
    const double h2 = g.h() * g.h();
    CellField H(g);
    for (int j = 0; j < g.n(); ++j)
        for (int i = 0; i < g.n(); ++i) {
            const double c = u.at(i, j);
            const double e = u.at(i + 1, j), w = u.at(i - 1, j), n = u.at(i, j + 1), s = u.at(i, j - 1);
            H.at(i, j) = -((e - c) * (e - c) + (n - c) * (n - c)) / (2.0 * h2 * c * c) -
                         ((e - c) / c - (c - w) / w + (n - c) / c - (c - s) / s) / h2;
        }
    return H;
}

}  // namespace

TEST(Energy, ConstantFieldHasZeroEnergyAndPotential) {
    for (int dim : {1, 2})
        for (EnergyVariant v : all_variants) {
            if (!valid(dim, v)) continue;
            const CellField u(GridSpec(dim, 6), 0.7);
            EXPECT_EQ(energy(u, v), 0.0);
            const CellField H = potential(u, v);
            for (double x : H.values()) EXPECT_EQ(x, 0.0);
        }
}

TEST(Energy, AlternatingFieldOnFourCells) {
    const CellField u(GridSpec::line(4), {1, 2, 1, 2});
    EXPECT_DOUBLE_EQ(energy(u), 6.0);
    EXPECT_DOUBLE_EQ(energy(shift(u, 1)), energy(u));
}

TEST(Energy, TwoDimensionalSumHasNoMeshPrefactor) {
    const GridSpec g = GridSpec::square(3, 2.0);
    const CellField u = CellField::sample(g, [](double x, double y) { return 1.0 + 0.3 * x + 0.1 * x * y; });
    double expected = 0.0;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) {
            const double c = u.at(i, j), e = u.at(i + 1, j), n = u.at(i, j + 1);
            expected += 0.5 * ((e - c) * (e - c) + (n - c) * (n - c)) / c;
        }
    EXPECT_NEAR(energy(u), expected, 1e-14 * expected);
}

TEST(Energy, RejectsNonPositiveStates) {
    const CellField u(GridSpec::line(4), {1, 2, 0, 2});
    EXPECT_THROW(energy(u), NonPositiveState);
    EXPECT_THROW(potential(u), NonPositiveState);
    EXPECT_THROW(hessian_apply(u, u), NonPositiveState);
}

TEST(Energy, CentralVariantIsOneDimensional) {
    const CellField u(GridSpec::square(4), 1.0);
    EXPECT_THROW(energy(u, EnergyVariant::central), InvalidArgument);
    EXPECT_NO_THROW(energy(CellField(GridSpec::line(4), 1.0), EnergyVariant::central));
}

TEST(Energy, VariantNamesRoundTrip) {
    for (EnergyVariant v : all_variants) EXPECT_EQ(parse_energy_variant(to_string(v)), v);
    EXPECT_THROW(parse_energy_variant("upwind"), InvalidArgument);
}

TEST(Energy, NonNegativeHomogeneousAndConvex) {
    for (int dim : {1, 2})
        for (EnergyVariant v : all_variants) {
            if (!valid(dim, v)) continue;
            const GridSpec g(dim, 5);
            for (int rep = 0; rep < 25; ++rep) {
                const CellField a = random_positive(g, 0.01, 2.0);
                const CellField b = random_positive(g, 0.01, 2.0);
                const double fa = energy(a, v), fb = energy(b, v);
                EXPECT_GE(fa, 0.0);
                CellField scaled = a;
                scaled *= 2.5;
                EXPECT_NEAR(energy(scaled, v), 2.5 * fa, 1e-12 * fa);
                const double lam = dlss::testing::uniform(0.0, 1.0);
                CellField mix = a;
                mix *= lam;
                CellField tail = b;
                tail *= 1.0 - lam;
                mix += tail;
                EXPECT_LE(energy(mix, v), lam * fa + (1.0 - lam) * fb + 1e-12 * std::max(1.0, fa + fb));
            }
        }
}

TEST(Potential, MatchesClosedForm1D) {
    const CellField u(GridSpec::line(4), {1, 2, 1, 2});
    const CellField H = potential(u);
    const CellField ref = closed_form_1d(u);
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(H.at(i), ref.at(i), 1e-12 * std::abs(ref.at(i)));
        EXPECT_NEAR(H.at(i) * u.grid().h(), fd_partial(u, std::size_t(i), EnergyVariant::forward),
                    1e-6 * std::abs(H.at(i) * u.grid().h()));
    }
    for (int rep = 0; rep < 20; ++rep) {
        const CellField r = random_positive(GridSpec::line(9, 0.8), 0.01, 1.0);
        const CellField a = potential(r), b = closed_form_1d(r);
        for (int i = 0; i < 9; ++i) EXPECT_NEAR(a.at(i), b.at(i), 1e-11 * std::max(1.0, std::abs(b.at(i))));
    }
}

TEST(Potential, MatchesClosedForm2D) {
    for (int rep = 0; rep < 20; ++rep) {
        const CellField r = random_positive(GridSpec::square(5, 1.7), 0.01, 1.0);
        const CellField a = potential(r), b = closed_form_2d(r);
        for (std::size_t k = 0; k < r.size(); ++k)
            EXPECT_NEAR(a[k], b[k], 1e-11 * std::max(1.0, std::abs(b[k])));
    }
}

TEST(Potential, IsTheScaledGradientOfEnergy) {
    for (int dim : {1, 2})
        for (EnergyVariant v : all_variants) {
            if (!valid(dim, v)) continue;
            const GridSpec g(dim, dim == 1 ? 7 : 4, 1.3);
            for (int rep = 0; rep < 10; ++rep) {
                const CellField u = random_positive(g, 0.05, 1.5);
                const CellField H = potential(u, v);
                double scale = 0.0;
                for (double x : H.values()) scale = std::max(scale, std::abs(x) * g.cell_volume());
                for (std::size_t k = 0; k < u.size(); ++k)
                    EXPECT_NEAR(H[k] * g.cell_volume(), fd_partial(u, k, v), 1e-6 * scale)
                        << to_string(v) << " dim " << dim;
            }
        }
}

TEST(Hessian, MatchesFiniteDifferenceOfPotential) {
    for (int dim : {1, 2})
        for (EnergyVariant v : all_variants) {
            if (!valid(dim, v)) continue;
            const GridSpec g(dim, 5);
            for (int rep = 0; rep < 5; ++rep) {
                const CellField u = random_positive(g, 0.2, 1.5);
                const CellField w = dlss::testing::random_cells(g);
                const double eps = 1e-6;
                CellField up = w, dn = w;
                up *= eps;
                up += u;
                dn *= -eps;
                dn += u;
                CellField fd = potential(up, v);
                fd -= potential(dn, v);
                fd *= 1.0 / (2.0 * eps);
                const CellField hw = hessian_apply(u, w, v);
                const double scale = dlss::testing::max_abs(hw);
                EXPECT_LT(dlss::testing::max_abs_diff(hw, fd), 1e-6 * scale) << to_string(v);
            }
        }
}

TEST(Hessian, ZeroDirectionSymmetryAndMatrixForm) {
    for (int dim : {1, 2})
        for (EnergyVariant v : all_variants) {
            if (!valid(dim, v)) continue;
            const GridSpec g(dim, 6);
            const CellField u = random_positive(g);
            const CellField h0 = hessian_apply(u, CellField(g), v);
            for (double x : h0.values()) EXPECT_EQ(x, 0.0);
            const CellField a = dlss::testing::random_cells(g), b = dlss::testing::random_cells(g);
            const double ab = cell_inner(hessian_apply(u, a, v), b);
            const double ba = cell_inner(a, hessian_apply(u, b, v));
            EXPECT_NEAR(ab, ba, 1e-10 * std::max(1.0, std::abs(ab)));
            const Eigen::VectorXd m = hessian_matrix(u, v) * as_vector(a);
            EXPECT_LT((m - as_vector(hessian_apply(u, a, v))).cwiseAbs().maxCoeff(),
                      1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()));
            // One-homogeneity puts u in the kernel.
            EXPECT_LT(dlss::testing::max_abs(hessian_apply(u, u, v)), 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff()));
        }
}

TEST(Hessian, PositiveSemidefinite) {
    for (int dim : {1, 2}) {
        const GridSpec g(dim, 5);
        for (int rep = 0; rep < 20; ++rep) {
            const CellField u = random_positive(g, 0.01, 1.0);
            const CellField w = dlss::testing::random_cells(g);
            EXPECT_GE(cell_inner(hessian_apply(u, w), w), -1e-10);
        }
    }
}
