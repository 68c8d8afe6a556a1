#include "dlss/lab.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace dlss;
using dlss::testing::max_abs_diff;

namespace {

SchemeConfig exim(double dt) {
    SchemeConfig c;
    c.dt = dt;
    return c;
}

/// Continuous residual by nested fourth-order central differences of the profile.
double fd_residual(const ManufacturedSolution& p, double x, double t, double d) {
    auto dx = [d](auto f, double y) { return (f(y - 2 * d) - 8 * f(y - d) + 8 * f(y + d) - f(y + 2 * d)) / (12 * d); };
    auto u = [&](double y) { return p.value(y, t); };
    auto ux = [&](double y) { return dx(u, y); };
    auto uxx = [&](double y) { return dx(ux, y); };
    auto mu = [&](double y) { return ux(y) * ux(y) / (2 * u(y) * u(y)) - uxx(y) / u(y); };
    auto flux = [&](double y) { return u(y) * dx(mu, y); };
    const double dt = 1e-4;
    const double ut = (p.value(x, t + dt) - p.value(x, t - dt)) / (2 * dt);
    return ut - dx(flux, x);
}

/// Richardson-extrapolated fd_residual.
double fd_residual(const ManufacturedSolution& p, double x, double t) {
    return (16.0 * fd_residual(p, x, t, 5e-3) - fd_residual(p, x, t, 1e-2)) / 15.0;
}

/// Periodic nearest coarse cell by exhaustive search; ties go to the cell ahead of x.
long brute_nearest(const GridSpec& coarse, double x) {
    const double len = coarse.length();
    long best = -1;
    double best_d = 1e300;
    for (long k = 0; k < coarse.n(); ++k) {
        double ahead = std::fmod(coarse.coord(k) - x + 2 * len, len);  // in [0, L)
        const double d = std::min(ahead, len - ahead);
        const bool tie = std::abs(d - best_d) < 1e-12;
        if (d < best_d - 1e-12 || (tie && ahead <= len / 2)) {
            best = k;
            best_d = d;
        }
    }
    return best;
}

}  // namespace

TEST(InitialCondition, CosineBumpValues) {
    const double eps = 1e-3;
    const InitialCondition ic = InitialCondition::cosine(eps, 8.0);
    const GridSpec g = GridSpec::line(4);
    const CellField u = ic.sample(g);
    EXPECT_DOUBLE_EQ(u.at(3), std::pow(std::sqrt(eps) + 1.0, 2));  // x = L
    EXPECT_NEAR(u.at(1), eps, 1e-15);                                // x = L/2
    const CellField v = ic.sample(GridSpec::square(4));
    EXPECT_DOUBLE_EQ(v.at(3, 3), std::pow(std::sqrt(eps) + 1.0, 2));
    EXPECT_NEAR(v.at(1, 3), eps, 1e-15);
    EXPECT_NEAR(v.at(1, 1), std::pow(std::sqrt(eps) + 1.0, 2), 1e-12);
    EXPECT_EQ(ic.describe(), "cosine:eps=0.001,m=8");
    EXPECT_THROW(InitialCondition::cosine(0.0, 1.0), InvalidArgument);
    EXPECT_THROW(InitialCondition::cosine(1e-3, -1.0), InvalidArgument);
}

TEST(InitialCondition, ZeroExponentIsConstant) {
    const CellField u = InitialCondition::cosine(1.0, 0.0).sample(GridSpec::line(16));
    for (double v : u.values()) EXPECT_DOUBLE_EQ(v, 4.0);
}

TEST(Run, ConstantStateStaysPut) {
    const GridSpec g = GridSpec::line(16);
    const RunResult r = run(CellField(g, 0.5), exim(1e-6), 1e-5, {0.0, 5e-6});
    for (const auto& row : r.trace.rows) {
        EXPECT_EQ(row.energy, 0.0);
        EXPECT_NEAR(row.mass, 0.5, 1e-15);
    }
    EXPECT_LT(max_abs_diff(r.final_state, CellField(g, 0.5)), 1e-15);
}

TEST(Run, ReportTimesAreHitExactly) {
    const GridSpec g = GridSpec::line(32);
    const std::vector<double> report{3.2e-6, 0.0, 1e-6, 1e-6, 7.3e-6};
    const RunResult r = run(InitialCondition::cosine(1e-3, 1.0), g, exim(3e-7), 7.3e-6, report);
    ASSERT_EQ(r.snapshots.size(), 4u);
    const double expected[] = {0.0, 1e-6, 3.2e-6, 7.3e-6};
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(r.snapshots[k].t, expected[k]);
    EXPECT_EQ(r.trace.rows.back().t, 7.3e-6);
    for (std::size_t k = 1; k < r.trace.rows.size(); ++k) {
        EXPECT_GT(r.trace.rows[k].t, r.trace.rows[k - 1].t);
        EXPECT_EQ(r.trace.rows[k].step, long(k));
        EXPECT_NEAR(r.trace.rows[k].mass, r.trace.rows[0].mass, 1e-14);
        EXPECT_LE(r.trace.rows[k].energy, r.trace.rows[k - 1].energy);
        EXPECT_LE(r.trace.rows[k].slack, 1e-10);
    }
    EXPECT_EQ(r.snapshots.back().u, r.final_state);
    EXPECT_EQ(r.trace.initial_condition, "cosine:eps=0.001,m=1");
}

TEST(Run, RejectsBadTimes) {
    const CellField u(GridSpec::line(8), 1.0);
    EXPECT_THROW(run(u, exim(1e-6), 0.0, {}), InvalidArgument);
    EXPECT_THROW(run(u, exim(1e-6), 1e-5, {2e-5}), InvalidArgument);
    EXPECT_THROW(run(u, exim(1e-6), 1e-5, {-1e-6}), InvalidArgument);
}

TEST(Run, SolverFailureNamesTheStep) {
    const GridSpec g = GridSpec::line(64);
    SchemeConfig c = exim(1e-4);
    c.scheme = Scheme::explicit_euler;
    try {
        run(InitialCondition::cosine(1e-3, 8.0), g, c, 1e-2, {});
        FAIL() << "expected RunFailure";
    } catch (const RunFailure& e) {
        EXPECT_GE(e.step(), 1);
        EXPECT_NE(std::string(e.what()).find("step "), std::string::npos);
    }
}

TEST(Manufactured, ResidualMatchesFiniteDifferences) {
    for (double scale : {1.0, 0.3})
        for (double length : {1.0, 2.0}) {
            const ManufacturedSolution p = ManufacturedSolution::cosine_decay(scale, length);
            for (double x : {0.1, 0.37, 0.5, 0.81})
                for (double t : {0.0, 0.5}) {
                    const double a = p.residual(x * length, t), b = fd_residual(p, x * length, t);
                    EXPECT_NEAR(a, b, 1e-5 * std::max(1.0, std::abs(a))) << x << " " << t;
                }
        }
}

TEST(Consistency, ConstantProfileHasNoTruncationError) {
    EXPECT_EQ(truncation_error(ManufacturedSolution::constant(2.0), GridSpec::line(16), 1e-4, 0.0), 0.0);
    EXPECT_THROW(truncation_error(ManufacturedSolution::constant(2.0), GridSpec::square(8), 1e-4, 0.0),
                 InvalidArgument);
}

TEST(Consistency, TruncationErrorIsOneHomogeneous) {
    const GridSpec g = GridSpec::line(32);
    const double t1 = truncation_error(ManufacturedSolution::cosine_decay(1.0), g, 1e-5, 0.0);
    const double t2 = truncation_error(ManufacturedSolution::cosine_decay(2.0), g, 1e-5, 0.0);
    EXPECT_NEAR(t2, 2.0 * t1, 1e-9 * t2);
}

TEST(Consistency, StudyHalvesBothSteps) {
    const auto rows = consistency_study(ManufacturedSolution::cosine_decay(), 16, 1e-5, 4);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_FALSE(rows[0].ratio.has_value());
    for (std::size_t k = 1; k < rows.size(); ++k) {
        EXPECT_EQ(rows[k].n, 2 * rows[k - 1].n);
        EXPECT_EQ(rows[k].dt, 0.5 * rows[k - 1].dt);
        EXPECT_DOUBLE_EQ(*rows[k].ratio, rows[k - 1].tau_inf / rows[k].tau_inf);
        EXPECT_GT(*rows[k].ratio, 1.0);
    }
    const auto one = consistency_study(ManufacturedSolution::cosine_decay(), 16, 1e-5, 1);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_FALSE(one[0].ratio.has_value());
    EXPECT_THROW(consistency_study(ManufacturedSolution::cosine_decay(), 16, 1e-5, 0), InvalidArgument);
}

TEST(NearestNeighbour, MatchesExhaustiveSearch) {
    for (int dim : {1, 2})
        for (auto [nc, nf] : {std::pair{4, 8}, {5, 20}, {10, 160}, {6, 9}}) {
            if (dim == 2 && nf > 20) continue;
            const GridSpec gc(dim, nc, 1.7), gf(dim, nf, 1.7);
            const CellField coarse = dlss::testing::random_cells(gc);
            const CellField fine = dlss::testing::random_cells(gf);
            double sum = 0.0;
            for (int j = 0; j < (dim == 2 ? nf : 1); ++j)
                for (int i = 0; i < nf; ++i) {
                    const long ki = brute_nearest(gc, gf.coord(i));
                    const long kj = dim == 2 ? brute_nearest(gc, gf.coord(j)) : 0;
                    const double d = coarse.at(ki, kj) - fine.at(i, j);
                    sum += d * d;
                }
            EXPECT_NEAR(nearest_neighbor_l2(coarse, fine), std::sqrt(gf.cell_volume() * sum), 1e-12)
                << dim << " " << nc << " " << nf;
        }
}

TEST(NearestNeighbour, SameGridAndMismatchedDomains) {
    const GridSpec g = GridSpec::line(12);
    const CellField u = dlss::testing::random_cells(g);
    EXPECT_EQ(nearest_neighbor_l2(u, u), 0.0);
    EXPECT_THROW(nearest_neighbor_l2(CellField(GridSpec::line(4, 2.0)), u), InvalidArgument);
}

TEST(ConvergenceStudy, TwoLevelsGiveOneRowWithoutOrder) {
    const ConvergenceResult r =
        convergence_study(InitialCondition::cosine(1e-3, 1.0), 1, 1.0, exim(1.0), {10, 20}, 1.6e-6, 2e-6);
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.rows[0].n, 10);
    EXPECT_FALSE(r.rows[0].order.has_value());
    EXPECT_GT(r.rows[0].l2_error, 0.0);
    EXPECT_EQ(r.solutions.size(), 2u);
}

TEST(ConvergenceStudy, ParallelLevelsMatchSerial) {
    const std::vector<int> ns{10, 20, 40};
    const auto ic = InitialCondition::cosine(1e-3, 1.0);
    const ConvergenceResult a = convergence_study(ic, 1, 1.0, exim(1.0), ns, 1.6e-6, 2e-6, 1);
    const ConvergenceResult b = convergence_study(ic, 1, 1.0, exim(1.0), ns, 1.6e-6, 2e-6, 3);
    ASSERT_EQ(a.rows.size(), 2u);
    for (std::size_t k = 0; k < a.rows.size(); ++k) EXPECT_EQ(a.rows[k].l2_error, b.rows[k].l2_error);
    for (std::size_t k = 0; k < ns.size(); ++k) EXPECT_EQ(a.solutions[k], b.solutions[k]);
    ASSERT_TRUE(a.rows[1].order.has_value());
    EXPECT_DOUBLE_EQ(*a.rows[1].order, std::log2(a.rows[0].l2_error / a.rows[1].l2_error));
}

TEST(ConvergenceStudy, RejectsBadLevels) {
    const auto ic = InitialCondition::cosine(1e-3, 1.0);
    EXPECT_THROW(convergence_study(ic, 1, 1.0, exim(1.0), {10}, 1.6e-6, 1e-6), InvalidArgument);
    EXPECT_THROW(convergence_study(ic, 1, 1.0, exim(1.0), {20, 10}, 1.6e-6, 1e-6), InvalidArgument);
    EXPECT_THROW(convergence_study(ic, 1, 1.0, exim(1.0), {10, 20}, 0.0, 1e-6), InvalidArgument);
}
