#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "tmdmap/reference.hpp"

using namespace tmdmap;

namespace {

constexpr double kPi = std::numbers::pi;

// Composite Simpson rule for int_a^b exp(V).
double simpson_boltzmann(double a, double b, int m = 20000) {
    const double h = (b - a) / m;
    double s = std::exp(circle_potential(a)) + std::exp(circle_potential(b));
    for (int k = 1; k < m; ++k) s += (k % 2 ? 4.0 : 2.0) * std::exp(circle_potential(a + k * h));
    return s * h / 3.0;
}

GridField twowell_committor(std::size_t n) {
    const auto sys = twowell_system(1.0);
    Grid2D g = Grid2D::rectangle(-2.0, 2.0, -1.0, 1.0, n, (n + 1) / 2);
    const double a[2] = {-1.0, 0.0}, b[2] = {1.0, 0.0};
    return fd_committor_2d(sys, g, a, b, 0.1);
}

}  // namespace

TEST(CircleCommittor, BranchEndpointsAndMidpoint) {
    const auto sys = CircleSystem::standard();
    EXPECT_NEAR(analytic_circle_committor(sys, sys.theta1 + sys.r), 0.0, 1e-12);
    EXPECT_NEAR(analytic_circle_committor(sys, sys.theta2 - sys.r), 1.0, 1e-12);
    EXPECT_NEAR(analytic_circle_committor(sys, kPi), 0.5, 1e-6);
    EXPECT_EQ(analytic_circle_committor(sys, sys.theta1), 0.0);
    EXPECT_EQ(analytic_circle_committor(sys, sys.theta2), 1.0);
    EXPECT_THROW(analytic_circle_committor(sys, 2 * kPi), DomainError);
}

TEST(CircleCommittor, MatchesSimpsonOracleOnEveryBranch) {
    const auto sys = CircleSystem::standard();
    const double a_lo = sys.theta1 - sys.r, a_hi = sys.theta1 + sys.r, b_lo = sys.theta2 - sys.r,
                 b_hi = sys.theta2 + sys.r;
    const double inner = simpson_boltzmann(a_hi, b_lo);
    const double outer = simpson_boltzmann(b_hi, 2 * kPi) + simpson_boltzmann(0.0, a_lo);
    const CircleCommittor tab(sys);
    for (double t : {2.0, 2.5, kPi, 3.9, 4.3}) {
        const double expected = simpson_boltzmann(a_hi, t) / inner;
        EXPECT_NEAR(analytic_circle_committor(sys, t), expected, 1e-9) << t;
        EXPECT_NEAR(tab(t), expected, 1e-9) << t;
    }
    for (double t : {0.0, 0.7, 1.5}) {
        const double expected = simpson_boltzmann(t, a_lo) / outer;
        EXPECT_NEAR(analytic_circle_committor(sys, t), expected, 1e-9) << t;
        EXPECT_NEAR(tab(t), expected, 1e-9) << t;
    }
    for (double t : {4.7, 5.5, 6.2}) {
        const double expected = (simpson_boltzmann(t, 2 * kPi) + simpson_boltzmann(0.0, a_lo)) / outer;
        EXPECT_NEAR(analytic_circle_committor(sys, t), expected, 1e-9) << t;
        EXPECT_NEAR(tab(t), expected, 1e-9) << t;
    }
}

TEST(CircleCommittor, MirrorSymmetry) {
    const CircleCommittor q;
    EXPECT_NEAR(q(0.0), 0.5, 1e-9);
    for (int k = 1; k < 200; ++k) {
        const double t = 2 * kPi * k / 200;
        EXPECT_NEAR(q(t) + q(2 * kPi - t), 1.0, 1e-9);
    }
}

TEST(CircleCommittor, NondecreasingOnInnerArc) {
    const auto sys = CircleSystem::standard();
    const CircleCommittor q(sys);
    double prev = -1;
    for (int k = 0; k < 1000; ++k) {
        const double t = sys.theta1 + sys.r + (sys.theta2 - sys.theta1 - 2 * sys.r) * k / 999.0;
        const double v = q(t);
        EXPECT_GE(v, prev);
        EXPECT_NEAR(v, analytic_circle_committor(sys, t), 1e-10);
        prev = v;
    }
}

TEST(FdDirichlet, FlatPotentialGivesLinearProfile) {
    Grid2D g = Grid2D::rectangle(0.0, 1.0, 0.0, 0.5, 201, 101);
    const double h = g.hx();
    const auto f = fd_dirichlet_2d(flat_system(2), g, [h](double x, double) {
        if (x <= 2 * h + 1e-12) return 0.0;
        if (x >= 1 - 2 * h - 1e-12) return 1.0;
        return kFreeNode;
    });
    double worst = 0;
    for (std::size_t iy = 0; iy < g.ny; ++iy)
        for (std::size_t ix = 2; ix + 2 < g.nx; ++ix) {
            const double expected = (g.x(ix) - 2 * h) / (1 - 4 * h);
            worst = std::max(worst, std::abs(f.at(ix, iy) - expected));
        }
    EXPECT_LT(worst, 1e-3);
    EXPECT_LE(f.residual_norm, 1e-10);
}

TEST(FdCommittor, TwoWellAntisymmetryAndRange) {
    const auto f = twowell_committor(201);
    const auto& g = f.grid;
    for (std::size_t iy = 0; iy < g.ny; ++iy)
        for (std::size_t ix = 0; ix < g.nx; ++ix) {
            const double v = f.at(ix, iy), m = f.at(g.nx - 1 - ix, iy);
            ASSERT_FALSE(std::isnan(v));
            EXPECT_NEAR(v + m, 1.0, 1e-6);
            EXPECT_GE(v, -1e-12);
            EXPECT_LE(v, 1 + 1e-12);
        }
}

TEST(FdCommittor, RefinementChangesShrink) {
    // The staircase balls make single halvings non-monotone.
    std::vector<GridField> f;
    for (std::size_t n : {101, 201, 401, 801}) f.push_back(twowell_committor(n));
    std::vector<double> d;
    for (std::size_t k = 0; k + 1 < f.size(); ++k) {
        const std::size_t r0 = std::size_t{1} << k, r1 = r0 * 2;
        double s = 0;
        std::size_t count = 0;
        for (std::size_t iy = 0; iy < f[0].grid.ny; ++iy)
            for (std::size_t ix = 0; ix < f[0].grid.nx; ++ix) {
                const double v = f[k].at(r0 * ix, r0 * iy) - f[k + 1].at(r1 * ix, r1 * iy);
                s += v * v;
                ++count;
            }
        d.push_back(std::sqrt(s / static_cast<double>(count)));
        EXPECT_LT(d.back(), 1e-2);
    }
    EXPECT_LT(d.back(), d.front());
}

TEST(FdCommittor, RequiresResolvedBalls) {
    const double a[2] = {-1.0, 0.0}, b[2] = {1.0, 0.0};
    EXPECT_THROW(fd_committor_2d(twowell_system(), Grid2D::rectangle(-2, 2, -1, 1, 21, 11), a, b, 0.1), DomainError);
}

TEST(FdDirichlet, NoPathBetweenValuesIsAnError) {
    Grid2D g = Grid2D::rectangle(0.0, 1.0, 0.0, 1.0, 21, 21);
    EXPECT_THROW(fd_dirichlet_2d(flat_system(2), g, [](double x, double) { return x < 0.1 ? 0.0 : kFreeNode; }),
                 Error);
}

TEST(Grid2D, FitCoversMuellerSublevelSet) {
    const auto sys = mueller_system();
    const auto g = Grid2D::fit(sys, 10.0, 101, 101);
    EXPECT_LE(g.x_lo, -1.68);
    EXPECT_GE(g.x_hi, 1.14);
    EXPECT_LE(g.y_lo, -0.3);
    EXPECT_GE(g.y_hi, 2.06);
    std::size_t active = 0;
    for (std::size_t iy = 0; iy < g.ny; ++iy)
        for (std::size_t ix = 0; ix < g.nx; ++ix) {
            const double p[2] = {g.x(ix), g.y(iy)};
            EXPECT_EQ(g.active(g.node(ix, iy)), sys.energy(p) <= 10.0);
            active += g.active(g.node(ix, iy));
        }
    EXPECT_EQ(g.active_nodes().size(), active);
}

TEST(GridField, BilinearInterpolationIsExactForBilinearFields) {
    GridField f;
    f.grid = Grid2D::rectangle(-1, 1, 0, 2, 11, 21);
    f.values.resize(f.grid.size());
    for (std::size_t iy = 0; iy < f.grid.ny; ++iy)
        for (std::size_t ix = 0; ix < f.grid.nx; ++ix)
            f.values[f.grid.node(ix, iy)] = 2 * f.grid.x(ix) - f.grid.y(iy) + 0.5 * f.grid.x(ix) * f.grid.y(iy);
    for (auto [x, y] : {std::pair{0.13, 0.77}, {-1.0, 0.0}, {1.0, 2.0}, {0.999, 1.234}})
        EXPECT_NEAR(f.interpolate(x, y), 2 * x - y + 0.5 * x * y, 1e-13);
    EXPECT_TRUE(std::isnan(f.interpolate(1.5, 0.5)));
}

TEST(Rmse, Examples) {
    const std::vector<double> a{0.1, 0.5, 0.9, 0.3};
    EXPECT_EQ(rmse(a, a), 0.0);
    std::vector<double> b = a;
    for (double& v : b) v += 0.25;
    EXPECT_NEAR(rmse(a, b), 0.25 * 2.0, 1e-15);
    EXPECT_NEAR(normalized_rmse(a, b), 0.25, 1e-15);
    std::vector<double> c = a;
    c[2] += 0.3;
    EXPECT_NEAR(rmse(a, c), 0.3, 1e-15);
    EXPECT_THROW(rmse(a, std::vector<double>{1.0}), DimensionError);
}
