#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "tmdmap/potentials.hpp"
#include "tmdmap/rng.hpp"

using namespace tmdmap;

namespace {

constexpr double kPi = std::numbers::pi;

double fd_derivative(const PotentialSystem& sys, std::vector<double> x, std::size_t k, double h = 1e-6) {
    x[k] += h;
    const double up = sys.energy(x);
    x[k] -= 2.0 * h;
    const double down = sys.energy(x);
    return (up - down) / (2.0 * h);
}

void check_gradient(const PotentialSystem& sys, double lo, double hi, std::uint64_t seed) {
    Rng rng(seed);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(sys.dim);
        for (double& c : x) c = lo + (hi - lo) * rng.uniform();
        const auto g = sys.grad(x);
        for (std::size_t k = 0; k < sys.dim; ++k) {
            const double fd = fd_derivative(sys, x, k);
            const double scale = std::max(1.0, std::abs(g[k]));
            EXPECT_LT(std::abs(fd - g[k]) / scale, 1e-4) << sys.name << " axis " << k;
        }
    }
}

}  // namespace

TEST(CirclePotential, ValuesAtReferenceAngles) {
    const auto sys = CircleSystem::standard();
    EXPECT_NEAR(circle_potential(sys.theta1), 0.0, 1e-12);
    EXPECT_NEAR(circle_potential(sys.theta2), 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(circle_potential(0.0), 6.25);
    EXPECT_NEAR(circle_potential(kPi), 2.25, 1e-15);
}

TEST(CirclePotential, StandardSystemMinima) {
    const auto sys = CircleSystem::standard();
    EXPECT_NEAR(sys.theta1, 1.8235, 5e-5);
    EXPECT_NEAR(sys.theta2, 4.4597, 5e-5);
    EXPECT_NEAR(sys.theta2, 2.0 * kPi - sys.theta1, 1e-14);
    EXPECT_EQ(sys.r, 0.1);
    EXPECT_EQ(sys.beta, 1.0);
    EXPECT_NO_THROW(sys.validate());
    EXPECT_NEAR(circle_potential_derivative(sys.theta1), 0.0, 1e-12);
    EXPECT_GT(circle_potential_second_derivative(sys.theta1), 0.0);
}

TEST(CirclePotential, MirrorSymmetry) {
    for (int k = 1; k < 1000; ++k) {
        const double t = 2.0 * kPi * k / 1000.0;
        EXPECT_NEAR(circle_potential(t), circle_potential(2.0 * kPi - t), 1e-13);
    }
}

TEST(CirclePotential, DerivativesMatchFiniteDifferences) {
    for (int k = 0; k < 100; ++k) {
        const double t = 0.05 + 6.2 * k / 100.0, h = 1e-6;
        const double d1 = (circle_potential(t + h) - circle_potential(t - h)) / (2 * h);
        const double d2 = (circle_potential_derivative(t + h) - circle_potential_derivative(t - h)) / (2 * h);
        EXPECT_NEAR(d1, circle_potential_derivative(t), 1e-4 * std::max(1.0, std::abs(d1)));
        EXPECT_NEAR(d2, circle_potential_second_derivative(t), 1e-4 * std::max(1.0, std::abs(d2)));
    }
}

TEST(MuellerPotential, MatchesDirectSummation) {
    const double a[] = {-1, -1, -6.5, 0.7}, b[] = {0, 0, 11, 0.6}, c[] = {-10, -10, -6.5, 0.7};
    const double D[] = {-200, -100, -170, 15}, X[] = {1, 0, -0.5, -1}, Y[] = {0, 0.5, 1.5, 1};
    auto direct = [&](double x1, double x2) {
        double v = 0;
        for (int i = 0; i < 4; ++i)
            v += D[i] * std::exp(a[i] * (x1 - X[i]) * (x1 - X[i]) + b[i] * (x1 - X[i]) * (x2 - Y[i]) +
                                 c[i] * (x2 - Y[i]) * (x2 - Y[i]));
        return v;
    };
    for (auto [x1, x2] : {std::pair{1.0, 0.0}, {-0.558, 1.441}, {0.623, 0.028}, {0.0, 1.0}, {-1.2, 0.3}}) {
        const double p[2] = {x1, x2};
        EXPECT_NEAR(mueller_potential(p), direct(x1, x2), 1e-11 * std::max(1.0, std::abs(direct(x1, x2))));
    }
    const double a_centre[2] = {-0.558, 1.441}, probe[2] = {0.0, 1.0};
    EXPECT_LT(mueller_potential(a_centre), mueller_potential(probe));
}

TEST(MuellerPotential, OverflowClampsToInfinity) {
    const double far[2] = {40.0, 40.0};
    EXPECT_TRUE(std::isinf(mueller_potential(far)));
    EXPECT_EQ(std::exp(-0.1 * mueller_potential(far)), 0.0);
}

TEST(TwoWellPotential, Values) {
    const double w1[2] = {1.0, 3.7}, w2[2] = {-1.0, -2.0}, top[2] = {0.0, 0.0}, p[2] = {2.0, 5.0};
    EXPECT_EQ(twowell_potential(w1), 0.0);
    EXPECT_EQ(twowell_potential(w2), 0.0);
    EXPECT_EQ(twowell_potential(top), 1.0);
    EXPECT_EQ(twowell_potential(p), 9.0);
}

TEST(TwoWellPotential, MirrorSymmetryIsExact) {
    Rng rng(3);
    for (int k = 0; k < 1000; ++k) {
        const double x[2] = {4 * rng.uniform() - 2, 4 * rng.uniform() - 2}, m[2] = {-x[0], x[1]};
        EXPECT_EQ(twowell_potential(x), twowell_potential(m));
    }
}

TEST(Potentials, GradientsMatchFiniteDifferences) {
    check_gradient(make_potential("mueller"), -1.5, 1.0, 1);
    check_gradient(make_potential("twowell"), -2.0, 2.0, 2);
    check_gradient(make_potential("circle"), 0.5, 1.5, 3);
    check_gradient(quadratic_system(3), -2.0, 2.0, 4);
    check_gradient(flat_system(2), -2.0, 2.0, 5);
}

TEST(TargetMeasure, Examples) {
    PointCloud flat_pts(2, {0.3, 0.1, -4.0, 2.0});
    for (double m : target_measure(flat_system(2), flat_pts)) EXPECT_EQ(m, 1.0);

    PointCloud tw(2, {0.0, 0.0, 1.0, 0.0});
    const auto mu = target_measure(twowell_system(1.0), tw);
    EXPECT_NEAR(mu[0] / mu[1], std::exp(-1.0), 1e-15);

    PointCloud c(2, {1.0, 0.0});
    EXPECT_NEAR(target_measure(circle_system(1.0), c)[0], std::exp(-6.25), 1e-15);
}

TEST(TargetMeasure, ScaledPotentialChangesMeasureByConstantFactor) {
    auto base = twowell_system(1.0);
    auto shifted = base;
    shifted.value = [](std::span<const double> x) { return twowell_potential(x) + 3.5; };
    Rng rng(9);
    PointCloud pts(2);
    for (int k = 0; k < 50; ++k) {
        const double p[2] = {3 * rng.uniform() - 1.5, rng.uniform()};
        pts.push_back(p);
    }
    const auto a = target_measure(base, pts), b = target_measure(shifted, pts);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i] / a[i], std::exp(-3.5), 1e-14);
}

TEST(Registry, NamesAndDefaults) {
    auto& reg = PotentialRegistry::instance();
    EXPECT_TRUE(reg.contains("circle"));
    EXPECT_TRUE(reg.contains("mueller"));
    EXPECT_TRUE(reg.contains("twowell"));
    EXPECT_EQ(reg.default_beta("mueller"), 0.1);
    EXPECT_THROW(make_potential("nope"), DomainError);
    reg.add("quad3", [](double b) { return quadratic_system(3, b); }, 2.0);
    EXPECT_EQ(make_potential("quad3").beta, 2.0);
    EXPECT_EQ(make_potential("quad3").dim, 3u);
}

TEST(PotentialSystem, Validation) {
    auto sys = twowell_system();
    sys.beta = 0.0;
    EXPECT_THROW(sys.validate(), DomainError);
    CircleSystem bad = CircleSystem::standard();
    std::swap(bad.theta1, bad.theta2);
    EXPECT_THROW(bad.validate(), DomainError);
}
