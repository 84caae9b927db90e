#include <cmath>
#include <numbers>
#include <stdexcept>

#include <gtest/gtest.h>

#include "tmdmap/experiments.hpp"
#include "tmdmap/parallel.hpp"

using namespace tmdmap;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST(ConsistencyError, ConstantFunctionHasNoError) {
    const auto theta = sample_circle_angles(CircleDensity::Uniform, 500, 1);
    const auto c = embed_circle(theta);
    const auto K = build_kernel(c, 0.05);
    const auto b = build_tmdmap(K, kde(K), circle_measure(theta, 1.0));
    const std::vector<double> f(500, 3.0), zero(500, 0.0);
    for (std::size_t i : {0u, 250u, 499u}) EXPECT_NEAR(consistency_error(b, f, zero, i), 0.0, 1e-10);
}

TEST(ConsistencyError, SineAtPiReducesToScaledGenerator) {
    EXPECT_NEAR(circle_generator_of_sin(kPi, 1.0), 0.0, 1e-14);
    std::vector<double> theta = sample_circle_angles(CircleDensity::Uniform, 800, 2);
    theta.push_back(kPi);
    const auto c = embed_circle(theta);
    const auto K = build_kernel(c, 0.03);
    const auto b = build_tmdmap(K, kde(K), circle_measure(theta, 1.0));
    std::vector<double> f(theta.size()), lf(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        f[i] = std::sin(theta[i]);
        lf[i] = circle_generator_of_sin(theta[i], 1.0);
    }
    const std::size_t last = theta.size() - 1;
    EXPECT_NEAR(consistency_error(b, f, lf, last), 4.0 * apply_generator(b, f)[last], 1e-12);

    const auto index = NeighborIndex::build(c, kernel_radius(0.03, 1e-8) / 4);
    const auto row = tmdmap_row(c, index, 0.03, circle_measure(theta, 1.0), last);
    EXPECT_NEAR(consistency_error(row, f, 0.0), consistency_error(b, f, lf, last), 1e-11);
}

TEST(CircleGeneratorOfSine, MatchesFiniteDifferenceDefinition) {
    for (double t : {0.3, 1.2, 2.5, 4.0, 5.9}) {
        const double h = 1e-4;
        const double f2 = (std::sin(t + h) - 2 * std::sin(t) + std::sin(t - h)) / (h * h);
        const double vp = (circle_potential(t + h) - circle_potential(t - h)) / (2 * h);
        EXPECT_NEAR(circle_generator_of_sin(t, 2.0), f2 / 2.0 - vp * std::cos(t), 1e-5);
    }
}

TEST(Schedule, SolvesDefiningRelationWithinPaperRange) {
    for (double eps : {0.023, 0.028, 0.033}) {
        const auto n = static_cast<double>(n_from_schedule(eps));
        EXPECT_NEAR(n / std::log(n), 0.25 * std::pow(eps, -2.5), 1.0);
        EXPECT_GE(n, 1e4);
        EXPECT_LE(n, 3.3e4);
    }
    EXPECT_GT(n_from_schedule(0.023), n_from_schedule(0.033));
}

TEST(VarianceAlpha, SelfConsistencyAndMonotonicity) {
    for (std::size_t d : {1u, 2u, 3u})
        for (double eps : {0.05, 0.1, 0.3}) {
            const double n = n_from_variance_scaling(eps, d);
            EXPECT_NEAR(variance_alpha(n, eps, d), 1.0, 1e-10);
        }
    double prev = INFINITY;
    for (double n = 10; n < 1e8; n *= 1.7) {
        const double a = variance_alpha(n, 0.1, 2);
        EXPECT_LT(a, prev);
        prev = a;
    }
    EXPECT_THROW(variance_alpha(1.0, 0.1, 2), DomainError);
}

TEST(VarianceAlpha, BandwidthAtTenThousandPoints) {
    EXPECT_NEAR(eps_from_variance_scaling(1e4, 2), 0.17, 0.005);
}

TEST(Fits, LinearQuadraticPowerLaw) {
    const std::vector<double> x{1, 2, 3, 4, 5, 6};
    std::vector<double> y, yq, yp;
    const double noise[] = {0.01, -0.02, 0.015, -0.01, 0.005, 0.0};
    for (std::size_t i = 0; i < x.size(); ++i) {
        y.push_back(1.5 - 0.5 * x[i]);
        yq.push_back(1.5 - 0.5 * x[i] + noise[i]);
        yp.push_back(0.54 * std::pow(x[i], 0.65));
    }
    const auto l = fit_linear(x, y);
    EXPECT_NEAR(l.a, 1.5, 1e-13);
    EXPECT_NEAR(l.b, -0.5, 1e-13);
    EXPECT_TRUE(fit_quadratic(x, yq).interval_contains_zero());
    std::vector<double> yc(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) yc[i] = yq[i] + 0.3 * x[i] * x[i];
    const auto q = fit_quadratic(x, yc);
    EXPECT_NEAR(q.c2, 0.3, 0.01);
    EXPECT_FALSE(q.interval_contains_zero());
    const auto p = fit_power_law(x, yp);
    EXPECT_NEAR(p.coef, 0.54, 1e-12);
    EXPECT_NEAR(p.exponent, 0.65, 1e-12);
}

TEST(Hexagon, SizesAndCloud) {
    EXPECT_EQ(hexagon_size(50), 7651u);
    const auto c = hexagon_cloud(12);
    EXPECT_EQ(c.size(), hexagon_size(12));
    EXPECT_EQ(c[0][0], 0.0);
    EXPECT_EQ(c[0][1], 0.0);
    double rmax = 0, dmin = INFINITY;
    for (std::size_t i = 0; i < c.size(); ++i) {
        rmax = std::max(rmax, std::hypot(c[i][0], c[i][1]));
        for (std::size_t j = i + 1; j < c.size(); ++j) dmin = std::min(dmin, distance(c[i], c[j]));
    }
    EXPECT_NEAR(rmax, 1.0, 1e-12);
    EXPECT_NEAR(dmin, 1.0 / 12, 1e-12);
}

TEST(Hexagon, ClosedFormMatchesKde) {
    const auto st = hexagon_study();
    EXPECT_LT(st.cross_check_difference, 1e-12);
    EXPECT_EQ(st.records.size(), 5u);
    for (const auto& r : st.records) {
        EXPECT_EQ(r.n, hexagon_size(r.n_r));
        EXPECT_FALSE(r.local_minima.empty());
        EXPECT_LE(r.error_at_opt, *std::min_element(r.biased.begin(), r.biased.end()) + 1e-15);
    }
}

TEST(Hexagon, ClosedFormTermsByHand) {
    const std::size_t n_r = 20;
    const double delta = 0.05, eps = 0.01;
    const auto rings = static_cast<int>(std::floor(3 * std::sqrt(eps) / delta));
    ASSERT_EQ(rings, 6);
    double s = 0;
    for (int k = 1; k <= rings; ++k) s += std::exp(-k * k * delta * delta / eps);
    const double n = 3 * 400 + 60 + 1;
    EXPECT_NEAR(hexagon_kde(n_r, eps, true), (1 + 6 * s) / n, 1e-16);
    EXPECT_NEAR(hexagon_kde(n_r, eps, false), 6 * s / n, 1e-16);
    EXPECT_NEAR(hexagon_reference_density(eps), kPi * eps * 2 / (3 * std::sqrt(3.0)), 1e-16);
}

TEST(Hexagon, BiasedBetterAtLargeEpsUnbiasedAtSmall) {
    const std::size_t n_r = 150;
    EXPECT_LT(hexagon_relative_error(n_r, 0.5, true), hexagon_relative_error(n_r, 0.5, false));
    // No ring is reached below eps = (delta / 3)^2 and the self term dominates.
    const double tiny = 1e-7;
    ASSERT_LT(3 * std::sqrt(tiny), 1.0 / n_r);
    EXPECT_EQ(hexagon_relative_error(n_r, tiny, false), 1.0);
    EXPECT_LT(hexagon_relative_error(n_r, tiny, false), hexagon_relative_error(n_r, tiny, true));
}

TEST(BiasExperiment, SmallRunIsReproducible) {
    BiasConfig cfg;
    cfg.eps_grid = {0.030, 0.031, 0.033};
    cfg.repeats = 1;
    cfg.seed = 5;
    const auto a = bias_prefactor_experiment(cfg), b = bias_prefactor_experiment(cfg);
    ASSERT_EQ(a.fits.size(), 4u);
    EXPECT_EQ(a.fits[0].density, "n.u.");
    EXPECT_EQ(a.fits[0].test_function, "sin");
    EXPECT_EQ(a.fits[3].density, "u");
    EXPECT_EQ(a.fits[3].test_function, "committor");
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(a.fits[k].fit.b, b.fits[k].fit.b);
        EXPECT_EQ(a.fits[k].mean_errors, b.fits[k].mean_errors);
    }
    EXPECT_EQ(a.n_values[0], n_from_schedule(0.030));
    for (const auto& s : a.samples) EXPECT_EQ(s.n, a.n_values[s.eps_index]);
}

TEST(BiasExperiment, RejectsQueryInsideArcs) {
    BiasConfig cfg;
    cfg.query_theta = CircleSystem::standard().theta1;
    EXPECT_THROW(bias_prefactor_experiment(cfg), DomainError);
}

TEST(DefaultBiasGrid, TenValuesSpanningRange) {
    const auto g = BiasConfig{}.grid();
    ASSERT_EQ(g.size(), 10u);
    EXPECT_DOUBLE_EQ(g.front(), 0.023);
    EXPECT_NEAR(g.back(), 0.033, 1e-15);
}

TEST(RmseSweep, SmallTwoWellRunProducesFlaggedTable) {
    SweepConfig cfg;
    cfg.n_steps = 200'000;
    cfg.grid_cloud_target = 1500;
    cfg.reference_n = 121;
    cfg.check_n = 1;
    cfg.eps_k_lo = -2;
    cfg.eps_k_hi = 1;
    const auto r = rmse_sweep(cfg);
    ASSERT_EQ(r.summary.size(), 4u);
    EXPECT_EQ(r.summary[0].method, "gibbs");
    std::size_t ksum_rows = 0;
    for (const auto& row : r.rows) {
        ksum_rows += row.is_ksum;
        if (row.status == "ok") {
            EXPECT_TRUE(row.maximum_principle);
            EXPECT_NEAR(row.rmse_normalized, row.rmse / std::sqrt(static_cast<double>(row.scored)), 1e-15);
        }
    }
    EXPECT_EQ(ksum_rows, 4u);
    EXPECT_EQ(r.rows.size(), 16u);
}

TEST(RmseSweep, ConfigValidation) {
    SweepConfig cfg;
    cfg.potential = "circle";
    EXPECT_THROW(cfg.validate(), DomainError);
}

TEST(ParallelMap, OrderedResultsAndFirstError) {
    const auto v = parallel_map<int>(100, 4, [](std::size_t i) { return static_cast<int>(i * i); });
    for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(v[i], static_cast<int>(i * i));
    try {
        parallel_map<int>(50, 3, [](std::size_t i) -> int {
            if (i == 7 || i == 30) throw std::runtime_error("job " + std::to_string(i));
            return 0;
        });
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "job 7");
    }
}
