#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "tmdmap/bvp.hpp"
#include "tmdmap/error.hpp"
#include "tmdmap/generator.hpp"
#include "tmdmap/kernel.hpp"
#include "tmdmap/parallel.hpp"
#include "tmdmap/point_cloud.hpp"
#include "tmdmap/potentials.hpp"
#include "tmdmap/reference.hpp"
#include "tmdmap/rng.hpp"
#include "tmdmap/sampling.hpp"
#include "tmdmap/spatial_hash.hpp"

namespace tmdmap {

// ---------------------------------------------------------------------------
// Error model.

/// 4 beta^-1 (L f)(x_i) - (Lf)_true(x_i), signed.
inline double consistency_error(const GeneratorBundle& bundle, std::span<const double> f,
                                std::span<const double> lf_true, std::size_t index, double beta = 1.0) {
    if (index >= bundle.size()) throw DimensionError("consistency_error: index out of range");
    if (f.size() != bundle.size() || lf_true.size() != bundle.size())
        throw DimensionError("consistency_error: field length mismatch");
    double pf = 0.0;
    const CsrMatrix& P = bundle.markov;
    for (std::size_t q = P.begin(index); q < P.end(index); ++q) pf += P.val[q] * f[P.col(q)];
    return 4.0 / beta * (pf - f[index]) / bundle.epsilon - lf_true[index];
}

inline double consistency_error(const GeneratorRow& row, std::span<const double> f, double lf_true,
                                double beta = 1.0) {
    return 4.0 / beta * row.apply(f) - lf_true;
}

namespace detail {
template <class G>
double bisect_increasing(G&& g, double lo, double hi, double target) {
    if (!(g(lo) <= target && target <= g(hi))) throw DomainError("root is not bracketed");
    for (int it = 0; it < 300 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}
}  // namespace detail

/// n solving n / log n = c eps^-p by bisection on [10, 1e9], rounded.
inline std::size_t n_from_schedule(double eps, double c = 0.25, double p = 2.5) {
    if (!(eps > 0.0) || !(c > 0.0)) throw DomainError("n_from_schedule: eps and c must be positive");
    const double target = c * std::pow(eps, -p);
    const double n = detail::bisect_increasing([](double m) { return m / std::log(m); }, 10.0, 1e9, target);
    return static_cast<std::size_t>(std::llround(n));
}

/// alpha = (2pi)^(-d/4) sqrt(log n / (n eps^(4 + d/2))).
inline double variance_alpha(double n, double eps, std::size_t d) {
    if (!(n >= 2.0) || !(eps > 0.0)) throw DomainError("variance_alpha: need n >= 2 and eps > 0");
    const double dd = static_cast<double>(d);
    return std::pow(2.0 * std::numbers::pi, -dd / 4.0) *
           std::sqrt(std::log(n) / (n * std::pow(eps, 4.0 + dd / 2.0)));
}

/// eps with variance_alpha(n, eps, d) = 1, by bisection in log eps.
inline double eps_from_variance_scaling(double n, std::size_t d) {
    const double lo = std::log(1e-12), hi = std::log(1e6);
    const double x = detail::bisect_increasing(
        [&](double le) { return -std::log(variance_alpha(n, std::exp(le), d)); }, lo, hi, 0.0);
    return std::exp(x);
}

/// n with (2pi)^(d/2) n / log n = eps^(-4 - d/2), by bisection on [2, 1e15].
inline double n_from_variance_scaling(double eps, std::size_t d) {
    const double dd = static_cast<double>(d);
    const double target = std::pow(eps, -4.0 - dd / 2.0) / std::pow(2.0 * std::numbers::pi, dd / 2.0);
    const double lo = std::max(std::numbers::e, 2.0);
    return detail::bisect_increasing([](double m) { return m / std::log(m); }, lo, 1e15, target);
}

// ---------------------------------------------------------------------------
// Fits.

struct LinearFit {
    double a = 0.0;  // intercept
    double b = 0.0;  // slope
    double se_a = 0.0;
    double se_b = 0.0;
    std::vector<double> residuals;
};

inline LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw DimensionError("fit_linear: need >= 2 paired values");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw DomainError("fit_linear: x values are all equal");
    LinearFit f;
    f.b = sxy / sxx;
    f.a = my - f.b * mx;
    double sse = 0.0;
    f.residuals.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        f.residuals[i] = y[i] - (f.a + f.b * x[i]);
        sse += f.residuals[i] * f.residuals[i];
    }
    if (n > 2) {
        const double s2 = sse / static_cast<double>(n - 2);
        f.se_b = std::sqrt(s2 / sxx);
        f.se_a = std::sqrt(s2 * (1.0 / static_cast<double>(n) + mx * mx / sxx));
    }
    return f;
}

struct QuadraticFit {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
    double se_c2 = 0.0;
    double c2_lo = 0.0, c2_hi = 0.0;  // confidence interval of c2

    bool interval_contains_zero() const { return c2_lo <= 0.0 && 0.0 <= c2_hi; }
};

/// y ~ c0 + c1 x + c2 x^2 with a two-sided Student-t interval for c2.
/// x is centred and scaled internally for conditioning.
inline QuadraticFit fit_quadratic(std::span<const double> x, std::span<const double> y, double level = 0.95) {
    const std::size_t n = x.size();
    if (n < 4 || y.size() != n) throw DimensionError("fit_quadratic: need >= 4 paired values");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double sx = 0.0;
    for (double v : x) sx = std::max(sx, std::abs(v - mx));
    if (!(sx > 0.0)) throw DomainError("fit_quadratic: x values are all equal");
    Eigen::MatrixXd A(static_cast<Eigen::Index>(n), 3);
    Eigen::VectorXd b(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (x[i] - mx) / sx;
        const auto r = static_cast<Eigen::Index>(i);
        A(r, 0) = 1.0;
        A(r, 1) = t;
        A(r, 2) = t * t;
        b[r] = y[i];
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    const double sse = (A * c - b).squaredNorm();
    const double s2 = sse / static_cast<double>(n - 3);
    const Eigen::MatrixXd cov = s2 * (A.transpose() * A).inverse();
    // Back to raw x: y = c0 + c1 t + c2 t^2, t = (x - mx) / sx.
    QuadraticFit f;
    f.c2 = c[2] / (sx * sx);
    f.c1 = c[1] / sx - 2.0 * c[2] * mx / (sx * sx);
    f.c0 = c[0] - c[1] * mx / sx + c[2] * mx * mx / (sx * sx);
    f.se_c2 = std::sqrt(std::max(0.0, cov(2, 2))) / (sx * sx);
    const boost::math::students_t dist(static_cast<double>(n - 3));
    const double tq = boost::math::quantile(dist, 0.5 + level / 2.0);
    f.c2_lo = f.c2 - tq * f.se_c2;
    f.c2_hi = f.c2 + tq * f.se_c2;
    return f;
}

struct PowerLawFit {
    double coef = 0.0;
    double exponent = 0.0;
};

/// y ~ coef x^exponent by least squares on log y vs log x.
inline PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y) {
    std::vector<double> lx(x.size()), ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw DomainError("fit_power_law: values must be positive");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    const LinearFit f = fit_linear(lx, ly);
    return {std::exp(f.a), f.b};
}

// ---------------------------------------------------------------------------
// Circle helpers.

/// (L f) = beta^-1 f'' - V' f' for f = sin on the circle.
inline double circle_generator_of_sin(double theta, double beta) {
    return -std::sin(theta) / beta - circle_potential_derivative(theta) * std::cos(theta);
}

inline std::vector<double> circle_measure(std::span<const double> theta, double beta) {
    std::vector<double> mu(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) mu[i] = std::exp(-beta * circle_potential(theta[i]));
    return mu;
}

inline const char* density_tag(CircleDensity d) { return d == CircleDensity::Uniform ? "u" : "n.u."; }

// ---------------------------------------------------------------------------
// Bias prefactor regression on the circle.

struct BiasConfig {
    std::vector<double> eps_grid;  // empty: 10 equispaced values in [0.023, 0.033]
    std::size_t repeats = 50;
    std::uint64_t seed = 20240101;
    double schedule_c = 0.25;
    double cutoff = 1e-8;
    double query_theta = std::numbers::pi;
    std::size_t workers = 0;

    std::vector<double> grid() const {
        if (!eps_grid.empty()) return eps_grid;
        std::vector<double> g(10);
        for (std::size_t k = 0; k < 10; ++k) g[k] = 0.023 + 0.001 * static_cast<double>(k) * 10.0 / 9.0;
        return g;
    }
};

struct ErrorModelFit {
    std::string density;
    std::string test_function;
    std::vector<double> eps_values;
    std::vector<std::vector<double>> errors;  // [eps][repeat]
    std::vector<double> mean_errors;
    LinearFit fit;
    QuadraticFit trend;

    double prefactor() const { return std::abs(fit.b); }
};

struct BiasSample {
    CircleDensity density = CircleDensity::Uniform;
    std::size_t eps_index = 0;
    std::size_t repeat = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::size_t row_size = 0;
    double error_sin = 0.0;
    double error_committor = 0.0;
};

struct BiasResult {
    std::vector<double> eps_values;
    std::vector<std::size_t> n_values;
    std::vector<BiasSample> samples;
    /// Order: (n.u., sin), (u, sin), (n.u., committor), (u, committor).
    std::vector<ErrorModelFit> fits;
};

/// One repeat: n points from the density, the query angle appended as the
/// last point, one TMDmap row at the query, and the signed consistency
/// errors of sin and of the committor there.
inline BiasSample bias_repeat(CircleDensity density, double eps, std::size_t n, std::uint64_t seed,
                              const CircleCommittor& committor, const BiasConfig& cfg) {
    const CircleSystem& sys = committor.system();
    std::vector<double> theta = sample_circle_angles(density, n, seed);
    theta.push_back(cfg.query_theta);
    const PointCloud cloud = embed_circle(theta);
    const std::vector<double> mu = circle_measure(theta, sys.beta);
    const double radius = kernel_radius(eps, cfg.cutoff);
    const NeighborIndex index = NeighborIndex::build(cloud, radius / 4.0);
    const GeneratorRow row = tmdmap_row(cloud, index, eps, mu, n, cfg.cutoff);

    std::vector<double> f_sin(theta.size(), 0.0), f_q(theta.size(), 0.0);
    for (std::size_t j : row.cols) {
        f_sin[j] = std::sin(theta[j]);
        f_q[j] = committor(theta[j]);
    }
    BiasSample s;
    s.density = density;
    s.n = n;
    s.seed = seed;
    s.row_size = row.cols.size();
    s.error_sin = consistency_error(row, f_sin, circle_generator_of_sin(cfg.query_theta, sys.beta), sys.beta);
    // The committor is L-harmonic away from A and B.
    s.error_committor = consistency_error(row, f_q, 0.0, sys.beta);
    return s;
}

inline BiasResult bias_prefactor_experiment(const BiasConfig& cfg) {
    const std::vector<double> grid = cfg.grid();
    if (grid.size() < 3) throw DomainError("bias experiment needs at least 3 eps values");
    if (cfg.repeats < 1) throw DomainError("bias experiment needs at least one repeat");
    const CircleCommittor committor(CircleSystem::standard());
    const auto& sys = committor.system();
    if (!(cfg.query_theta > sys.theta1 + sys.r && cfg.query_theta < sys.theta2 - sys.r))
        throw DomainError("query angle must lie strictly between the arcs A and B");

    BiasResult res;
    res.eps_values = grid;
    for (double e : grid) res.n_values.push_back(n_from_schedule(e, cfg.schedule_c));

    const CircleDensity densities[2] = {CircleDensity::FractionalNormal, CircleDensity::Uniform};
    const std::size_t per_density = grid.size() * cfg.repeats;
    res.samples = parallel_map<BiasSample>(2 * per_density, cfg.workers, [&](std::size_t job) {
        const std::size_t di = job / per_density;
        const std::size_t ei = (job % per_density) / cfg.repeats;
        const std::size_t rep = job % cfg.repeats;
        const std::uint64_t seed = derive_seed(cfg.seed, di, ei, rep);
        BiasSample s = bias_repeat(densities[di], grid[ei], res.n_values[ei], seed, committor, cfg);
        s.eps_index = ei;
        s.repeat = rep;
        return s;
    });

    for (int which = 0; which < 2; ++which) {       // 0: sin, 1: committor
        for (std::size_t di = 0; di < 2; ++di) {    // n.u. then u
            ErrorModelFit fit;
            fit.density = density_tag(densities[di]);
            fit.test_function = which == 0 ? "sin" : "committor";
            fit.eps_values = grid;
            fit.errors.assign(grid.size(), {});
            for (std::size_t k = 0; k < per_density; ++k) {
                const BiasSample& s = res.samples[di * per_density + k];
                fit.errors[s.eps_index].push_back(which == 0 ? s.error_sin : s.error_committor);
            }
            for (const auto& e : fit.errors)
                fit.mean_errors.push_back(std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size()));
            fit.fit = fit_linear(grid, fit.mean_errors);
            if (grid.size() >= 4) {
                fit.trend = fit_quadratic(grid, fit.mean_errors);
            } else {
                const double nan = std::numeric_limits<double>::quiet_NaN();
                fit.trend = {nan, nan, nan, nan, nan, nan};
            }
            res.fits.push_back(std::move(fit));
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Circle committor accuracy and consistency spot checks.

struct CircleCommittorReport {
    std::size_t n = 0;
    double epsilon = 0.0;
    KsumResult ksum;
    std::vector<double> theta;
    std::vector<double> q;
    std::vector<double> q_ref;
    std::size_t interior = 0;
    double rmse = 0.0;
    double rmse_normalized = 0.0;
    double max_error = 0.0;
    double q_min = 0.0, q_max = 0.0;
    MaximumPrincipleReport maximum_principle;
    std::string solver;
};

/// Uniform circle cloud, TMDmap committor at eps (0: the Ksum bandwidth),
/// scored against the analytic committor on interior points.
inline CircleCommittorReport circle_committor_accuracy(std::size_t n, std::uint64_t seed, double eps = 0.0,
                                                       const SolverOptions& solver = {}) {
    CircleCommittorReport r;
    r.n = n;
    const CircleSystem sys = CircleSystem::standard();
    r.theta = sample_circle_angles(CircleDensity::Uniform, n, seed);
    const PointCloud cloud = embed_circle(r.theta);
    r.ksum = ksum_scan(cloud, default_ksum_grid());
    r.epsilon = eps > 0.0 ? eps : r.ksum.eps_star;
    const SparseKernel K = build_kernel(cloud, r.epsilon);
    const DensityEstimate rho = kde(K);
    const GeneratorBundle bundle = build_tmdmap(K, rho, circle_measure(r.theta, sys.beta));
    const BvpProblem problem = classify_arcs(r.theta, sys);
    const FieldSolution sol = solve_dirichlet(bundle, problem, solver);
    r.solver = sol.solver;
    r.q = sol.values;
    r.maximum_principle = check_maximum_principle(problem, sol);
    r.q_min = *std::min_element(r.q.begin(), r.q.end());
    r.q_max = *std::max_element(r.q.begin(), r.q.end());
    const CircleCommittor oracle(sys);
    r.q_ref = oracle(std::span<const double>(r.theta));
    std::vector<double> a, b;
    for (std::size_t i : problem.interior) {
        a.push_back(r.q[i]);
        b.push_back(r.q_ref[i]);
        r.max_error = std::max(r.max_error, std::abs(r.q[i] - r.q_ref[i]));
    }
    r.interior = a.size();
    r.rmse = rmse(a, b);
    r.rmse_normalized = normalized_rmse(a, b);
    return r;
}

/// |4 (L f)(x_i) + sin theta_i| for f = sin with mu uniform, at the sampled
/// point nearest theta0.
inline double circle_sin_consistency(std::size_t n, double eps, std::uint64_t seed, double theta0,
                                     double cutoff = 1e-8) {
    const std::vector<double> theta = sample_circle_angles(CircleDensity::Uniform, n, seed);
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (angular_distance(theta[i], theta0) < angular_distance(theta[best], theta0)) best = i;
    const PointCloud cloud = embed_circle(theta);
    const std::vector<double> mu(n, 1.0);
    const NeighborIndex index = NeighborIndex::build(cloud, kernel_radius(eps, cutoff) / 4.0);
    const GeneratorRow row = tmdmap_row(cloud, index, eps, mu, best, cutoff);
    std::vector<double> f(n, 0.0);
    for (std::size_t j : row.cols) f[j] = std::sin(theta[j]);
    return std::abs(4.0 * row.apply(f) + std::sin(theta[best]));
}

// ---------------------------------------------------------------------------
// Committor RMSE sweep on a 2-D potential.

struct SweepConfig {
    std::string potential = "twowell";
    double beta = 0.0;  // 0: registry default
    std::uint64_t seed = 7;
    double dt = 1e-4;
    std::size_t n_steps = 1'000'000;
    std::size_t subsample = 100;
    double metad_w0 = 0.5;
    double metad_sigma = 0.1;
    std::size_t metad_stride = 100;
    std::vector<double> deltas{0.02};
    std::size_t grid_cloud_target = 10'000;  // approx. nodes of the grid-node cloud
    std::size_t reference_n = 401;
    std::size_t check_n = 0;                 // 0: 2 * (reference_n - 1) + 1; 1: skip
    double energy_cutoff = 10.0;
    double radius = 0.1;
    int eps_k_lo = -6, eps_k_hi = 4;         // eps = eps* 2^(k/2)
    std::size_t workers = 0;
    std::size_t max_nonzeros = 60'000'000;

    void validate() const {
        if (potential != "twowell" && potential != "mueller")
            throw DomainError("rmse sweep supports the mueller and twowell potentials");
        if (eps_k_hi < eps_k_lo) throw DomainError("empty eps exponent range");
        for (double d : deltas)
            if (!(d > 0.0)) throw DomainError("delta values must be positive");
    }
};

struct SweepSystem {
    PotentialSystem sys;
    std::array<double, 2> a{};
    std::array<double, 2> b{};
};

inline SweepSystem sweep_system(const SweepConfig& cfg) {
    SweepSystem s;
    s.sys = cfg.beta > 0.0 ? make_potential(cfg.potential, cfg.beta) : make_potential(cfg.potential);
    if (cfg.potential == "mueller") {
        s.a = {-0.558, 1.441};
        s.b = {0.623, 0.028};
    } else {
        s.a = {-1.0, 0.0};
        s.b = {1.0, 0.0};
    }
    return s;
}

struct SweepRow {
    std::string method;
    double delta = 0.0;
    double epsilon = 0.0;
    bool is_ksum = false;
    std::size_t n = 0;
    std::size_t scored = 0;
    double rmse = std::numeric_limits<double>::quiet_NaN();
    double rmse_normalized = std::numeric_limits<double>::quiet_NaN();
    bool maximum_principle = false;
    std::string status = "ok";
};

struct MethodSummary {
    std::string method;
    double delta = 0.0;
    std::size_t n = 0;
    double eps_star = 0.0;
    double best_eps = 0.0;
    double best_rmse_normalized = std::numeric_limits<double>::quiet_NaN();
    double best_rmse = std::numeric_limits<double>::quiet_NaN();
    /// rmse_normalized at the grid eps nearest 2 * best_eps, over the best.
    double flatness_ratio = std::numeric_limits<double>::quiet_NaN();
    /// Normalized rmse between the reference and its finer-grid check.
    double reference_change = std::numeric_limits<double>::quiet_NaN();
    std::size_t outside_reference = 0;
    std::string status = "ok";
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<MethodSummary> summary;
    double reference_residual = 0.0;
};

struct SweepCloud {
    std::string method;
    double delta = 0.0;
    PointCloud cloud{2};
    std::string status = "ok";
};

inline std::vector<SweepCloud> sweep_clouds(const SweepConfig& cfg, const SweepSystem& s, const Grid2D& ref_grid) {
    std::vector<SweepCloud> out;
    const std::vector<double> x0(s.a.begin(), s.a.end());
    auto guarded = [&](const std::string& method, double delta, auto&& make) {
        SweepCloud c;
        c.method = method;
        c.delta = delta;
        try {
            c.cloud = make();
        } catch (const Error& e) {
            c.status = std::string("sampling failed: ") + e.what();
        }
        out.push_back(std::move(c));
    };

    guarded("gibbs", 0.0, [&] {
        return euler_maruyama(s.sys, x0, cfg.dt, cfg.n_steps, cfg.subsample, derive_seed(cfg.seed, 1));
    });
    MetadynamicsParams mp;
    mp.w0 = cfg.metad_w0;
    mp.sigma = cfg.metad_sigma;
    mp.stride = cfg.metad_stride;
    mp.dt = cfg.dt;
    mp.n_steps = cfg.n_steps;
    mp.seed = derive_seed(cfg.seed, 2);
    mp.record_stride = cfg.subsample;
    PointCloud metad(2);
    std::string metad_status = "ok";
    try {
        metad = metadynamics(s.sys, mp, x0);
    } catch (const Error& e) {
        metad_status = std::string("sampling failed: ") + e.what();
    }
    out.push_back({"metad", 0.0, metad, metad_status});
    for (double d : cfg.deltas) {
        SweepCloud c{"metad+delta-net", d, PointCloud(2), metad_status};
        if (metad_status == "ok") c.cloud = delta_net(metad, DeltaNetParams{d});
        out.push_back(std::move(c));
    }
    guarded("grid", 0.0, [&] {
        // Same box as the reference, spacing chosen for about
        // grid_cloud_target active nodes.
        const Grid2D probe = ref_grid.resampled(s.sys, cfg.energy_cutoff, 101, 101);
        const double frac = static_cast<double>(probe.active_nodes().size()) / (101.0 * 101.0);
        const double area = (ref_grid.x_hi - ref_grid.x_lo) * (ref_grid.y_hi - ref_grid.y_lo) * frac;
        const double h = std::sqrt(area / static_cast<double>(cfg.grid_cloud_target));
        const auto nx = static_cast<std::size_t>(std::llround((ref_grid.x_hi - ref_grid.x_lo) / h)) + 1;
        const auto ny = static_cast<std::size_t>(std::llround((ref_grid.y_hi - ref_grid.y_lo) / h)) + 1;
        return ref_grid.resampled(s.sys, cfg.energy_cutoff, std::max<std::size_t>(nx, 3), std::max<std::size_t>(ny, 3))
            .active_nodes();
    });
    return out;
}

inline std::vector<double> sweep_eps_grid(double eps_star, int k_lo, int k_hi) {
    std::vector<double> g;
    for (int k = k_lo; k <= k_hi; ++k) g.push_back(eps_star * std::pow(2.0, 0.5 * k));
    return g;
}

inline SweepResult rmse_sweep(const SweepConfig& cfg) {
    cfg.validate();
    const SweepSystem s = sweep_system(cfg);
    const Grid2D ref_grid = Grid2D::fit(s.sys, cfg.energy_cutoff, cfg.reference_n, cfg.reference_n);
    const GridField reference = fd_committor_2d(s.sys, ref_grid, s.a, s.b, cfg.radius);
    std::optional<GridField> check;
    const std::size_t check_n = cfg.check_n == 0 ? 2 * (cfg.reference_n - 1) + 1 : cfg.check_n;
    if (check_n > 1)
        check = fd_committor_2d(s.sys, ref_grid.resampled(s.sys, cfg.energy_cutoff, check_n, check_n), s.a, s.b,
                                cfg.radius);

    SweepResult res;
    res.reference_residual = reference.residual_norm;
    const std::vector<SweepCloud> clouds = sweep_clouds(cfg, s, ref_grid);

    struct Cell {
        std::size_t cloud;
        double eps;
        bool is_ksum;
    };
    std::vector<Cell> cells;
    std::vector<MethodSummary> summary(clouds.size());
    std::vector<std::optional<BvpProblem>> problems(clouds.size());
    std::vector<std::vector<double>> ref_values(clouds.size());
    for (std::size_t c = 0; c < clouds.size(); ++c) {
        MethodSummary& m = summary[c];
        m.method = clouds[c].method;
        m.delta = clouds[c].delta;
        m.n = clouds[c].cloud.size();
        m.status = clouds[c].status;
        if (m.status != "ok") continue;
        try {
            problems[c] = classify_ab(clouds[c].cloud, s.a, s.b, cfg.radius);
        } catch (const Error& e) {
            m.status = std::string("boundary: ") + e.what();
            continue;
        }
        ref_values[c] = reference.interpolate(clouds[c].cloud);
        if (check) {
            std::vector<double> a, b;
            for (std::size_t i : problems[c]->interior) {
                const double v = check->interpolate(clouds[c].cloud[i][0], clouds[c].cloud[i][1]);
                if (std::isnan(v) || std::isnan(ref_values[c][i])) continue;
                a.push_back(ref_values[c][i]);
                b.push_back(v);
            }
            if (!a.empty()) m.reference_change = normalized_rmse(a, b);
        }
        for (std::size_t i : problems[c]->interior)
            if (std::isnan(ref_values[c][i])) ++m.outside_reference;
        m.eps_star = ksum_scan(clouds[c].cloud, default_ksum_grid()).eps_star;
        const auto grid = sweep_eps_grid(m.eps_star, cfg.eps_k_lo, cfg.eps_k_hi);
        for (std::size_t k = 0; k < grid.size(); ++k)
            cells.push_back({c, grid[k], static_cast<int>(k) + cfg.eps_k_lo == 0});
    }

    const std::vector<double> mu_dummy;
    res.rows = parallel_map<SweepRow>(cells.size(), cfg.workers, [&](std::size_t job) {
        const Cell& cell = cells[job];
        const SweepCloud& sc = clouds[cell.cloud];
        SweepRow row;
        row.method = sc.method;
        row.delta = sc.delta;
        row.epsilon = cell.eps;
        row.is_ksum = cell.is_ksum;
        row.n = sc.cloud.size();
        try {
            KernelOptions ko;
            ko.max_nonzeros = cfg.max_nonzeros;
            const SparseKernel K = build_kernel(sc.cloud, cell.eps, ko);
            const GeneratorBundle bundle = build_tmdmap(K, kde(K), target_measure(s.sys, sc.cloud));
            const FieldSolution sol = solve_dirichlet(bundle, *problems[cell.cloud]);
            row.maximum_principle = check_maximum_principle(*problems[cell.cloud], sol).satisfied;
            std::vector<double> a, b;
            for (std::size_t i : problems[cell.cloud]->interior) {
                const double r = ref_values[cell.cloud][i];
                if (std::isnan(r)) continue;
                a.push_back(sol.values[i]);
                b.push_back(r);
            }
            row.scored = a.size();
            if (!a.empty()) {
                row.rmse = rmse(a, b);
                row.rmse_normalized = normalized_rmse(a, b);
            } else {
                row.status = "no scored points";
            }
        } catch (const CapacityError& e) {
            row.status = "capacity";
        } catch (const ConvergenceError& e) {
            row.status = "no convergence";
        } catch (const DegenerateMeasureError& e) {
            row.status = "degenerate measure";
        }
        return row;
    });

    for (std::size_t c = 0; c < clouds.size(); ++c) {
        MethodSummary& m = summary[c];
        std::vector<const SweepRow*> mine;
        std::size_t k = 0;
        for (const auto& cell : cells) {
            if (cell.cloud == c) mine.push_back(&res.rows[k]);
            ++k;
        }
        const SweepRow* best = nullptr;
        for (const SweepRow* r : mine)
            if (r->status == "ok" && (!best || r->rmse_normalized < best->rmse_normalized)) best = r;
        if (!best) {
            if (m.status == "ok") m.status = "no successful eps";
            continue;
        }
        m.best_eps = best->epsilon;
        m.best_rmse = best->rmse;
        m.best_rmse_normalized = best->rmse_normalized;
        const SweepRow* twice = nullptr;
        for (const SweepRow* r : mine)
            if (r->status == "ok" &&
                (!twice || std::abs(std::log(r->epsilon / (2.0 * best->epsilon))) <
                               std::abs(std::log(twice->epsilon / (2.0 * best->epsilon)))))
                twice = r;
        if (twice) m.flatness_ratio = twice->rmse_normalized / best->rmse_normalized;
    }
    res.summary = std::move(summary);
    return res;
}

// ---------------------------------------------------------------------------
// Hexagon KDE study.

/// 3 n_r^2 + 3 n_r + 1.
inline std::size_t hexagon_size(std::size_t n_r) { return 3 * n_r * n_r + 3 * n_r + 1; }

/// (pi eps) 2 / (3 sqrt 3) for d = 2.
inline double hexagon_reference_density(double eps) { return std::numbers::pi * eps * 2.0 / (3.0 * std::sqrt(3.0)); }

/// Closed-form truncated KDE at an interior lattice point: six points per ring
/// at distance k delta, k = 1 .. floor(3 sqrt(eps) / delta).
inline double hexagon_kde(std::size_t n_r, double eps, bool biased) {
    const double delta = 1.0 / static_cast<double>(n_r);
    const auto rings = static_cast<std::size_t>(std::floor(3.0 * std::sqrt(eps) / delta));
    double s = 0.0;
    for (std::size_t k = 1; k <= rings; ++k) {
        const double kd = static_cast<double>(k) * delta;
        s += std::exp(-kd * kd / eps);
    }
    return ((biased ? 1.0 : 0.0) + 6.0 * s) / static_cast<double>(hexagon_size(n_r));
}

inline double hexagon_relative_error(std::size_t n_r, double eps, bool biased) {
    const double ref = hexagon_reference_density(eps);
    return std::abs(hexagon_kde(n_r, eps, biased) - ref) / ref;
}

/// Triangular lattice with spacing 1/n_r inside the hexagon of circumradius 1;
/// the centre is point 0.
inline PointCloud hexagon_cloud(std::size_t n_r) {
    const double delta = 1.0 / static_cast<double>(n_r);
    const auto m = static_cast<long>(n_r);
    PointCloud out(2);
    out.reserve(hexagon_size(n_r));
    const double origin[2] = {0.0, 0.0};
    out.push_back(origin);
    for (long a = -m; a <= m; ++a)
        for (long b = -m; b <= m; ++b) {
            if (std::abs(a + b) > m || (a == 0 && b == 0)) continue;
            const double p[2] = {delta * (static_cast<double>(a) + 0.5 * static_cast<double>(b)),
                                 delta * (std::sqrt(3.0) / 2.0) * static_cast<double>(b)};
            out.push_back(p);
        }
    return out;
}

struct HexagonRecord {
    std::size_t n_r = 0;
    double delta = 0.0;
    std::size_t n = 0;
    std::vector<double> eps_grid;
    std::vector<double> biased;
    std::vector<double> unbiased;
    std::vector<double> local_minima;  // eps at local minima of the biased error on the scan
    double eps_opt = 0.0;
    double error_at_opt = 0.0;
};

struct HexagonStudy {
    std::vector<HexagonRecord> records;
    PowerLawFit fit;
    std::size_t cross_check_n_r = 0;
    double cross_check_eps = 0.0;
    double cross_check_difference = 0.0;
};

struct HexagonConfig {
    std::vector<std::size_t> n_r{50, 150, 250, 350, 450};
    double eps_lo = 1e-4;
    double eps_hi = 1.0;
    std::size_t scan_points = 200;
    std::size_t cross_check_n_r = 10;
    double cross_check_eps_factor = 0.12;  // eps = factor * delta^2, one ring
};

/// Golden-section minimization of f on [a, b].
template <class F>
double golden_section(F&& f, double a, double b, double tol = 1e-12) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol * std::max(1.0, std::abs(a) + std::abs(b))) {
        if (fc <= fd) {
            b = d, d = c, fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c, c = d, fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return fc <= fd ? c : d;
}

inline HexagonStudy hexagon_study(const HexagonConfig& cfg = {}) {
    if (cfg.n_r.size() < 2) throw DomainError("hexagon study needs at least two n_r values");
    for (std::size_t r : cfg.n_r)
        if (r < 10) throw DomainError("hexagon study needs n_r >= 10");
    HexagonStudy st;
    const std::vector<double> grid = log_spaced(cfg.eps_lo, cfg.eps_hi, cfg.scan_points);
    std::vector<double> deltas, opts;
    for (std::size_t n_r : cfg.n_r) {
        HexagonRecord rec;
        rec.n_r = n_r;
        rec.delta = 1.0 / static_cast<double>(n_r);
        rec.n = hexagon_size(n_r);
        rec.eps_grid = grid;
        for (double e : grid) {
            rec.biased.push_back(hexagon_relative_error(n_r, e, true));
            rec.unbiased.push_back(hexagon_relative_error(n_r, e, false));
        }
        std::size_t best = 0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const bool left = k == 0 || rec.biased[k] <= rec.biased[k - 1];
            const bool right = k + 1 == grid.size() || rec.biased[k] <= rec.biased[k + 1];
            if (left && right) rec.local_minima.push_back(grid[k]);
            if (rec.biased[k] < rec.biased[best]) best = k;
        }
        const double a = grid[best == 0 ? 0 : best - 1];
        const double b = grid[best + 1 == grid.size() ? best : best + 1];
        auto f = [&](double le) { return hexagon_relative_error(n_r, std::exp(le), true); };
        double le = golden_section(f, std::log(a), std::log(b));
        if (f(le) > rec.biased[best]) le = std::log(grid[best]);
        rec.eps_opt = std::exp(le);
        rec.error_at_opt = f(le);
        deltas.push_back(rec.delta);
        opts.push_back(rec.eps_opt);
        st.records.push_back(std::move(rec));
    }
    st.fit = fit_power_law(deltas, opts);

    // Closed form against the generic kde on an explicit lattice (no cutoff).
    st.cross_check_n_r = cfg.cross_check_n_r;
    const double delta = 1.0 / static_cast<double>(cfg.cross_check_n_r);
    st.cross_check_eps = cfg.cross_check_eps_factor * delta * delta;
    const PointCloud hex = hexagon_cloud(cfg.cross_check_n_r);
    KernelOptions ko;
    ko.cutoff = 0.0;
    const DensityEstimate rho = kde(build_kernel(hex, st.cross_check_eps, ko));
    st.cross_check_difference = std::abs(rho.values[0] - hexagon_kde(cfg.cross_check_n_r, st.cross_check_eps, true));
    return st;
}

}  // namespace tmdmap
