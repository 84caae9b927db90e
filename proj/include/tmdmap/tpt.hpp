#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tmdmap/bvp.hpp"
#include "tmdmap/error.hpp"
#include "tmdmap/point_cloud.hpp"
#include "tmdmap/potentials.hpp"
#include "tmdmap/spatial_hash.hpp"

namespace tmdmap {

/// The k nearest points to `query` (itself included if it is in the index),
/// sorted by distance then id. `cell` is the index cell size.
inline std::vector<std::pair<double, std::size_t>> k_nearest(const NeighborIndex& index, std::span<const double> query,
                                                             std::size_t k, double cell) {
    std::vector<std::pair<double, std::size_t>> found;
    if (k == 0 || index.size() == 0) return found;
    k = std::min(k, index.size());
    double radius = cell;
    for (;;) {
        found.clear();
        index.for_each_within(query, radius, [&](std::size_t id, double d2) { found.emplace_back(d2, id); });
        if (found.size() >= k || index.brute_force()) break;
        radius *= 2.0;
    }
    std::partial_sort(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(std::min(k, found.size())),
                      found.end());
    found.resize(std::min(k, found.size()));
    return found;
}

struct GradientField {
    std::size_t dim = 0;
    std::vector<double> values;  // row-major n x dim
    std::size_t warnings = 0;    // rank-deficient neighbourhoods (gradient set to 0)

    std::span<const double> operator[](std::size_t i) const { return {values.data() + i * dim, dim}; }
    std::size_t size() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
};

inline std::size_t default_gradient_neighbors(std::size_t dim) { return 4 * (dim + 1); }

/// Per-point slope of the weighted least-squares plane q ~ c + g.(x - x_i)
/// over the k nearest neighbours, with weights exp(-|x - x_i|^2 / eps).
inline GradientField estimate_gradient(const PointCloud& cloud, std::span<const double> q, std::size_t k_neighbors,
                                       double epsilon) {
    const std::size_t n = cloud.size(), dim = cloud.dim();
    if (q.size() != n) throw DimensionError("estimate_gradient: q has wrong length");
    if (k_neighbors < dim + 1) throw DomainError("estimate_gradient: need k_neighbors >= dim + 1");
    if (!(epsilon > 0.0)) throw DomainError("estimate_gradient: epsilon must be positive");

    GradientField out;
    out.dim = dim;
    out.values.assign(n * dim, 0.0);
    if (n == 0) return out;
    const double cell = std::sqrt(epsilon);
    const NeighborIndex index = NeighborIndex::build(cloud, cell);
    const auto cols = static_cast<Eigen::Index>(dim + 1);

    for (std::size_t i = 0; i < n; ++i) {
        const auto nb = k_nearest(index, cloud[i], k_neighbors, cell);
        const auto rows = static_cast<Eigen::Index>(nb.size());
        Eigen::MatrixXd A(rows, cols);
        Eigen::VectorXd b(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto [d2, j] = nb[static_cast<std::size_t>(r)];
            const double w = std::sqrt(std::exp(-d2 / epsilon));
            A(r, 0) = w;
            for (std::size_t d = 0; d < dim; ++d)
                A(r, static_cast<Eigen::Index>(d + 1)) = w * (cloud[j][d] - cloud[i][d]);
            b[r] = w * q[j];
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        qr.setThreshold(1e-10);
        if (rows < cols || qr.rank() < cols) {
            ++out.warnings;
            continue;
        }
        const Eigen::VectorXd coef = qr.solve(b);
        for (std::size_t d = 0; d < dim; ++d) out.values[i * dim + d] = coef[static_cast<Eigen::Index>(d + 1)];
    }
    return out;
}

struct TptQuantities {
    double nu_AB = 0.0;
    double rho_A = 0.0;
    double k_AB = 0.0;
    std::vector<double> weights;
    std::vector<double> current;  // row-major n x dim, J_i = beta^-1 mu_i grad q_i
    std::size_t warnings = 0;
    std::size_t n = 0;
    double epsilon = 0.0;
};

/// Self-normalized importance weights w_i = (mu_i / rho_i) / sum_j (mu_j / rho_j).
inline std::vector<double> importance_weights(std::span<const double> mu, std::span<const double> rho) {
    if (mu.size() != rho.size()) throw DimensionError("importance_weights: length mismatch");
    std::vector<double> w(mu.size());
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(rho[i] > 0.0) || !(mu[i] >= 0.0)) throw DomainError("importance_weights: need mu >= 0 and rho > 0");
        w[i] = mu[i] / rho[i];
        s += w[i];
    }
    if (!(s > 0.0) || !std::isfinite(s)) throw DegenerateMeasureError("importance weights have no positive mass");
    for (double& v : w) v /= s;
    return w;
}

/// Transition rate, last-hit-A probability and escape rate from a committor
/// on a point cloud. `problem` identifies interior points and B (boundary
/// value 1).
inline TptQuantities compute_tpt(const PointCloud& cloud, std::span<const double> q, std::span<const double> mu,
                                 std::span<const double> rho, const PotentialSystem& sys, const BvpProblem& problem,
                                 double epsilon, std::size_t k_neighbors = 0) {
    const std::size_t n = cloud.size();
    if (q.size() != n || mu.size() != n || rho.size() != n) throw DimensionError("compute_tpt: length mismatch");
    problem.validate(n);
    for (double v : q)
        if (!(v >= -1e-8 && v <= 1.0 + 1e-8)) throw DomainError("compute_tpt: committor values must lie in [0, 1]");
    if (k_neighbors == 0) k_neighbors = default_gradient_neighbors(cloud.dim());

    TptQuantities t;
    t.n = n;
    t.epsilon = epsilon;
    t.weights = importance_weights(mu, rho);
    const GradientField grad = estimate_gradient(cloud, q, k_neighbors, epsilon);
    t.warnings = grad.warnings;

    const double inv_beta = 1.0 / sys.beta;
    for (std::size_t i : problem.interior) {
        double g2 = 0.0;
        for (double g : grad[i]) g2 += g * g;
        t.nu_AB += t.weights[i] * g2;
    }
    t.nu_AB *= inv_beta;

    std::vector<char> in_b(n, 0);
    for (std::size_t k = 0; k < problem.boundary.size(); ++k)
        if (problem.boundary_values[k] >= 1.0) in_b[problem.boundary[k]] = 1;
    for (std::size_t i = 0; i < n; ++i)
        if (!in_b[i]) t.rho_A += t.weights[i] * (1.0 - q[i]);
    t.rho_A = std::clamp(t.rho_A, 0.0, 1.0);
    if (!(t.rho_A > 0.0)) throw DegenerateMeasureError("rho_A vanishes; escape rate is undefined");
    t.k_AB = t.nu_AB / t.rho_A;

    t.current.resize(grad.values.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t d = 0; d < cloud.dim(); ++d)
            t.current[i * cloud.dim() + d] = inv_beta * mu[i] * grad[i][d];
    return t;
}

}  // namespace tmdmap
