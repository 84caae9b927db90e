#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "tmdmap/error.hpp"
#include "tmdmap/generator.hpp"
#include "tmdmap/point_cloud.hpp"
#include "tmdmap/potentials.hpp"

namespace tmdmap {

/// Dirichlet problem  scale * L u = f on `interior`,  u = g on `boundary`.
/// An empty rhs means f = 0 (the committor case).
struct BvpProblem {
    std::vector<std::size_t> interior;
    std::vector<std::size_t> boundary;
    std::vector<double> boundary_values;
    std::vector<double> rhs;
    double scale = 4.0;

    std::size_t size() const noexcept { return interior.size() + boundary.size(); }

    void validate(std::size_t n) const {
        if (boundary.empty()) throw BoundaryError("boundary set is empty");
        if (boundary_values.size() != boundary.size())
            throw DimensionError("one boundary value per boundary index is required");
        if (!rhs.empty() && rhs.size() != interior.size())
            throw DimensionError("rhs must have one entry per interior index");
        if (size() != n) throw DimensionError("interior and boundary must partition all points");
        std::vector<char> seen(n, 0);
        for (auto set : {std::span<const std::size_t>(interior), std::span<const std::size_t>(boundary)}) {
            for (std::size_t i : set) {
                if (i >= n) throw DimensionError("index out of range in boundary-value problem");
                if (seen[i]++) throw DomainError("index " + std::to_string(i) + " appears twice");
            }
        }
        if (!(scale > 0.0)) throw DomainError("operator scale must be positive");
    }

    /// Same partition with boundary values g -> 1 - g.
    BvpProblem complemented() const {
        BvpProblem p = *this;
        for (double& g : p.boundary_values) g = 1.0 - g;
        return p;
    }
};

struct FieldSolution {
    std::vector<double> values;
    double residual_norm = 0.0;
    std::size_t iterations = 0;
    std::string solver;
};

// ---------------------------------------------------------------------------
// Boundary classification.

/// Closed balls around a_center (g = 0) and b_center (g = 1); the rest is
/// interior. Throws if a point lies in both balls or neither ball is hit.
inline BvpProblem classify_ab(const PointCloud& cloud, std::span<const double> a_center,
                              std::span<const double> b_center, double radius, double scale = 4.0) {
    if (!(radius > 0.0)) throw DomainError("classify_ab: radius must be positive");
    if (a_center.size() != cloud.dim() || b_center.size() != cloud.dim())
        throw DimensionError("classify_ab: centre dimension does not match cloud");
    if (squared_distance(a_center, b_center) == 0.0) throw DomainError("classify_ab: centres must differ");
    const double r2 = radius * radius;
    BvpProblem p;
    p.scale = scale;
    bool hit_a = false, hit_b = false;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const bool in_a = squared_distance(cloud[i], a_center) <= r2;
        const bool in_b = squared_distance(cloud[i], b_center) <= r2;
        if (in_a && in_b) throw BoundaryError("point " + std::to_string(i) + " lies in both A and B");
        if (in_a || in_b) {
            p.boundary.push_back(i);
            p.boundary_values.push_back(in_b ? 1.0 : 0.0);
            hit_a |= in_a;
            hit_b |= in_b;
        } else {
            p.interior.push_back(i);
        }
    }
    if (!hit_a || !hit_b)
        throw BoundaryError(std::string("no sampled point in set ") + (hit_a ? "B" : "A") +
                            "; sample more densely or enlarge the radius");
    return p;
}

/// Wrapped angular distance on [0, 2pi).
inline double angular_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
    return std::min(d, 2.0 * std::numbers::pi - d);
}

/// Arcs A = [theta1 - r, theta1 + r] (g = 0), B = [theta2 - r, theta2 + r] (g = 1).
inline BvpProblem classify_arcs(std::span<const double> theta, const CircleSystem& sys, double scale = 4.0) {
    sys.validate();
    BvpProblem p;
    p.scale = scale;
    bool hit_a = false, hit_b = false;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const bool in_a = angular_distance(theta[i], sys.theta1) <= sys.r;
        const bool in_b = angular_distance(theta[i], sys.theta2) <= sys.r;
        if (in_a && in_b) throw BoundaryError("point " + std::to_string(i) + " lies in both arcs");
        if (in_a || in_b) {
            p.boundary.push_back(i);
            p.boundary_values.push_back(in_b ? 1.0 : 0.0);
            hit_a |= in_a;
            hit_b |= in_b;
        } else {
            p.interior.push_back(i);
        }
    }
    if (!hit_a || !hit_b) throw BoundaryError("no sampled point in one of the arcs; sample more densely");
    return p;
}

// ---------------------------------------------------------------------------
// Solver.

enum class SolverStrategy { Auto, Direct, Dense, Iterative };

struct SolverOptions {
    SolverStrategy strategy = SolverStrategy::Auto;
    double tolerance = 1e-10;
    std::size_t max_iterations = 10'000;
    /// Auto factorizes directly up to this many unknowns, sparse LU while the
    /// interior block has at most direct_max_nonzeros entries and dense LU
    /// beyond that; larger systems go to preconditioned BiCGSTAB.
    std::size_t direct_max_unknowns = 20'000;
    std::size_t direct_max_nonzeros = 4'000'000;
};

namespace detail {

inline constexpr auto kNone = std::numeric_limits<std::size_t>::max();

struct Partition {
    std::vector<std::size_t> pos;  // interior slot of each point or kNone
    std::vector<double> g;         // boundary values, 0 on interior points
};

inline Partition partition(std::size_t n, const BvpProblem& problem) {
    Partition p{std::vector<std::size_t>(n, kNone), std::vector<double>(n, 0.0)};
    for (std::size_t k = 0; k < problem.interior.size(); ++k) p.pos[problem.interior[k]] = k;
    for (std::size_t k = 0; k < problem.boundary.size(); ++k) p.g[problem.boundary[k]] = problem.boundary_values[k];
    return p;
}

/// rhs' = f / scale - L^ID g.
inline Eigen::VectorXd reduced_rhs(const GeneratorBundle& bundle, const BvpProblem& problem, const Partition& part) {
    const CsrMatrix& P = bundle.markov;
    Eigen::VectorXd b(static_cast<Eigen::Index>(problem.interior.size()));
    for (std::size_t k = 0; k < problem.interior.size(); ++k) {
        const std::size_t i = problem.interior[k];
        double v = problem.rhs.empty() ? 0.0 : problem.rhs[k] / problem.scale;
        for (std::size_t q = P.begin(i); q < P.end(i); ++q)
            if (part.pos[P.col(q)] == kNone) v -= bundle.generator_value(i, q) * part.g[P.col(q)];
        b[static_cast<Eigen::Index>(k)] = v;
    }
    return b;
}

inline std::size_t interior_nonzeros(const GeneratorBundle& bundle, const BvpProblem& problem, const Partition& part) {
    std::size_t nnz = 0;
    for (std::size_t i : problem.interior)
        for (std::size_t q = bundle.markov.begin(i); q < bundle.markov.end(i); ++q)
            nnz += part.pos[bundle.markov.col(q)] != kNone;
    return nnz;
}

inline Eigen::SparseMatrix<double> interior_sparse(const GeneratorBundle& bundle, const BvpProblem& problem,
                                                   const Partition& part) {
    const auto m = static_cast<Eigen::Index>(problem.interior.size());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(interior_nonzeros(bundle, problem, part));
    for (std::size_t k = 0; k < problem.interior.size(); ++k) {
        const std::size_t i = problem.interior[k];
        for (std::size_t q = bundle.markov.begin(i); q < bundle.markov.end(i); ++q) {
            const std::size_t j = part.pos[bundle.markov.col(q)];
            if (j != kNone)
                triplets.emplace_back(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j),
                                      bundle.generator_value(i, q));
        }
    }
    Eigen::SparseMatrix<double> A(m, m);
    A.setFromTriplets(triplets.begin(), triplets.end());
    A.makeCompressed();
    return A;
}

inline Eigen::MatrixXd interior_dense(const GeneratorBundle& bundle, const BvpProblem& problem, const Partition& part) {
    const auto m = static_cast<Eigen::Index>(problem.interior.size());
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
    for (std::size_t k = 0; k < problem.interior.size(); ++k) {
        const std::size_t i = problem.interior[k];
        for (std::size_t q = bundle.markov.begin(i); q < bundle.markov.end(i); ++q) {
            const std::size_t j = part.pos[bundle.markov.col(q)];
            if (j != kNone) A(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = bundle.generator_value(i, q);
        }
    }
    return A;
}

}  // namespace detail

/// ||L^II u^I - rhs'|| / ||rhs'|| for a full-length solution u, computed
/// straight from the bundle (||L^II u^I|| when rhs' = 0).
inline double bvp_residual(const GeneratorBundle& bundle, const BvpProblem& problem, std::span<const double> u) {
    if (u.size() != bundle.size()) throw DimensionError("bvp_residual: u has wrong length");
    const auto part = detail::partition(bundle.size(), problem);
    const Eigen::VectorXd b = detail::reduced_rhs(bundle, problem, part);
    const CsrMatrix& P = bundle.markov;
    double rn = 0.0;
    for (std::size_t k = 0; k < problem.interior.size(); ++k) {
        const std::size_t i = problem.interior[k];
        double v = 0.0;
        for (std::size_t q = P.begin(i); q < P.end(i); ++q)
            if (part.pos[P.col(q)] != detail::kNone) v += bundle.generator_value(i, q) * u[P.col(q)];
        v -= b[static_cast<Eigen::Index>(k)];
        rn += v * v;
    }
    const double bn = b.norm();
    return bn > 0.0 ? std::sqrt(rn) / bn : std::sqrt(rn);
}

inline FieldSolution solve_dirichlet(const GeneratorBundle& bundle, const BvpProblem& problem,
                                     const SolverOptions& options = {}) {
    const std::size_t n = bundle.size();
    problem.validate(n);

    FieldSolution sol;
    sol.values.assign(n, 0.0);
    for (std::size_t k = 0; k < problem.boundary.size(); ++k)
        sol.values[problem.boundary[k]] = problem.boundary_values[k];
    if (problem.interior.empty()) {
        sol.solver = "none";
        return sol;
    }

    const auto part = detail::partition(n, problem);
    const Eigen::VectorXd b = detail::reduced_rhs(bundle, problem, part);
    SolverStrategy strategy = options.strategy;
    if (strategy == SolverStrategy::Auto) {
        if (problem.interior.size() > options.direct_max_unknowns)
            strategy = SolverStrategy::Iterative;
        else if (detail::interior_nonzeros(bundle, problem, part) > options.direct_max_nonzeros)
            strategy = SolverStrategy::Dense;
        else
            strategy = SolverStrategy::Direct;
    }

    Eigen::VectorXd u;
    if (strategy == SolverStrategy::Direct) {
        const auto A = detail::interior_sparse(bundle, problem, part);
        Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
        lu.compute(A);
        if (lu.info() != Eigen::Success) throw ConvergenceError("sparse LU factorization failed", INFINITY);
        u = lu.solve(b);
        sol.solver = "sparse-lu";
        sol.iterations = 1;
    } else if (strategy == SolverStrategy::Dense) {
        Eigen::MatrixXd A = detail::interior_dense(bundle, problem, part);
        Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXd>> lu(A);
        u = lu.solve(b);
        sol.solver = "dense-lu";
        sol.iterations = 1;
    } else {
        const auto A = detail::interior_sparse(bundle, problem, part);
        Eigen::BiCGSTAB<Eigen::SparseMatrix<double>, Eigen::IncompleteLUT<double>> it;
        it.preconditioner().setDroptol(1e-4);
        it.preconditioner().setFillfactor(10);
        it.setTolerance(options.tolerance);
        it.setMaxIterations(static_cast<Eigen::Index>(options.max_iterations));
        it.compute(A);
        if (it.info() != Eigen::Success) throw ConvergenceError("incomplete LU preconditioner failed", INFINITY);
        u = it.solve(b);
        sol.solver = "bicgstab-ilut";
        sol.iterations = static_cast<std::size_t>(it.iterations());
    }
    for (std::size_t k = 0; k < problem.interior.size(); ++k)
        sol.values[problem.interior[k]] = u[static_cast<Eigen::Index>(k)];
    sol.residual_norm = bvp_residual(bundle, problem, sol.values);
    if (!std::isfinite(sol.residual_norm) || sol.residual_norm > options.tolerance)
        throw ConvergenceError(sol.solver + " did not reach the requested tolerance", sol.residual_norm);
    return sol;
}

// ---------------------------------------------------------------------------

struct MaximumPrincipleReport {
    bool satisfied = true;
    double lower = 0.0;
    double upper = 0.0;
    /// Index of the largest violation (or of the extreme value when satisfied).
    std::size_t worst_index = 0;
    /// Amount by which the worst value leaves [lower, upper]; <= 0 if inside.
    double worst_violation = 0.0;
};

/// Checks min g - tol <= u_i <= max g + tol for every point.
inline MaximumPrincipleReport check_maximum_principle(const BvpProblem& problem, const FieldSolution& solution,
                                                      double tol = 1e-8) {
    MaximumPrincipleReport r;
    r.lower = *std::min_element(problem.boundary_values.begin(), problem.boundary_values.end());
    r.upper = *std::max_element(problem.boundary_values.begin(), problem.boundary_values.end());
    r.worst_violation = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < solution.values.size(); ++i) {
        const double u = solution.values[i];
        const double v = std::isfinite(u) ? std::max(r.lower - u, u - r.upper) : INFINITY;
        if (v > r.worst_violation) {
            r.worst_violation = v;
            r.worst_index = i;
        }
    }
    r.satisfied = r.worst_violation <= tol;
    return r;
}

}  // namespace tmdmap
