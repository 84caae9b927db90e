#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "tmdmap/error.hpp"
#include "tmdmap/point_cloud.hpp"
#include "tmdmap/potentials.hpp"

namespace tmdmap {

// ---------------------------------------------------------------------------
// Analytic committor of the circle system.

/// Integral of exp(beta V) over [a, b] by adaptive Gauss-Kronrod.
inline double circle_boltzmann_integral(double beta, double a, double b) {
    if (b <= a) return 0.0;
    auto f = [beta](double t) { return std::exp(beta * circle_potential(t)); };
    double err = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-12, &err);
    if (!(err <= 1e-10)) throw ConvergenceError("circle committor quadrature", err);
    return v;
}

/// Committor q(theta) (probability of reaching B before A). The primitive
/// P(theta) = int_0^theta exp(beta V) is tabulated on fine panels by adaptive
/// quadrature; an evaluation adds one Gauss-Kronrod step on the last partial
/// panel.
class CircleCommittor {
public:
    explicit CircleCommittor(CircleSystem sys = CircleSystem::standard(), std::size_t panels = 1024) : sys_(sys) {
        sys_.validate();
        if (panels < 16) throw DomainError("CircleCommittor needs at least 16 panels");
        h_ = 2.0 * std::numbers::pi / static_cast<double>(panels);
        table_.assign(panels + 1, 0.0);
        for (std::size_t k = 0; k < panels; ++k)
            table_[k + 1] = table_[k] + circle_boltzmann_integral(sys_.beta, h_ * static_cast<double>(k),
                                                                  h_ * static_cast<double>(k + 1));
        a_lo_ = primitive(sys_.theta1 - sys_.r);
        a_hi_ = primitive(sys_.theta1 + sys_.r);
        b_lo_ = primitive(sys_.theta2 - sys_.r);
        b_hi_ = primitive(sys_.theta2 + sys_.r);
        total_ = table_.back();
    }

    const CircleSystem& system() const noexcept { return sys_; }

    /// int_0^theta exp(beta V), theta in [0, 2pi].
    double primitive(double theta) const {
        const auto k = std::min(static_cast<std::size_t>(theta / h_), table_.size() - 2);
        const double a = h_ * static_cast<double>(k);
        auto f = [this](double t) { return std::exp(sys_.beta * circle_potential(t)); };
        return table_[k] + boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, theta, 0);
    }

    double operator()(double theta) const {
        constexpr double two_pi = 2.0 * std::numbers::pi;
        theta = std::fmod(theta, two_pi);
        if (theta < 0.0) theta += two_pi;
        if (angular_in(theta, sys_.theta1)) return 0.0;
        if (angular_in(theta, sys_.theta2)) return 1.0;
        double q;
        if (theta > sys_.theta1 + sys_.r && theta < sys_.theta2 - sys_.r) {
            q = (primitive(theta) - a_hi_) / (b_lo_ - a_hi_);
        } else {
            const double z = (total_ - b_hi_) + a_lo_;
            q = theta > sys_.theta2 ? (total_ - primitive(theta) + a_lo_) / z : (a_lo_ - primitive(theta)) / z;
        }
        return std::clamp(q, 0.0, 1.0);
    }

    std::vector<double> operator()(std::span<const double> theta) const {
        std::vector<double> out(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i) out[i] = (*this)(theta[i]);
        return out;
    }

private:
    bool angular_in(double theta, double centre) const {
        return theta >= centre - sys_.r && theta <= centre + sys_.r;
    }

    CircleSystem sys_;
    double h_ = 0.0;
    std::vector<double> table_;
    double a_lo_ = 0.0, a_hi_ = 0.0, b_lo_ = 0.0, b_hi_ = 0.0, total_ = 0.0;
};

/// Direct evaluation: each branch integral by adaptive quadrature.
inline double analytic_circle_committor(const CircleSystem& sys, double theta) {
    if (!(theta >= 0.0 && theta < 2.0 * std::numbers::pi)) throw DomainError("theta must lie in [0, 2pi)");
    sys.validate();
    const double a_lo = sys.theta1 - sys.r, a_hi = sys.theta1 + sys.r;
    const double b_lo = sys.theta2 - sys.r, b_hi = sys.theta2 + sys.r;
    if (theta >= a_lo && theta <= a_hi) return 0.0;
    if (theta >= b_lo && theta <= b_hi) return 1.0;
    const double two_pi = 2.0 * std::numbers::pi;
    double q;
    if (theta > a_hi && theta < b_lo) {
        q = circle_boltzmann_integral(sys.beta, a_hi, theta) / circle_boltzmann_integral(sys.beta, a_hi, b_lo);
    } else {
        const double z = circle_boltzmann_integral(sys.beta, b_hi, two_pi) + circle_boltzmann_integral(sys.beta, 0.0, a_lo);
        q = theta > b_hi ? (circle_boltzmann_integral(sys.beta, theta, two_pi) + circle_boltzmann_integral(sys.beta, 0.0, a_lo)) / z
                         : circle_boltzmann_integral(sys.beta, theta, a_lo) / z;
    }
    return std::clamp(q, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Masked finite-difference grid.

struct Grid2D {
    double x_lo = 0.0, x_hi = 1.0;
    double y_lo = 0.0, y_hi = 1.0;
    std::size_t nx = 3, ny = 3;
    std::vector<char> mask;  // row-major, index = iy * nx + ix; empty means all active

    double hx() const { return (x_hi - x_lo) / static_cast<double>(nx - 1); }
    double hy() const { return (y_hi - y_lo) / static_cast<double>(ny - 1); }
    double x(std::size_t ix) const { return x_lo + hx() * static_cast<double>(ix); }
    double y(std::size_t iy) const { return y_lo + hy() * static_cast<double>(iy); }
    std::size_t node(std::size_t ix, std::size_t iy) const { return iy * nx + ix; }
    std::size_t size() const { return nx * ny; }
    bool active(std::size_t k) const { return mask.empty() || mask[k] != 0; }

    void validate() const {
        if (nx < 3 || ny < 3) throw DomainError("grid needs nx, ny >= 3");
        if (!(x_hi > x_lo) || !(y_hi > y_lo)) throw DomainError("grid range is empty");
        if (!mask.empty() && mask.size() != size()) throw DimensionError("grid mask has wrong size");
    }

    /// Uniform grid over a rectangle, all nodes active.
    static Grid2D rectangle(double x_lo, double x_hi, double y_lo, double y_hi, std::size_t nx, std::size_t ny) {
        Grid2D g{x_lo, x_hi, y_lo, y_hi, nx, ny, {}};
        g.validate();
        return g;
    }

    /// Bounding box of {V <= cutoff} (clipped to the system box) plus a 5%
    /// margin, with nodes masked to V <= cutoff.
    static Grid2D fit(const PotentialSystem& sys, double cutoff = 10.0, std::size_t nx = 401, std::size_t ny = 401,
                      double search = 4.0) {
        sys.validate();
        if (sys.dim != 2) throw DimensionError("Grid2D::fit needs a 2-D potential");
        double sx_lo = -search, sx_hi = search, sy_lo = -search, sy_hi = search;
        if (!sys.box.empty()) {
            sx_lo = std::max(sx_lo, sys.box[0].lo);
            sx_hi = std::min(sx_hi, sys.box[0].hi);
            sy_lo = std::max(sy_lo, sys.box[1].lo);
            sy_hi = std::min(sy_hi, sys.box[1].hi);
        }
        constexpr std::size_t scan = 801;
        double bx_lo = INFINITY, bx_hi = -INFINITY, by_lo = INFINITY, by_hi = -INFINITY;
        for (std::size_t j = 0; j < scan; ++j) {
            const double y = sy_lo + (sy_hi - sy_lo) * static_cast<double>(j) / (scan - 1);
            for (std::size_t i = 0; i < scan; ++i) {
                const double x = sx_lo + (sx_hi - sx_lo) * static_cast<double>(i) / (scan - 1);
                const double p[2] = {x, y};
                if (sys.energy(p) <= cutoff) {
                    bx_lo = std::min(bx_lo, x);
                    bx_hi = std::max(bx_hi, x);
                    by_lo = std::min(by_lo, y);
                    by_hi = std::max(by_hi, y);
                }
            }
        }
        if (!(bx_hi > bx_lo) || !(by_hi > by_lo)) throw DomainError("energy cutoff region is empty or degenerate");
        const double mx = 0.05 * (bx_hi - bx_lo), my = 0.05 * (by_hi - by_lo);
        Grid2D g;
        g.x_lo = bx_lo - mx;
        g.x_hi = bx_hi + mx;
        g.y_lo = by_lo - my;
        g.y_hi = by_hi + my;
        if (!sys.box.empty()) {
            g.x_lo = std::max(g.x_lo, sys.box[0].lo);
            g.x_hi = std::min(g.x_hi, sys.box[0].hi);
            g.y_lo = std::max(g.y_lo, sys.box[1].lo);
            g.y_hi = std::min(g.y_hi, sys.box[1].hi);
        }
        g.nx = nx;
        g.ny = ny;
        g.validate();
        g.apply_energy_mask(sys, cutoff);
        return g;
    }

    void apply_energy_mask(const PotentialSystem& sys, double cutoff) {
        mask.assign(size(), 0);
        for (std::size_t iy = 0; iy < ny; ++iy)
            for (std::size_t ix = 0; ix < nx; ++ix) {
                const double p[2] = {x(ix), y(iy)};
                mask[node(ix, iy)] = sys.energy(p) <= cutoff ? 1 : 0;
            }
    }

    /// Same box and mask rule at a different resolution.
    Grid2D resampled(const PotentialSystem& sys, double cutoff, std::size_t nx2, std::size_t ny2) const {
        Grid2D g{x_lo, x_hi, y_lo, y_hi, nx2, ny2, {}};
        g.validate();
        if (!mask.empty()) g.apply_energy_mask(sys, cutoff);
        return g;
    }

    /// Active nodes as a point cloud.
    PointCloud active_nodes() const {
        PointCloud out(2);
        for (std::size_t iy = 0; iy < ny; ++iy)
            for (std::size_t ix = 0; ix < nx; ++ix)
                if (active(node(ix, iy))) {
                    const double p[2] = {x(ix), y(iy)};
                    out.push_back(p);
                }
        return out;
    }
};

/// Gridded field; NaN marks nodes outside the solved region.
struct GridField {
    Grid2D grid;
    std::vector<double> values;
    double residual_norm = 0.0;
    std::size_t dropped_nodes = 0;

    double at(std::size_t ix, std::size_t iy) const { return values[grid.node(ix, iy)]; }

    /// Bilinear interpolation; corners without a value are dropped and the
    /// remaining weights renormalized. NaN outside the grid or with no valid
    /// corner.
    double interpolate(double x, double y) const {
        const double fx = (x - grid.x_lo) / grid.hx();
        const double fy = (y - grid.y_lo) / grid.hy();
        const double tol = 1e-12;
        if (!(fx >= -tol && fy >= -tol && fx <= static_cast<double>(grid.nx - 1) + tol &&
              fy <= static_cast<double>(grid.ny - 1) + tol))
            return std::numeric_limits<double>::quiet_NaN();
        auto ix = static_cast<std::size_t>(std::clamp(std::floor(fx), 0.0, static_cast<double>(grid.nx - 2)));
        auto iy = static_cast<std::size_t>(std::clamp(std::floor(fy), 0.0, static_cast<double>(grid.ny - 2)));
        const double tx = std::clamp(fx - static_cast<double>(ix), 0.0, 1.0);
        const double ty = std::clamp(fy - static_cast<double>(iy), 0.0, 1.0);
        const double w[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
        const double v[4] = {at(ix, iy), at(ix + 1, iy), at(ix, iy + 1), at(ix + 1, iy + 1)};
        double s = 0.0, ws = 0.0;
        for (int k = 0; k < 4; ++k) {
            if (std::isnan(v[k]) || w[k] == 0.0) continue;
            s += w[k] * v[k];
            ws += w[k];
        }
        return ws > 0.0 ? s / ws : std::numeric_limits<double>::quiet_NaN();
    }

    std::vector<double> interpolate(const PointCloud& cloud) const {
        if (cloud.dim() != 2) throw DimensionError("GridField::interpolate needs 2-D points");
        std::vector<double> out(cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i) out[i] = interpolate(cloud[i][0], cloud[i][1]);
        return out;
    }
};

/// Node role for fd_dirichlet_2d: -1 free, otherwise the Dirichlet value.
using NodeClassifier = std::function<double(double x, double y)>;
inline constexpr double kFreeNode = -1.0;

// Solves beta^-1 div(mu grad u) = 0 (i.e. L u = 0 after dividing by mu) with
// the five-point flux scheme, face weights mu at edge midpoints and zero flux
// across edges leaving the active mask. Active nodes not connected to any
// Dirichlet node are dropped (NaN).
inline GridField fd_dirichlet_2d(const PotentialSystem& sys, const Grid2D& grid, const NodeClassifier& classify,
                                 double tolerance = 1e-10) {
    sys.validate();
    grid.validate();
    if (sys.dim != 2) throw DimensionError("fd solver needs a 2-D potential");
    const std::size_t n = grid.size();
    constexpr auto none = std::numeric_limits<std::size_t>::max();

    std::vector<double> role(n, kFreeNode);
    for (std::size_t iy = 0; iy < grid.ny; ++iy)
        for (std::size_t ix = 0; ix < grid.nx; ++ix) {
            const std::size_t k = grid.node(ix, iy);
            if (grid.active(k)) role[k] = classify(grid.x(ix), grid.y(iy));
        }

    auto neighbours = [&](std::size_t k, auto&& fn) {
        const std::size_t ix = k % grid.nx, iy = k / grid.nx;
        if (ix > 0) fn(k - 1, 0);
        if (ix + 1 < grid.nx) fn(k + 1, 0);
        if (iy > 0) fn(k - grid.nx, 1);
        if (iy + 1 < grid.ny) fn(k + grid.nx, 1);
    };

    // Components of the active graph; keep those touching a Dirichlet node.
    std::vector<std::size_t> comp(n, none);
    std::vector<char> has_zero, has_one;
    std::size_t n_comp = 0;
    for (std::size_t s = 0; s < n; ++s) {
        if (!grid.active(s) || comp[s] != none) continue;
        has_zero.push_back(0);
        has_one.push_back(0);
        std::deque<std::size_t> queue{s};
        comp[s] = n_comp;
        while (!queue.empty()) {
            const std::size_t k = queue.front();
            queue.pop_front();
            if (role[k] != kFreeNode) {
                if (role[k] <= 0.0) has_zero[n_comp] = 1;
                if (role[k] >= 1.0) has_one[n_comp] = 1;
            }
            neighbours(k, [&](std::size_t m, int) {
                if (grid.active(m) && comp[m] == none) {
                    comp[m] = n_comp;
                    queue.push_back(m);
                }
            });
        }
        ++n_comp;
    }
    bool linked = false;
    for (std::size_t c = 0; c < n_comp; ++c) linked |= has_zero[c] && has_one[c];
    if (!linked) throw BoundaryError("active region does not connect the two Dirichlet sets");

    GridField field;
    field.grid = grid;
    field.values.assign(n, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::size_t> unknown(n, none);
    std::size_t m = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!grid.active(k)) continue;
        if (!(has_zero[comp[k]] || has_one[comp[k]])) {
            ++field.dropped_nodes;
            continue;
        }
        if (role[k] == kFreeNode)
            unknown[k] = m++;
        else
            field.values[k] = role[k];
    }

    const double hx2 = 1.0 / (grid.hx() * grid.hx());
    const double hy2 = 1.0 / (grid.hy() * grid.hy());
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(5 * m);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < n; ++k) {
        if (unknown[k] == none) continue;
        const auto row = static_cast<Eigen::Index>(unknown[k]);
        const std::size_t ix = k % grid.nx, iy = k / grid.nx;
        double diag = 0.0;
        neighbours(k, [&](std::size_t j, int axis) {
            if (!grid.active(j)) return;
            const std::size_t jx = j % grid.nx, jy = j / grid.nx;
            const double mid[2] = {0.5 * (grid.x(ix) + grid.x(jx)), 0.5 * (grid.y(iy) + grid.y(jy))};
            const double w = std::exp(-sys.beta * sys.energy(mid)) * (axis == 0 ? hx2 : hy2);
            diag += w;
            if (unknown[j] != none)
                trip.emplace_back(row, static_cast<Eigen::Index>(unknown[j]), -w);
            else
                rhs[row] += w * field.values[j];
        });
        if (diag == 0.0) throw BoundaryError("isolated grid node in the active region");
        trip.emplace_back(row, row, diag);
    }
    if (m == 0) return field;

    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    A.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(A);
    if (ldlt.info() != Eigen::Success) throw ConvergenceError("fd factorization failed", INFINITY);
    const Eigen::VectorXd u = ldlt.solve(rhs);
    const double bn = rhs.norm();
    field.residual_norm = (A * u - rhs).norm() / (bn > 0.0 ? bn : 1.0);
    if (!(field.residual_norm <= tolerance)) throw ConvergenceError("fd solve", field.residual_norm);
    for (std::size_t k = 0; k < n; ++k)
        if (unknown[k] != none) field.values[k] = u[static_cast<Eigen::Index>(unknown[k])];
    return field;
}

/// Committor with q = 0 in the closed ball around a_center, 1 around b_center.
inline GridField fd_committor_2d(const PotentialSystem& sys, const Grid2D& grid, std::span<const double> a_center,
                                 std::span<const double> b_center, double radius, double tolerance = 1e-10) {
    if (a_center.size() != 2 || b_center.size() != 2) throw DimensionError("fd_committor_2d needs 2-D centres");
    const double cells = 2.0 * radius / std::max(grid.hx(), grid.hy());
    if (cells < 4.0) throw DomainError("grid does not resolve the boundary balls (need >= 4 cells across)");
    const double ax = a_center[0], ay = a_center[1], bx = b_center[0], by = b_center[1];
    // Nodes within round-off of the sphere count as inside.
    const double r2 = radius * radius * (1.0 + 1e-12);
    return fd_dirichlet_2d(
        sys, grid,
        [=](double x, double y) {
            if ((x - ax) * (x - ax) + (y - ay) * (y - ay) <= r2) return 0.0;
            if ((x - bx) * (x - bx) + (y - by) * (y - by) <= r2) return 1.0;
            return kFreeNode;
        },
        tolerance);
}

// ---------------------------------------------------------------------------

/// (sum |a_i - b_i|^2)^(1/2), without the 1/n.
inline double rmse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("rmse: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

/// rmse / sqrt(n).
inline double normalized_rmse(std::span<const double> a, std::span<const double> b) {
    if (a.empty()) throw DimensionError("normalized_rmse: empty fields");
    return rmse(a, b) / std::sqrt(static_cast<double>(a.size()));
}

}  // namespace tmdmap
