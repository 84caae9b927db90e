#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tmdmap/error.hpp"
#include "tmdmap/point_cloud.hpp"

namespace tmdmap {

/// Closed interval [lo, hi] along one coordinate axis.
struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    bool contains(double x) const noexcept { return x >= lo && x <= hi; }
    bool bounded() const noexcept { return std::isfinite(lo) && std::isfinite(hi); }
};

/// A potential energy V on R^m with its gradient and inverse temperature.
/// The induced target measure is mu(x) = exp(-beta V(x)), unnormalized.
///
/// `box` (optional, one interval per axis) is a reflecting domain: samplers
/// mirror trajectories back into it and the finite-difference reference uses
/// it as the outer zero-flux boundary.
struct PotentialSystem {
    using ValueFn = std::function<double(std::span<const double>)>;
    using GradientFn = std::function<void(std::span<const double>, std::span<double>)>;

    std::string name;
    std::size_t dim = 0;
    double beta = 1.0;
    ValueFn value;
    GradientFn gradient;
    std::vector<Interval> box;

    double energy(std::span<const double> x) const { return value(x); }

    std::vector<double> grad(std::span<const double> x) const {
        std::vector<double> g(dim);
        gradient(x, g);
        return g;
    }

    void validate() const {
        if (dim == 0) throw DomainError("potential dimension must be positive");
        if (!(beta > 0.0)) throw DomainError("beta must be positive");
        if (!value || !gradient) throw DomainError("potential needs value and gradient");
        if (!box.empty() && box.size() != dim) throw DimensionError("box must have one interval per axis");
    }
};

// ---------------------------------------------------------------------------
// One-dimensional circle system, V(theta) = (4 cos^2(theta/2) - 3/2)^2.

inline double circle_potential(double theta) {
    const double c = std::cos(0.5 * theta);
    const double u = 4.0 * c * c - 1.5;
    return u * u;
}

inline double circle_potential_derivative(double theta) {
    // d/dtheta 4cos^2(theta/2) = -2 sin(theta)
    const double c = std::cos(0.5 * theta);
    const double u = 4.0 * c * c - 1.5;
    return 2.0 * u * (-2.0 * std::sin(theta));
}

inline double circle_potential_second_derivative(double theta) {
    const double c = std::cos(0.5 * theta);
    const double u = 4.0 * c * c - 1.5;
    const double du = -2.0 * std::sin(theta);
    return 2.0 * du * du + 2.0 * u * (-2.0 * std::cos(theta));
}

/// Angle of an embedded circle point, wrapped into [0, 2pi).
inline double circle_angle(std::span<const double> p) {
    double t = std::atan2(p[1], p[0]);
    if (t < 0.0) t += 2.0 * std::numbers::pi;
    if (t >= 2.0 * std::numbers::pi) t -= 2.0 * std::numbers::pi;
    return t;
}

struct CircleSystem {
    double theta1 = 0.0;
    double theta2 = 0.0;
    double r = 0.1;
    double beta = 1.0;

    /// Minima of V, theta1 = 2 acos(sqrt(3)/(2 sqrt 2)) ~ 1.8235 and
    /// theta2 = 2 acos(-sqrt(3)/(2 sqrt 2)) ~ 4.4597; r = 0.1, beta = 1.
    static CircleSystem standard() {
        const double s = std::sqrt(3.0) / (2.0 * std::sqrt(2.0));
        CircleSystem sys;
        sys.theta1 = 2.0 * std::acos(s);
        sys.theta2 = 2.0 * std::acos(-s);
        return sys;
    }

    void validate() const {
        if (!(0.0 < theta1 && theta1 < theta2 && theta2 < 2.0 * std::numbers::pi))
            throw DomainError("circle minima must satisfy 0 < theta1 < theta2 < 2pi");
        if (!(r > 0.0) || !(beta > 0.0)) throw DomainError("circle arc radius and beta must be positive");
    }
};

/// The circle potential as a function on R^2 via the angle of the point.
inline PotentialSystem circle_system(double beta = 1.0) {
    PotentialSystem sys;
    sys.name = "circle";
    sys.dim = 2;
    sys.beta = beta;
    sys.value = [](std::span<const double> x) { return circle_potential(circle_angle(x)); };
    sys.gradient = [](std::span<const double> x, std::span<double> g) {
        const double r2 = x[0] * x[0] + x[1] * x[1];
        const double dv = circle_potential_derivative(circle_angle(x));
        // d(theta)/dx = (-x2, x1) / r^2
        g[0] = -dv * x[1] / r2;
        g[1] = dv * x[0] / r2;
    };
    return sys;
}

// ---------------------------------------------------------------------------
// Mueller potential.

namespace detail {
struct MuellerTerm {
    double a, b, c, D, X, Y;
};
inline constexpr std::array<MuellerTerm, 4> kMueller{{
    {-1.0, 0.0, -10.0, -200.0, 1.0, 0.0},
    {-1.0, 0.0, -10.0, -100.0, 0.0, 0.5},
    {-6.5, 11.0, -6.5, -170.0, -0.5, 1.5},
    {0.7, 0.6, 0.7, 15.0, -1.0, 1.0},
}};
inline constexpr double kMaxExponent = 700.0;
}  // namespace detail

inline double mueller_potential(std::span<const double> x) {
    double v = 0.0;
    for (const auto& t : detail::kMueller) {
        const double dx = x[0] - t.X;
        const double dy = x[1] - t.Y;
        const double e = t.a * dx * dx + t.b * dx * dy + t.c * dy * dy;
        if (e > detail::kMaxExponent) return std::numeric_limits<double>::infinity();
        v += t.D * std::exp(e);
    }
    return v;
}

inline void mueller_gradient(std::span<const double> x, std::span<double> g) {
    g[0] = 0.0;
    g[1] = 0.0;
    for (const auto& t : detail::kMueller) {
        const double dx = x[0] - t.X;
        const double dy = x[1] - t.Y;
        const double e = t.a * dx * dx + t.b * dx * dy + t.c * dy * dy;
        if (e > detail::kMaxExponent) {
            g[0] = g[1] = std::numeric_limits<double>::infinity();
            return;
        }
        const double w = t.D * std::exp(e);
        g[0] += w * (2.0 * t.a * dx + t.b * dy);
        g[1] += w * (t.b * dx + 2.0 * t.c * dy);
    }
}

inline PotentialSystem mueller_system(double beta = 0.1) {
    PotentialSystem sys;
    sys.name = "mueller";
    sys.dim = 2;
    sys.beta = beta;
    sys.value = mueller_potential;
    sys.gradient = mueller_gradient;
    sys.box = {Interval{-2.0, 1.5}, Interval{-0.8, 2.5}};
    return sys;
}

// ---------------------------------------------------------------------------
// Two-well potential V = (x1^2 - 1)^2. V is flat in x2, so the system lives in
// the reflecting strip |x2| <= 1 (and |x1| <= 3, never reached at beta = 1).

inline double twowell_potential(std::span<const double> x) {
    const double u = x[0] * x[0] - 1.0;
    return u * u;
}

inline void twowell_gradient(std::span<const double> x, std::span<double> g) {
    g[0] = 4.0 * x[0] * (x[0] * x[0] - 1.0);
    for (std::size_t k = 1; k < g.size(); ++k) g[k] = 0.0;
}

inline PotentialSystem twowell_system(double beta = 1.0) {
    PotentialSystem sys;
    sys.name = "twowell";
    sys.dim = 2;
    sys.beta = beta;
    sys.value = twowell_potential;
    sys.gradient = twowell_gradient;
    sys.box = {Interval{-3.0, 3.0}, Interval{-1.0, 1.0}};
    return sys;
}

/// V = |x|^2 / 2 in R^dim.
inline PotentialSystem quadratic_system(std::size_t dim, double beta = 1.0) {
    PotentialSystem sys;
    sys.name = "quadratic";
    sys.dim = dim;
    sys.beta = beta;
    sys.value = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += 0.5 * v * v;
        return s;
    };
    sys.gradient = [](std::span<const double> x, std::span<double> g) {
        for (std::size_t k = 0; k < x.size(); ++k) g[k] = x[k];
    };
    return sys;
}

/// V = 0 in R^dim.
inline PotentialSystem flat_system(std::size_t dim, double beta = 1.0) {
    PotentialSystem sys;
    sys.name = "flat";
    sys.dim = dim;
    sys.beta = beta;
    sys.value = [](std::span<const double>) { return 0.0; };
    sys.gradient = [](std::span<const double>, std::span<double> g) {
        for (double& v : g) v = 0.0;
    };
    return sys;
}

// ---------------------------------------------------------------------------
// Name registry used by the CLI. Custom potentials can be added at runtime.

class PotentialRegistry {
public:
    using Factory = std::function<PotentialSystem(double beta)>;

    static PotentialRegistry& instance() {
        static PotentialRegistry registry;
        return registry;
    }

    void add(const std::string& name, Factory factory, double default_beta) {
        entries_[name] = Entry{std::move(factory), default_beta};
    }

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    double default_beta(const std::string& name) const { return lookup(name).default_beta; }

    PotentialSystem make(const std::string& name, double beta) const { return lookup(name).factory(beta); }
    PotentialSystem make(const std::string& name) const {
        const auto& e = lookup(name);
        return e.factory(e.default_beta);
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : entries_) out.push_back(k);
        return out;
    }

private:
    struct Entry {
        Factory factory;
        double default_beta;
    };

    PotentialRegistry() {
        add("circle", [](double b) { return circle_system(b); }, 1.0);
        add("mueller", [](double b) { return mueller_system(b); }, 0.1);
        add("twowell", [](double b) { return twowell_system(b); }, 1.0);
    }

    const Entry& lookup(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw DomainError("unknown potential '" + name + "'");
        return it->second;
    }

    std::map<std::string, Entry> entries_;
};

inline PotentialSystem make_potential(const std::string& name) {
    return PotentialRegistry::instance().make(name);
}
inline PotentialSystem make_potential(const std::string& name, double beta) {
    return PotentialRegistry::instance().make(name, beta);
}

/// mu_i = exp(-beta V(x_i)), no normalization. Entries may underflow to 0.
inline std::vector<double> target_measure(const PotentialSystem& sys, const PointCloud& points) {
    if (points.dim() != sys.dim) throw DimensionError("cloud dimension does not match potential");
    std::vector<double> mu(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) mu[i] = std::exp(-sys.beta * sys.energy(points[i]));
    return mu;
}

}  // namespace tmdmap
