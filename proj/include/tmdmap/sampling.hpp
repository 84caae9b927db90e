#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "tmdmap/error.hpp"
#include "tmdmap/point_cloud.hpp"
#include "tmdmap/potentials.hpp"
#include "tmdmap/rng.hpp"
#include "tmdmap/spatial_hash.hpp"

namespace tmdmap {

struct MetadynamicsParams {
    double w0 = 0.5;
    double sigma = 0.1;
    std::size_t stride = 100;
    double dt = 1e-4;
    std::size_t n_steps = 1'000'000;
    std::uint64_t seed = 0;
    /// Keep every record_stride-th visited state (1 keeps the full trajectory).
    std::size_t record_stride = 1;

    void validate() const {
        if (!(w0 > 0.0)) throw DomainError("metadynamics: w0 must be positive");
        if (!(sigma > 0.0)) throw DomainError("metadynamics: sigma must be positive");
        if (stride < 1) throw DomainError("metadynamics: stride must be >= 1");
        if (!(dt > 0.0)) throw DomainError("metadynamics: dt must be positive");
        if (record_stride < 1) throw DomainError("metadynamics: record_stride must be >= 1");
    }
};

struct DeltaNetParams {
    double delta = 0.02;
};

namespace detail {

inline constexpr double kDivergenceRadius = 1e6;

inline void reflect_into(const std::vector<Interval>& box, std::span<double> x) {
    for (std::size_t k = 0; k < box.size(); ++k) {
        const auto& iv = box[k];
        if (!iv.bounded()) continue;
        const double width = iv.hi - iv.lo;
        // Fold onto [lo, lo + 2 width) then mirror the upper half.
        double y = std::fmod(x[k] - iv.lo, 2.0 * width);
        if (y < 0.0) y += 2.0 * width;
        x[k] = y <= width ? iv.lo + y : iv.lo + 2.0 * width - y;
    }
}

inline bool diverged(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return !(s <= kDivergenceRadius * kDivergenceRadius);
}

// x <- x - grad dt + sqrt(2 dt / beta) xi, then reflection. Shared by plain and
// biased dynamics so both consume the random stream identically.
inline void langevin_step(const PotentialSystem& sys, std::span<double> x, std::span<const double> grad,
                          double dt, double noise, Rng& rng) {
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += -grad[k] * dt + noise * rng.normal();
    reflect_into(sys.box, x);
}

}  // namespace detail

/// Overdamped Langevin trajectory by Euler-Maruyama, keeping every
/// `subsample`-th state (n_steps / subsample points in total).
inline PointCloud euler_maruyama(const PotentialSystem& sys, std::span<const double> x0, double dt,
                                 std::size_t n_steps, std::size_t subsample, std::uint64_t seed) {
    sys.validate();
    if (!(dt > 0.0)) throw DomainError("euler_maruyama: dt must be positive");
    if (subsample < 1) throw DomainError("euler_maruyama: subsample must be >= 1");
    if (x0.size() != sys.dim) throw DimensionError("euler_maruyama: x0 has wrong dimension");

    Rng rng(seed);
    const double noise = std::sqrt(2.0 * dt / sys.beta);
    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> g(sys.dim);
    PointCloud out(sys.dim);
    out.reserve(n_steps / subsample);
    for (std::size_t step = 1; step <= n_steps; ++step) {
        sys.gradient(x, g);
        detail::langevin_step(sys, x, g, dt, noise, rng);
        if (detail::diverged(x)) throw DivergenceError(step);
        if (step % subsample == 0) out.push_back(x);
    }
    return out;
}

// Sum of Gaussian bumps w0 exp(-|x - c_j|^2 / (2 sigma^2)) over deposited
// centres c_j. Bumps further than `reach` contribute below 1e-17 w0 and are
// skipped through a hash grid; evaluation otherwise matches the explicit sum.
class BiasPotential {
public:
    BiasPotential(std::size_t dim, double w0, double sigma)
        : dim_(dim), w0_(w0), inv_two_sigma2_(1.0 / (2.0 * sigma * sigma)),
          reach_(sigma * std::sqrt(2.0 * kCutoffExponent)), index_(dim, reach_) {}

    void deposit(std::span<const double> centre) {
        index_.insert(centres_.size() / dim_, centre);
        centres_.insert(centres_.end(), centre.begin(), centre.end());
    }

    std::size_t size() const noexcept { return centres_.size() / dim_; }
    std::span<const double> centre(std::size_t j) const { return {centres_.data() + j * dim_, dim_}; }

    double value(std::span<const double> x) const {
        double v = 0.0;
        index_.for_each_within(x, reach_, [&](std::size_t, double d2) { v += w0_ * std::exp(-d2 * inv_two_sigma2_); });
        return v;
    }

    /// Adds the bias gradient into g.
    void add_gradient(std::span<const double> x, std::span<double> g) const {
        index_.for_each_within(x, reach_, [&](std::size_t j, double d2) {
            const double w = w0_ * std::exp(-d2 * inv_two_sigma2_) * 2.0 * inv_two_sigma2_;
            const auto c = centre(j);
            for (std::size_t k = 0; k < dim_; ++k) g[k] -= w * (x[k] - c[k]);
        });
    }

private:
    static constexpr double kCutoffExponent = 40.0;

    std::size_t dim_;
    double w0_;
    double inv_two_sigma2_;
    double reach_;
    NeighborIndex index_;
    std::vector<double> centres_;
};

/// Metadynamics with the identity collective variable: Euler-Maruyama under
/// V + W(x, t), with a bump deposited at the current state every `stride`
/// steps. Returns the visited states (every record_stride-th one).
inline PointCloud metadynamics(const PotentialSystem& sys, const MetadynamicsParams& params,
                               std::span<const double> x0, BiasPotential* bias_out = nullptr) {
    sys.validate();
    params.validate();
    if (x0.size() != sys.dim) throw DimensionError("metadynamics: x0 has wrong dimension");

    Rng rng(params.seed);
    const double noise = std::sqrt(2.0 * params.dt / sys.beta);
    BiasPotential bias(sys.dim, params.w0, params.sigma);
    std::vector<double> x(x0.begin(), x0.end());
    std::vector<double> g(sys.dim);
    PointCloud out(sys.dim);
    out.reserve(params.n_steps / params.record_stride);
    for (std::size_t step = 1; step <= params.n_steps; ++step) {
        sys.gradient(x, g);
        if (bias.size() > 0) bias.add_gradient(x, g);
        detail::langevin_step(sys, x, g, params.dt, noise, rng);
        if (detail::diverged(x)) throw DivergenceError(step);
        if (step % params.record_stride == 0) out.push_back(x);
        if (step % params.stride == 0) bias.deposit(x);
    }
    if (bias_out) *bias_out = std::move(bias);
    return out;
}

/// Greedy delta-net in input order: a point is kept iff every point kept so
/// far is at distance >= delta from it.
inline PointCloud delta_net(const PointCloud& cloud, const DeltaNetParams& params) {
    if (!(params.delta > 0.0)) throw DomainError("delta_net: delta must be positive");
    if (cloud.empty()) return PointCloud(cloud.dim() == 0 ? 1 : cloud.dim());
    const double delta2 = params.delta * params.delta;
    NeighborIndex kept(cloud.dim(), params.delta);
    PointCloud out(cloud.dim());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        bool blocked = false;
        kept.for_each_within(cloud[i], params.delta, [&](std::size_t, double d2) {
            if (d2 < delta2) blocked = true;
        });
        if (!blocked) {
            kept.insert(out.size(), cloud[i]);
            out.push_back(cloud[i]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Circle densities.

enum class CircleDensity { Uniform, FractionalNormal };

/// uniform: theta ~ U[0, 2pi).
/// fractional-normal: theta = pi + 0.1 + 0.2 pi frac(Z), frac(z) = fmod(z, 1), signed.
inline std::vector<double> sample_circle_angles(CircleDensity kind, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw DomainError("sample_circle_angles: n must be >= 1");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    Rng rng(seed);
    std::vector<double> theta(n);
    for (auto& t : theta) {
        if (kind == CircleDensity::Uniform) {
            t = two_pi * rng.uniform();
        } else {
            const double z = rng.normal();
            t = std::numbers::pi + 0.1 + 0.2 * std::numbers::pi * std::fmod(z, 1.0);
        }
        t = std::fmod(t, two_pi);
        if (t < 0.0) t += two_pi;
    }
    return theta;
}

/// psi(theta) = (cos theta, sin theta).
inline PointCloud embed_circle(std::span<const double> theta) {
    PointCloud out(2);
    out.reserve(theta.size());
    for (double t : theta) {
        const double p[2] = {std::cos(t), std::sin(t)};
        out.push_back(p);
    }
    return out;
}

inline PointCloud sample_circle_density(CircleDensity kind, std::size_t n, std::uint64_t seed) {
    return embed_circle(sample_circle_angles(kind, n, seed));
}

}  // namespace tmdmap
