#pragma once

#include <cmath>
#include <cstddef>
#include <algorithm>
#include <iomanip>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tmdmap/error.hpp"
#include "tmdmap/kernel.hpp"
#include "tmdmap/point_cloud.hpp"
#include "tmdmap/spatial_hash.hpp"

namespace tmdmap {

enum class GeneratorMode { Dmap, Tmdmap };

// The renormalization chain  K -> K_norm = K diag(s) -> P = diag(1/d) K_norm
// -> L = (P - I) / eps,  with column scale s_j = sqrt(mu_j) / rho_j (TMDmap)
// or s_j = rho_j^-alpha (Dmap) and row sums d_i = sum_j K_norm_ij.
// K_norm and P share the kernel's sparsity pattern (diagonal included); L has
// the same pattern and is derived from P on request.
struct GeneratorBundle {
    double epsilon = 0.0;
    GeneratorMode mode = GeneratorMode::Tmdmap;
    double alpha = 1.0;
    std::vector<double> mu;
    std::vector<double> kde;
    std::vector<double> column_scale;
    CsrMatrix kernel_normalized;
    std::vector<double> row_normalizer;
    CsrMatrix markov;

    std::size_t size() const noexcept { return markov.size(); }

    /// L entry stored at position q of row i.
    double generator_value(std::size_t i, std::size_t q) const {
        return (markov.val[q] - (markov.col(q) == i ? 1.0 : 0.0)) / epsilon;
    }

    /// L = (P - I) / eps, materialized with the shared pattern.
    CsrMatrix generator() const {
        std::vector<double> l(markov.nnz());
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t q = markov.begin(i); q < markov.end(i); ++q) l[q] = generator_value(i, q);
        return markov.with_values(std::move(l));
    }

    /// Weights pi_i = d_i s_i under which P is reversible:
    /// pi_i P_ij = K_ij s_i s_j is symmetric.
    std::vector<double> reversible_weights() const {
        std::vector<double> w(size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = row_normalizer[i] * column_scale[i];
        return w;
    }
};

namespace detail {

inline GeneratorBundle assemble_bundle(const SparseKernel& kernel, std::vector<double> scale) {
    const CsrMatrix& K = kernel.entries;
    const std::size_t n = K.size();
    if (!kernel.includes_diagonal)
        throw DomainError("generator needs a kernel with its diagonal stored");

    GeneratorBundle b;
    b.epsilon = kernel.epsilon;
    std::vector<double> kn(K.nnz()), p(K.nnz());
    b.row_normalizer.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = 0.0;
        for (std::size_t q = K.begin(i); q < K.end(i); ++q) {
            kn[q] = K.val[q] * scale[K.col(q)];
            d += kn[q];
        }
        if (!(d > 0.0) || !std::isfinite(d))
            throw DegenerateMeasureError("renormalized kernel row " + std::to_string(i) +
                                         " has no positive mass");
        b.row_normalizer[i] = d;
        for (std::size_t q = K.begin(i); q < K.end(i); ++q) p[q] = kn[q] / d;
    }
    b.column_scale = std::move(scale);
    b.kernel_normalized = K.with_values(std::move(kn));
    b.markov = K.with_values(std::move(p));
    return b;
}

inline void check_kde(const SparseKernel& kernel, const DensityEstimate& density) {
    if (density.values.size() != kernel.size()) throw DimensionError("kde length does not match kernel");
    for (double r : density.values)
        if (!(r > 0.0)) throw DomainError("kde must be strictly positive");
}

inline void check_measure(std::span<const double> mu) {
    bool any = false;
    for (double m : mu) {
        if (m < 0.0 || std::isnan(m)) throw DomainError("target measure has a negative or NaN entry");
        if (m > 0.0) any = true;
    }
    if (!any) throw DegenerateMeasureError("target measure vanishes at every point");
}

}  // namespace detail

inline GeneratorBundle build_tmdmap(const SparseKernel& kernel, const DensityEstimate& density,
                                    std::span<const double> mu) {
    detail::check_kde(kernel, density);
    if (mu.size() != kernel.size()) throw DimensionError("mu length does not match kernel");
    detail::check_measure(mu);
    std::vector<double> scale(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) scale[j] = std::sqrt(mu[j]) / density.values[j];
    GeneratorBundle b = detail::assemble_bundle(kernel, std::move(scale));
    b.mode = GeneratorMode::Tmdmap;
    b.mu.assign(mu.begin(), mu.end());
    b.kde = density.values;
    return b;
}

inline GeneratorBundle build_dmap(const SparseKernel& kernel, const DensityEstimate& density, double alpha) {
    detail::check_kde(kernel, density);
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("dmap alpha must lie in [0, 1]");
    std::vector<double> scale(kernel.size());
    for (std::size_t j = 0; j < scale.size(); ++j)
        scale[j] = alpha == 0.0 ? 1.0 : std::pow(density.values[j], -alpha);
    GeneratorBundle b = detail::assemble_bundle(kernel, std::move(scale));
    b.mode = GeneratorMode::Dmap;
    b.alpha = alpha;
    b.kde = density.values;
    return b;
}

/// scale * (P f - f) / eps.
inline std::vector<double> apply_generator(const GeneratorBundle& bundle, std::span<const double> f,
                                           double scale = 1.0) {
    if (f.size() != bundle.size()) throw DimensionError("apply_generator: f has wrong length");
    std::vector<double> pf = bundle.markov.multiply(f);
    const double c = scale / bundle.epsilon;
    for (std::size_t i = 0; i < pf.size(); ++i) pf[i] = c * (pf[i] - f[i]);
    return pf;
}

// ---------------------------------------------------------------------------
// Single-row evaluation for clouds too large to assemble: only the KDE values
// of the neighbours of the target point are computed.

struct GeneratorRow {
    std::size_t index = 0;
    double epsilon = 0.0;
    std::vector<std::size_t> cols;
    std::vector<double> markov;

    /// (L f)(x_index) = (sum_j P_ij f_j - f_index) / eps.
    double apply(std::span<const double> f) const {
        double s = 0.0, self = 0.0;
        for (std::size_t q = 0; q < cols.size(); ++q) {
            s += markov[q] * f[cols[q]];
            if (cols[q] == index) self = f[cols[q]];
        }
        return (s - self) / epsilon;
    }
};

/// KDE (1/n) sum_j K_ij at the listed points only.
inline std::vector<double> kde_at(const PointCloud& cloud, const NeighborIndex& index, double epsilon,
                                  std::span<const std::size_t> targets, double cutoff = 1e-8) {
    const double radius = kernel_radius(epsilon, cutoff);
    const double inv_eps = 1.0 / epsilon;
    std::vector<double> rho(targets.size(), 0.0);
    if (2 * targets.size() > cloud.size()) {
        // Most points requested: all pairs once, vectorized over columns.
        const auto n = static_cast<Eigen::Index>(cloud.size());
        const auto dim = static_cast<Eigen::Index>(cloud.dim());
        Eigen::ArrayXXd x(n, dim);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index d = 0; d < dim; ++d)
                x(i, d) = cloud[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
        Eigen::ArrayXd all = Eigen::ArrayXd::Ones(n), k(n);
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            const Eigen::Index m = n - i - 1;
            auto seg = k.head(m);
            seg = (x.col(0).tail(m) - x(i, 0)).square();
            for (Eigen::Index d = 1; d < dim; ++d) seg += (x.col(d).tail(m) - x(i, d)).square();
            seg = (-inv_eps * seg).exp();
            seg = (seg >= cutoff).select(seg, 0.0);
            all[i] += seg.sum();
            all.tail(m) += seg;
        }
        const double inv_n = 1.0 / static_cast<double>(cloud.size());
        for (std::size_t a = 0; a < targets.size(); ++a) rho[a] = all[static_cast<Eigen::Index>(targets[a])] * inv_n;
        return rho;
    }
    std::vector<double> d2;
    for (std::size_t a = 0; a < targets.size(); ++a) {
        d2.clear();
        index.for_each_within(cloud[targets[a]], radius, [&](std::size_t, double v) { d2.push_back(v); });
        Eigen::Map<Eigen::ArrayXd> x(d2.data(), static_cast<Eigen::Index>(d2.size()));
        x = (-inv_eps * x).exp();
        rho[a] = (x >= cutoff).select(x, 0.0).sum();
    }
    const double inv_n = 1.0 / static_cast<double>(cloud.size());
    for (double& r : rho) r *= inv_n;
    return rho;
}

/// Row `row` of the TMDmap Markov matrix on `cloud`; mu holds the target
/// measure at every point. Agrees with build_tmdmap on the same cutoff up to
/// summation order.
inline GeneratorRow tmdmap_row(const PointCloud& cloud, const NeighborIndex& index, double epsilon,
                               std::span<const double> mu, std::size_t row, double cutoff = 1e-8) {
    if (mu.size() != cloud.size()) throw DimensionError("tmdmap_row: mu has wrong length");
    if (row >= cloud.size()) throw DimensionError("tmdmap_row: row out of range");
    const double radius = kernel_radius(epsilon, cutoff);
    const double inv_eps = 1.0 / epsilon;

    std::vector<std::pair<std::size_t, double>> nbrs;
    index.for_each_within(cloud[row], radius, [&](std::size_t j, double d2) {
        const double k = j == row ? 1.0 : std::exp(-d2 * inv_eps);
        if (j != row && (k < cutoff || k == 0.0)) return;
        nbrs.emplace_back(j, k);
    });
    std::sort(nbrs.begin(), nbrs.end());

    GeneratorRow r;
    r.index = row;
    r.epsilon = epsilon;
    r.cols.reserve(nbrs.size());
    for (const auto& nb : nbrs) r.cols.push_back(nb.first);
    const std::vector<double> rho = kde_at(cloud, index, epsilon, r.cols, cutoff);
    r.markov.reserve(nbrs.size());
    double d = 0.0;
    for (std::size_t q = 0; q < nbrs.size(); ++q) {
        const double kn = nbrs[q].second * std::sqrt(mu[nbrs[q].first]) / rho[q];
        r.markov.push_back(kn);
        d += kn;
    }
    if (!(d > 0.0)) throw DegenerateMeasureError("tmdmap_row: renormalized row has no positive mass");
    for (double& v : r.markov) v /= d;
    return r;
}

// ---------------------------------------------------------------------------

/// Matrix Market coordinate (real general) dump, 1-based indices.
inline void write_matrix_market(std::ostream& os, const CsrMatrix& m) {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << m.size() << ' ' << m.size() << ' ' << m.nnz() << '\n';
    os << std::setprecision(17);
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t q = m.begin(i); q < m.end(i); ++q)
            os << i + 1 << ' ' << m.col(q) + 1 << ' ' << m.val[q] << '\n';
}

}  // namespace tmdmap
