#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "tmdmap/error.hpp"
#include "tmdmap/point_cloud.hpp"
#include "tmdmap/spatial_hash.hpp"

namespace tmdmap {

/// Sparsity pattern of a square compressed-row matrix, columns sorted per row.
struct CsrPattern {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::uint32_t> col;
};

/// Square sparse matrix in compressed-row layout. Matrices derived from one
/// another (K, K_norm, P) share a single immutable pattern.
struct CsrMatrix {
    std::shared_ptr<const CsrPattern> pattern = std::make_shared<CsrPattern>();
    std::vector<double> val;

    std::size_t size() const noexcept { return pattern->n; }
    std::size_t nnz() const noexcept { return val.size(); }
    std::size_t begin(std::size_t i) const { return pattern->row_ptr[i]; }
    std::size_t end(std::size_t i) const { return pattern->row_ptr[i + 1]; }
    std::size_t col(std::size_t q) const { return pattern->col[q]; }

    /// Stored value at (i, j) or 0.
    double at(std::size_t i, std::size_t j) const {
        const auto first = pattern->col.begin() + static_cast<std::ptrdiff_t>(begin(i));
        const auto last = pattern->col.begin() + static_cast<std::ptrdiff_t>(end(i));
        auto it = std::lower_bound(first, last, j);
        if (it == last || *it != j) return 0.0;
        return val[static_cast<std::size_t>(it - pattern->col.begin())];
    }

    double row_sum(std::size_t i) const {
        double s = 0.0;
        for (std::size_t q = begin(i); q < end(i); ++q) s += val[q];
        return s;
    }

    std::vector<double> multiply(std::span<const double> x) const {
        if (x.size() != size()) throw DimensionError("matrix-vector size mismatch");
        std::vector<double> y(size(), 0.0);
        const auto& c = pattern->col;
        for (std::size_t i = 0; i < size(); ++i) {
            double s = 0.0;
            for (std::size_t q = begin(i); q < end(i); ++q) s += val[q] * x[c[q]];
            y[i] = s;
        }
        return y;
    }

    std::vector<double> to_dense() const {
        const std::size_t n = size();
        std::vector<double> d(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t q = begin(i); q < end(i); ++q) d[i * n + col(q)] = val[q];
        return d;
    }

    /// Same sparsity pattern (shared), new values.
    CsrMatrix with_values(std::vector<double> values) const {
        if (values.size() != nnz()) throw DimensionError("with_values: wrong number of values");
        CsrMatrix m;
        m.pattern = pattern;
        m.val = std::move(values);
        return m;
    }
};

struct KernelOptions {
    /// Entries below this value are dropped; 0 keeps every pair.
    double cutoff = 1e-8;
    bool include_diagonal = true;
    /// Upper bound on stored entries before a CapacityError is raised.
    std::size_t max_nonzeros = 150'000'000;
};

/// Symmetric Gaussian kernel K_ij = exp(-|x_i - x_j|^2 / eps).
struct SparseKernel {
    double epsilon = 0.0;
    double cutoff = 0.0;
    bool includes_diagonal = true;
    CsrMatrix entries;

    std::size_t size() const noexcept { return entries.size(); }
};

struct DensityEstimate {
    std::vector<double> values;
    double epsilon = 0.0;
};

/// Distance beyond which exp(-d^2/eps) < cutoff; infinite when cutoff is 0.
inline double kernel_radius(double epsilon, double cutoff) {
    if (cutoff <= 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(epsilon * std::log(1.0 / cutoff));
}

inline SparseKernel build_kernel(const PointCloud& cloud, double epsilon, const KernelOptions& options = {}) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("build_kernel: epsilon must be positive");
    if (!(options.cutoff >= 0.0 && options.cutoff < 1.0)) throw DomainError("build_kernel: cutoff must lie in [0, 1)");

    const std::size_t n = cloud.size();
    if (n > std::numeric_limits<std::uint32_t>::max()) throw CapacityError(n, std::numeric_limits<std::uint32_t>::max());
    const double radius = kernel_radius(epsilon, options.cutoff);
    const double inv_eps = 1.0 / epsilon;
    const std::size_t diag = options.include_diagonal ? 1 : 0;

    // Strict upper triangle row by row, then mirrored into the full pattern.
    std::vector<std::size_t> up_ptr(n + 1, 0);
    std::vector<std::uint32_t> up_col;
    std::vector<double> up_val;
    std::vector<std::size_t> lower_count(n, 0);
    std::vector<std::pair<std::uint32_t, double>> row;
    std::size_t stored = diag * n;
    const NeighborIndex index = NeighborIndex::build(cloud, std::isfinite(radius) ? radius : 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        index.for_each_within(cloud[i], radius, [&](std::size_t j, double d2) {
            if (j <= i) return;
            const double k = std::exp(-d2 * inv_eps);
            if (k < options.cutoff || k == 0.0) return;
            row.emplace_back(static_cast<std::uint32_t>(j), k);
        });
        std::sort(row.begin(), row.end());
        for (const auto& [j, k] : row) {
            up_col.push_back(j);
            up_val.push_back(k);
            ++lower_count[j];
        }
        up_ptr[i + 1] = up_col.size();
        stored += 2 * row.size();
        if (stored > options.max_nonzeros) throw CapacityError(stored, options.max_nonzeros);
    }

    auto pattern = std::make_shared<CsrPattern>();
    pattern->n = n;
    pattern->row_ptr.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i)
        pattern->row_ptr[i + 1] = pattern->row_ptr[i] + lower_count[i] + diag + (up_ptr[i + 1] - up_ptr[i]);
    pattern->col.resize(stored);
    std::vector<double> val(stored);
    // Lower parts first: scanning upper rows in increasing order keeps them sorted.
    std::vector<std::size_t> cursor(pattern->row_ptr.begin(), pattern->row_ptr.end() - 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t q = up_ptr[i]; q < up_ptr[i + 1]; ++q) {
            const std::size_t j = up_col[q];
            pattern->col[cursor[j]] = static_cast<std::uint32_t>(i);
            val[cursor[j]++] = up_val[q];
        }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t c = cursor[i];
        if (diag) {
            pattern->col[c] = static_cast<std::uint32_t>(i);
            val[c++] = 1.0;
        }
        for (std::size_t q = up_ptr[i]; q < up_ptr[i + 1]; ++q) {
            pattern->col[c] = up_col[q];
            val[c++] = up_val[q];
        }
    }

    SparseKernel kernel;
    kernel.epsilon = epsilon;
    kernel.cutoff = options.cutoff;
    kernel.includes_diagonal = options.include_diagonal;
    kernel.entries.pattern = std::move(pattern);
    kernel.entries.val = std::move(val);
    return kernel;
}

/// rho_i = (1/n) sum_j K_ij.
inline DensityEstimate kde(const SparseKernel& kernel) {
    DensityEstimate d;
    d.epsilon = kernel.epsilon;
    const std::size_t n = kernel.size();
    d.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.values[i] = kernel.entries.row_sum(i) / static_cast<double>(n);
    return d;
}

// ---------------------------------------------------------------------------
// Kernel-sum bandwidth scan.

struct KsumRow {
    double epsilon = 0.0;
    double sum = 0.0;
    double log_slope = 0.0;
};

struct KsumResult {
    double eps_star = 0.0;
    std::size_t star_index = 0;
    std::vector<KsumRow> table;
};

inline std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
    if (count < 2 || !(lo > 0.0) || !(hi > lo)) throw DomainError("log_spaced: need count >= 2 and 0 < lo < hi");
    std::vector<double> out(count);
    const double a = std::log(lo);
    const double b = std::log(hi);
    for (std::size_t k = 0; k < count; ++k)
        out[k] = std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(count - 1));
    out.front() = lo;
    out.back() = hi;
    return out;
}

/// S(eps) = sum_ij exp(-|x_i - x_j|^2 / eps) over all pairs (no sparsification),
/// its log-log slope by centered differences (one-sided at the ends), and the
/// eps of maximal slope.
inline KsumResult ksum_scan(const PointCloud& cloud, std::span<const double> eps_grid) {
    if (eps_grid.size() < 3) throw DomainError("ksum_scan: grid needs at least 3 values");
    for (std::size_t k = 0; k < eps_grid.size(); ++k) {
        if (!(eps_grid[k] > 0.0)) throw DomainError("ksum_scan: bandwidths must be positive");
        if (k > 0 && !(eps_grid[k] > eps_grid[k - 1])) throw DomainError("ksum_scan: grid must be strictly increasing");
    }
    const std::size_t n = cloud.size();
    const std::size_t g = eps_grid.size();
    std::vector<double> inv(g);
    for (std::size_t k = 0; k < g; ++k) inv[k] = 1.0 / eps_grid[k];

    // Off-diagonal pairs counted once, then doubled. exp underflows to exactly
    // zero beyond d^2/eps > 745, so those terms are skipped.
    std::vector<double> pair_sum(g, 0.0);
    std::vector<double> row(g);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(row.begin(), row.end(), 0.0);
        const auto xi = cloud[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d2 = squared_distance(xi, cloud[j]);
            for (std::size_t k = g; k-- > 0;) {
                const double a = d2 * inv[k];
                if (a > 745.0) break;
                row[k] += std::exp(-a);
            }
        }
        for (std::size_t k = 0; k < g; ++k) pair_sum[k] += row[k];
    }

    KsumResult result;
    result.table.resize(g);
    for (std::size_t k = 0; k < g; ++k) {
        result.table[k].epsilon = eps_grid[k];
        result.table[k].sum = static_cast<double>(n) + 2.0 * pair_sum[k];
        if (!std::isfinite(result.table[k].sum)) throw DomainError("ksum_scan: kernel sum is not finite");
    }
    auto slope = [&](std::size_t a, std::size_t b) {
        return (std::log(result.table[b].sum) - std::log(result.table[a].sum)) /
               (std::log(eps_grid[b]) - std::log(eps_grid[a]));
    };
    for (std::size_t k = 0; k < g; ++k) {
        const std::size_t a = k == 0 ? 0 : k - 1;
        const std::size_t b = k + 1 == g ? k : k + 1;
        result.table[k].log_slope = slope(a, b);
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < g; ++k)
        if (result.table[k].log_slope > result.table[best].log_slope) best = k;
    result.star_index = best;
    result.eps_star = eps_grid[best];
    return result;
}

/// Default grid: 64 log-spaced bandwidths over [1e-4, 10].
inline std::vector<double> default_ksum_grid() { return log_spaced(1e-4, 10.0, 64); }

}  // namespace tmdmap
