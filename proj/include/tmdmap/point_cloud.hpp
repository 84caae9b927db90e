#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tmdmap/error.hpp"

namespace tmdmap {

/// n points in R^m stored row-major.
class PointCloud {
public:
    PointCloud() = default;
    explicit PointCloud(std::size_t dim) : dim_(dim) {
        if (dim == 0) throw DomainError("point cloud dimension must be positive");
    }
    PointCloud(std::size_t dim, std::vector<double> coords) : dim_(dim), coords_(std::move(coords)) {
        if (dim == 0) throw DomainError("point cloud dimension must be positive");
        if (coords_.size() % dim != 0)
            throw DimensionError("coordinate count is not a multiple of the dimension");
    }

    std::size_t size() const noexcept { return dim_ == 0 ? 0 : coords_.size() / dim_; }
    std::size_t dim() const noexcept { return dim_; }
    bool empty() const noexcept { return coords_.empty(); }

    std::span<const double> operator[](std::size_t i) const {
        return {coords_.data() + i * dim_, dim_};
    }
    std::span<double> operator[](std::size_t i) { return {coords_.data() + i * dim_, dim_}; }

    void push_back(std::span<const double> p) {
        if (p.size() != dim_) throw DimensionError("point dimension does not match cloud");
        coords_.insert(coords_.end(), p.begin(), p.end());
    }

    void reserve(std::size_t n) { coords_.reserve(n * dim_); }

    const std::vector<double>& coords() const noexcept { return coords_; }

    PointCloud subset(std::span<const std::size_t> indices) const {
        PointCloud out(dim_);
        out.reserve(indices.size());
        for (std::size_t i : indices) out.push_back((*this)[i]);
        return out;
    }

    bool all_finite() const {
        for (double c : coords_)
            if (!std::isfinite(c)) return false;
        return true;
    }

    friend bool operator==(const PointCloud&, const PointCloud&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> coords_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(squared_distance(a, b));
}

}  // namespace tmdmap
