#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "tmdmap/point_cloud.hpp"

namespace tmdmap {

// Uniform hash grid for fixed-radius neighbor queries. Points are bucketed
// into cubic cells of side `cell`; a radius query scans the ceil(r/cell)
// shell of cells around the query. Dimensions above 3 fall back to a linear
// scan over all inserted points.
class NeighborIndex {
public:
    static constexpr std::size_t kMaxHashedDim = 3;

    NeighborIndex(std::size_t dim, double cell) : dim_(dim), cell_(cell) {
        if (dim == 0) throw DomainError("neighbor index dimension must be positive");
        if (!(cell > 0.0) || !std::isfinite(cell)) brute_ = true;
        if (dim > kMaxHashedDim) brute_ = true;
    }

    static NeighborIndex build(const PointCloud& cloud, double cell) {
        NeighborIndex index(cloud.dim(), cell);
        index.coords_.reserve(cloud.coords().size());
        index.ids_.reserve(cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i) index.insert(i, cloud[i]);
        return index;
    }

    void insert(std::size_t id, std::span<const double> p) {
        const std::size_t slot = ids_.size();
        ids_.push_back(id);
        coords_.insert(coords_.end(), p.begin(), p.end());
        if (!brute_) buckets_[key_of(p)].push_back(slot);
    }

    std::size_t size() const noexcept { return ids_.size(); }
    bool brute_force() const noexcept { return brute_; }

    /// Calls fn(id, squared_distance) for every inserted point with
    /// squared distance <= radius^2.
    template <class Fn>
    void for_each_within(std::span<const double> q, double radius, Fn&& fn) const {
        const double r2 = radius * radius;
        if (brute_ || !std::isfinite(radius)) {
            for (std::size_t s = 0; s < ids_.size(); ++s) visit(s, q, r2, fn);
            return;
        }
        const auto span = static_cast<std::int64_t>(std::ceil(radius / cell_));
        const Key centre = key_of(q);
        Key k = centre;
        scan(0, centre, span, k, q, r2, fn);
    }

private:
    struct Key {
        std::array<std::int64_t, kMaxHashedDim> c{};
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            std::uint64_t h = 1469598103934665603ULL;
            for (auto v : k.c) {
                h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            }
            return static_cast<std::size_t>(h);
        }
    };

    Key key_of(std::span<const double> p) const {
        Key k;
        for (std::size_t d = 0; d < dim_; ++d)
            k.c[d] = static_cast<std::int64_t>(std::floor(p[d] / cell_));
        return k;
    }

    template <class Fn>
    void visit(std::size_t slot, std::span<const double> q, double r2, Fn& fn) const {
        const double d2 =
            squared_distance(q, std::span<const double>(coords_.data() + slot * dim_, dim_));
        if (d2 <= r2) fn(ids_[slot], d2);
    }

    template <class Fn>
    void scan(std::size_t axis, const Key& centre, std::int64_t span, Key& k,
              std::span<const double> q, double r2, Fn& fn) const {
        if (axis == dim_) {
            auto it = buckets_.find(k);
            if (it == buckets_.end()) return;
            for (std::size_t slot : it->second) visit(slot, q, r2, fn);
            return;
        }
        for (std::int64_t o = -span; o <= span; ++o) {
            k.c[axis] = centre.c[axis] + o;
            scan(axis + 1, centre, span, k, q, r2, fn);
        }
        k.c[axis] = centre.c[axis];
    }

    std::size_t dim_;
    double cell_;
    bool brute_ = false;
    std::vector<std::size_t> ids_;
    std::vector<double> coords_;
    std::unordered_map<Key, std::vector<std::size_t>, KeyHash> buckets_;
};

}  // namespace tmdmap
