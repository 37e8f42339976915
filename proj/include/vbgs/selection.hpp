#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "vbgs/errors.hpp"
#include "vbgs/gaussian_model.hpp"

namespace vbgs {

/// Top-k Gaussians for one query point, ascending by Mahalanobis distance
/// with ties broken by ascending flat index.
struct SelectionResult {
    std::vector<std::size_t> indices;
    std::vector<double> distances;

    std::size_t size() const { return indices.size(); }
};

namespace detail {

using Candidate = std::pair<double, std::size_t>;

/// Keeps the k lexicographically smallest (distance, index) pairs in
/// ascending order.
class TopKBuffer {
public:
    explicit TopKBuffer(std::size_t k) : k_(k) { items_.reserve(k); }

    bool full() const { return items_.size() >= k_; }
    double worst() const { return items_.back().first; }

    void offer(double d, std::size_t idx) {
        if (full() && !(d < items_.back().first || (d == items_.back().first && idx < items_.back().second)))
            return;
        if (!full()) items_.emplace_back();
        std::size_t pos = items_.size() - 1;
        while (pos > 0 && (d < items_[pos - 1].first || (d == items_[pos - 1].first && idx < items_[pos - 1].second))) {
            items_[pos] = items_[pos - 1];
            --pos;
        }
        items_[pos] = {d, idx};
    }

    SelectionResult finish() const {
        SelectionResult r;
        r.indices.reserve(items_.size());
        r.distances.reserve(items_.size());
        for (const auto& [d, i] : items_) {
            r.distances.push_back(d);
            r.indices.push_back(i);
        }
        return r;
    }

private:
    std::size_t k_;
    std::vector<Candidate> items_;
};

}  // namespace detail

/// Exhaustive evaluation over every Gaussian. Reference path for top_k.
inline SelectionResult brute_force_top_k(const GaussianSet& gs, Point2 p, std::size_t k) {
    std::vector<detail::Candidate> all(gs.size());
    for (std::size_t n = 0; n < gs.size(); ++n) all[n] = {mahalanobis(gs.gaussian(n), p), n};
    const std::size_t m = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end());
    SelectionResult r;
    r.indices.reserve(m);
    r.distances.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        r.distances.push_back(all[i].first);
        r.indices.push_back(all[i].second);
    }
    return r;
}

/// Uniform bucket grid over [-1, 1]^2 holding Gaussians by center. Centers
/// outside the domain land in the nearest border cell.
///
/// Queries are exact: d_M(g, p) >= |p - c_g| / sqrt(lambda_max(Sigma_g)), so
/// a block of cells whose nearest possible center is farther than d_k * s
/// (s the largest sqrt(lambda_max) inside it) cannot improve the current
/// top-k. Rings of 4x4-cell blocks are expanded around the query and cut
/// off once (ring - 1) * block width exceeds d_k * s_max.
class GaussianGridIndex {
public:
    GaussianGridIndex() = default;

    GaussianGridIndex(const GaussianSet& gs, double cell_size) {
        if (gs.empty()) throw ParameterError("cannot index an empty Gaussian set");
        if (!(cell_size > 0.0) || !std::isfinite(cell_size))
            throw ParameterError("cell size must be a positive finite number");
        cell_size_ = cell_size;
        nx_ = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(2.0 / cell_size)));
        ny_ = nx_;
        count_ = gs.size();

        nbx_ = (nx_ + kBlock - 1) / kBlock;
        nby_ = (ny_ + kBlock - 1) / kBlock;

        // Members are stored block-major, then by cell within the block, then
        // by Gaussian index, so a block's members are one contiguous run.
        std::vector<std::size_t> key_of(count_);
        offsets_.assign(nbx_ * nby_ * kBlock * kBlock + 1, 0);
        for (std::size_t n = 0; n < count_; ++n) {
            key_of[n] = key(cell_index(gs.gaussian(n).center));
            ++offsets_[key_of[n] + 1];
        }
        for (std::size_t i = 0; i + 1 < offsets_.size(); ++i) offsets_[i + 1] += offsets_[i];
        items_.resize(count_);
        members_.resize(count_);
        std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
        blocks_.assign(nbx_ * nby_, Node{});
        s_max_ = 0.0;
        for (std::size_t n = 0; n < count_; ++n) {
            const Gaussian& g = gs.gaussian(n);
            const std::size_t slot = fill[key_of[n]]++;
            items_[slot] = n;
            members_[slot] = {g.center, g.inv};
            const double s = std::sqrt(g.lambda_max);
            blocks_[key_of[n] / (kBlock * kBlock)].add(g.center, s);
            s_max_ = std::max(s_max_, s);
        }
    }

    double cell_size() const { return cell_size_; }
    std::size_t cells_x() const { return nx_; }
    std::size_t cells_y() const { return ny_; }
    std::size_t cell_count() const { return nx_ * ny_; }
    std::size_t gaussian_count() const { return count_; }
    double s_max() const { return s_max_; }

    std::span<const std::size_t> cell(std::size_t c) const {
        const std::size_t k = key(c);
        return std::span<const std::size_t>(items_).subspan(offsets_[k], offsets_[k + 1] - offsets_[k]);
    }

    std::size_t cell_index(Point2 p) const { return cell_row(p.y) * nx_ + cell_col(p.x); }

    SelectionResult top_k(const GaussianSet& gs, Point2 p, std::size_t k) const {
        if (gs.size() != count_) throw ConfigError("index was built for a different Gaussian set");
        if (k == 0) throw ParameterError("k must be at least 1");
        // Every Gaussian is selected, so nothing can be pruned.
        if (k >= count_) return brute_force_top_k(gs, p, k);
        detail::TopKBuffer heap(k);
        const auto bx = static_cast<std::ptrdiff_t>(cell_col(p.x) / kBlock);
        const auto by = static_cast<std::ptrdiff_t>(cell_row(p.y) / kBlock);
        const auto nbx = static_cast<std::ptrdiff_t>(nbx_);
        const auto nby = static_cast<std::ptrdiff_t>(nby_);
        const std::ptrdiff_t max_ring = std::max({bx, nbx - 1 - bx, by, nby - 1 - by});
        const double block_size = cell_size_ * static_cast<double>(kBlock);

        auto visit = [&](std::ptrdiff_t col, std::ptrdiff_t row) {
            if (col < 0 || row < 0 || col >= nbx || row >= nby) return;
            const auto b = static_cast<std::size_t>(row * nbx + col);
            const Node& block = blocks_[b];
            if (block.empty()) return;
            if (heap.full()) {
                const double w = heap.worst() * kSlack;
                if (block.bound_sq(p) > w * w) return;
            }
            const std::size_t end = offsets_[(b + 1) * kBlock * kBlock];
            for (std::size_t i = offsets_[b * kBlock * kBlock]; i < end; ++i) {
                const double q = mahalanobis_sq(members_[i].inv, members_[i].center, p);
                if (heap.full()) {
                    // sqrt is monotone, so this cannot drop a candidate that ties d_k.
                    const double w = heap.worst() * kSlack;
                    if (q > w * w) continue;
                }
                heap.offer(std::sqrt(q), items_[i]);
            }
        };

        for (std::ptrdiff_t r = 0; r <= max_ring; ++r) {
            if (r >= 1 && heap.full() && static_cast<double>(r - 1) * block_size > heap.worst() * s_max_ * kSlack)
                break;
            if (r == 0) {
                visit(bx, by);
                continue;
            }
            for (std::ptrdiff_t col = bx - r; col <= bx + r; ++col) {
                visit(col, by - r);
                visit(col, by + r);
            }
            for (std::ptrdiff_t row = by - r + 1; row <= by + r - 1; ++row) {
                visit(bx - r, row);
                visit(bx + r, row);
            }
        }
        return heap.finish();
    }

private:
    struct Node {
        double min_x = std::numeric_limits<double>::infinity();
        double min_y = std::numeric_limits<double>::infinity();
        double max_x = -std::numeric_limits<double>::infinity();
        double max_y = -std::numeric_limits<double>::infinity();
        double scale = 0.0;

        bool empty() const { return scale == 0.0; }
        void add(Point2 c, double s) {
            min_x = std::min(min_x, c.x);
            min_y = std::min(min_y, c.y);
            max_x = std::max(max_x, c.x);
            max_y = std::max(max_y, c.y);
            scale = std::max(scale, s);
        }
        // Squared lower bound on the Mahalanobis distance from p to any member.
        double bound_sq(Point2 p) const {
            const double dx = std::max({min_x - p.x, 0.0, p.x - max_x});
            const double dy = std::max({min_y - p.y, 0.0, p.y - max_y});
            return (dx * dx + dy * dy) / (scale * scale);
        }
    };

    // Relative slack on the pruning bound so round-off never discards a tie.
    static constexpr double kSlack = 1.0 + 1e-9;

    std::size_t axis_cell(double v) const {
        const double t = std::floor((v + 1.0) / cell_size_);
        if (!(t > 0.0)) return 0;
        return std::min(static_cast<std::size_t>(t), nx_ - 1);
    }
    std::size_t cell_col(double x) const { return axis_cell(x); }
    std::size_t cell_row(double y) const { return std::min(axis_cell(y), ny_ - 1); }

    static constexpr std::size_t kBlock = 4;  // cells per block side

    struct Member {
        Point2 center;
        SymMat2 inv;
    };

    // Position of cell c in block-major member order.
    std::size_t key(std::size_t c) const {
        const std::size_t x = c % nx_, y = c / nx_;
        return ((y / kBlock) * nbx_ + x / kBlock) * kBlock * kBlock + (y % kBlock) * kBlock + x % kBlock;
    }

    double cell_size_ = 0.0;
    std::size_t nx_ = 0;
    std::size_t ny_ = 0;
    std::size_t nbx_ = 0;
    std::size_t nby_ = 0;
    std::size_t count_ = 0;
    double s_max_ = 0.0;
    std::vector<std::size_t> offsets_;
    std::vector<std::size_t> items_;
    std::vector<Member> members_;  // packed copies in items_ order
    std::vector<Node> blocks_;
};

/// One LR pixel per cell.
inline double default_cell_size(const ImageMeta& meta) {
    return 2.0 / static_cast<double>(std::max(meta.width, meta.height));
}

inline GaussianGridIndex build_index(const GaussianSet& gs, double cell_size) { return {gs, cell_size}; }

inline GaussianGridIndex build_index(const GaussianSet& gs) {
    const ImageMeta meta = gs.base().empty() ? ImageMeta{1, 1, 1, {}} : gs.base().meta();
    return {gs, default_cell_size(meta)};
}

inline SelectionResult top_k(const GaussianGridIndex& index, const GaussianSet& gs, Point2 p, std::size_t k) {
    return index.top_k(gs, p, k);
}

}  // namespace vbgs
