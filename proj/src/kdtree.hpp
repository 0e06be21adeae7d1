#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace railseg::detail {

// Static 3-D k-d tree over an externally owned point array.
class KdTree {
public:
    explicit KdTree(std::span<const Eigen::Vector3d> points) : points_(points) {
        order_.resize(points.size());
        for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
        nodes_.reserve(points.size());
        if (!order_.empty()) build(0, order_.size(), 0);
    }

    // Squared distances of the k nearest points to query, excluding index `skip`,
    // in ascending order.
    std::vector<double> nearest_sq(const Eigen::Vector3d& query, std::size_t k, std::size_t skip) const {
        Heap heap;
        if (!nodes_.empty() && k > 0) search(0, query, k, skip, heap);
        std::vector<double> out(heap.size());
        for (std::size_t i = out.size(); i-- > 0;) {
            out[i] = heap.top();
            heap.pop();
        }
        return out;
    }

private:
    using Heap = std::priority_queue<double>;

    struct Node {
        std::uint32_t point;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::uint8_t axis = 0;
    };

    std::int32_t build(std::size_t begin, std::size_t end, int depth) {
        if (begin >= end) return -1;
        const int axis = depth % 3;
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
        const auto index = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back({order_[mid], -1, -1, static_cast<std::uint8_t>(axis)});
        const auto left = build(begin, mid, depth + 1);
        const auto right = build(mid + 1, end, depth + 1);
        nodes_[index].left = left;
        nodes_[index].right = right;
        return index;
    }

    void search(std::int32_t node_index, const Eigen::Vector3d& q, std::size_t k, std::size_t skip,
                Heap& heap) const {
        const Node& node = nodes_[node_index];
        const auto& p = points_[node.point];
        if (node.point != skip) {
            const double d = (p - q).squaredNorm();
            if (heap.size() < k) {
                heap.push(d);
            } else if (d < heap.top()) {
                heap.pop();
                heap.push(d);
            }
        }
        const double delta = q[node.axis] - p[node.axis];
        const auto near = delta < 0 ? node.left : node.right;
        const auto far = delta < 0 ? node.right : node.left;
        if (near >= 0) search(near, q, k, skip, heap);
        if (far >= 0 && (heap.size() < k || delta * delta <= heap.top())) search(far, q, k, skip, heap);
    }

    std::span<const Eigen::Vector3d> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

}  // namespace railseg::detail
