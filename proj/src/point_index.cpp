#include "trackcouple/point_index.hpp"

#include <algorithm>
#include <numeric>

namespace trackcouple {
namespace {

constexpr std::size_t kLeafSize = 8;

bool closer(const Neighbor& a, const Neighbor& b) {
  if (a.squared_distance != b.squared_distance) return a.squared_distance < b.squared_distance;
  return a.index < b.index;
}

}  // namespace

PointIndex::PointIndex(std::span<const Vec3> points) : points_(points) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 1);
    build(0, points_.size());
  }
}

std::size_t PointIndex::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as a leaf

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void PointIndex::search(std::size_t node_id, const Vec3& query, std::size_t k,
                        std::vector<Neighbor>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const Neighbor cand{idx, (points_[idx] - query).squaredNorm()};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }
  const double diff = query[node.axis] - node.split;
  const std::size_t near = diff < 0 ? node.left : node.right;
  const std::size_t far = diff < 0 ? node.right : node.left;
  search(near, query, k, heap);
  // <= keeps equal-distance candidates reachable for the index tie-break.
  if (heap.size() < k || diff * diff <= heap.front().squared_distance) {
    search(far, query, k, heap);
  }
}

Neighbor PointIndex::nearest(const Vec3& query) const {
  auto result = k_nearest(query, 1);
  return result.empty() ? Neighbor{} : result.front();
}

std::vector<Neighbor> PointIndex::k_nearest(const Vec3& query, std::size_t k) const {
  std::vector<Neighbor> heap;
  if (points_.empty() || k == 0) return heap;
  heap.reserve(k);
  search(0, query, std::min(k, points_.size()), heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

}  // namespace trackcouple
