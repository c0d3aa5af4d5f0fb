#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "trackcouple/pose.hpp"

namespace trackcouple {

struct Neighbor {
  std::size_t index = 0;
  double squared_distance = 0.0;
};

// Static 3D k-d tree over a borrowed point array; the array must outlive it.
// Ties in distance resolve to the lower point index.
class PointIndex {
 public:
  explicit PointIndex(std::span<const Vec3> points);

  std::size_t size() const { return points_.size(); }
  Neighbor nearest(const Vec3& query) const;
  // Up to k neighbors sorted by (distance, index).
  std::vector<Neighbor> k_nearest(const Vec3& query, std::size_t k) const;

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Vec3& query, std::size_t k,
              std::vector<Neighbor>& heap) const;

  std::span<const Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace trackcouple
