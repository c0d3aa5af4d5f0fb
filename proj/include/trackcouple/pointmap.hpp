#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "trackcouple/pose.hpp"

namespace trackcouple {

// Continuous pixel coordinates; x runs along the width.
struct PixelLocation {
  double x = 0.0;
  double y = 0.0;
};

// Borrowed row-major H x W x 3 array.
struct GridView {
  int width = 0;
  int height = 0;
  std::span<const double> values;

  Vec3 at(int x, int y) const {
    const std::size_t k = 3 * (static_cast<std::size_t>(y) * width + x);
    return Vec3(values[k], values[k + 1], values[k + 2]);
  }
};

// Pixel-aligned pointmap of one frame, points in that frame's camera
// coordinates. Domain is [0, W-1] x [0, H-1].
class PointMapGrid {
 public:
  PointMapGrid() = default;
  PointMapGrid(int width, int height, int frame_index);

  int width() const { return width_; }
  int height() const { return height_; }
  int frame_index() const { return frame_index_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  Vec3 at(int x, int y) const { return view().at(x, y); }
  void set(int x, int y, const Vec3& p);

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  GridView view() const { return GridView{width_, height_, values_}; }

 private:
  int width_ = 0;
  int height_ = 0;
  int frame_index_ = 0;
  std::vector<double> values_;
};

// Bilinear stencil: four corner pixels with weights summing to one, plus the
// weight derivatives along x and y.
struct BilinearStencil {
  std::array<std::size_t, 4> pixel{};  // y * W + x
  std::array<double, 4> weight{};
  std::array<double, 4> d_weight_dx{};
  std::array<double, 4> d_weight_dy{};
};

// Throws kOutOfDomain when u lies outside the domain by more than 1e-9.
// Corner indices are clamped, so a sample on the last row or column uses the
// cell just inside the domain.
BilinearStencil bilinear_stencil(int width, int height, PixelLocation u);

Vec3 sample(const GridView& grid, PixelLocation u);
Vec3 sample(const PointMapGrid& grid, PixelLocation u);

struct SampleGradient {
  Vec3 value;
  BilinearStencil stencil;  // d value / d corner = weight * I
  Eigen::Matrix<double, 3, 2> d_pixel;  // d value / d (x, y)
};

SampleGradient sample_with_grad(const GridView& grid, PixelLocation u);
SampleGradient sample_with_grad(const PointMapGrid& grid, PixelLocation u);

// Initial 3D query point: the first-frame pointmap sampled at the query pixel.
Vec3 init_query(const PointMapGrid& first_frame, PixelLocation q);

// Binary pointmap file: int32 height, width, frame_index, then H*W*3 float64,
// all little-endian, row-major with xyz innermost.
void write_pointmap(const std::filesystem::path& path, const PointMapGrid& grid);
PointMapGrid read_pointmap(const std::filesystem::path& path);

}  // namespace trackcouple
