#include "trackcouple/pointmap.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "io_util.hpp"
#include "trackcouple/error.hpp"

namespace trackcouple {
namespace {

constexpr double kDomainSlack = 1e-9;

// Lower corner index and fractional offset along one axis of length n.
void axis_cell(double u, int n, int& lo, double& frac) {
  if (n == 1) {
    lo = 0;
    frac = 0.0;
    return;
  }
  const double clamped = std::clamp(u, 0.0, static_cast<double>(n - 1));
  lo = std::min(static_cast<int>(std::floor(clamped)), n - 2);
  frac = clamped - lo;
}

}  // namespace

PointMapGrid::PointMapGrid(int width, int height, int frame_index)
    : width_(width), height_(height), frame_index_(frame_index) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kConfigInvalid, "pointmap dimensions must be positive");
  }
  values_.assign(3 * pixel_count(), 0.0);
}

void PointMapGrid::set(int x, int y, const Vec3& p) {
  const std::size_t k = 3 * (static_cast<std::size_t>(y) * width_ + x);
  values_[k] = p.x();
  values_[k + 1] = p.y();
  values_[k + 2] = p.z();
}

BilinearStencil bilinear_stencil(int width, int height, PixelLocation u) {
  if (!(u.x >= -kDomainSlack && u.x <= width - 1 + kDomainSlack && u.y >= -kDomainSlack &&
        u.y <= height - 1 + kDomainSlack)) {
    std::ostringstream msg;
    msg << "pixel (" << u.x << ", " << u.y << ") outside [0, " << width - 1 << "] x [0, "
        << height - 1 << "]";
    throw Error(ErrorCode::kOutOfDomain, msg.str());
  }
  int x0;
  int y0;
  double fx;
  double fy;
  axis_cell(u.x, width, x0, fx);
  axis_cell(u.y, height, y0, fy);
  const int x1 = width == 1 ? x0 : x0 + 1;
  const int y1 = height == 1 ? y0 : y0 + 1;
  const double gx = width == 1 ? 0.0 : 1.0;
  const double gy = height == 1 ? 0.0 : 1.0;

  BilinearStencil s;
  const auto w = static_cast<std::size_t>(width);
  s.pixel = {y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1};
  s.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  s.d_weight_dx = {-gx * (1 - fy), gx * (1 - fy), -gx * fy, gx * fy};
  s.d_weight_dy = {-gy * (1 - fx), -gy * fx, gy * (1 - fx), gy * fx};
  return s;
}

namespace {

Vec3 corner(const GridView& grid, std::size_t pixel) {
  const std::size_t k = 3 * pixel;
  return Vec3(grid.values[k], grid.values[k + 1], grid.values[k + 2]);
}

}  // namespace

Vec3 sample(const GridView& grid, PixelLocation u) {
  const BilinearStencil s = bilinear_stencil(grid.width, grid.height, u);
  Vec3 out = Vec3::Zero();
  for (int c = 0; c < 4; ++c) out += s.weight[c] * corner(grid, s.pixel[c]);
  return out;
}

Vec3 sample(const PointMapGrid& grid, PixelLocation u) { return sample(grid.view(), u); }

SampleGradient sample_with_grad(const GridView& grid, PixelLocation u) {
  SampleGradient g;
  g.stencil = bilinear_stencil(grid.width, grid.height, u);
  g.value.setZero();
  g.d_pixel.setZero();
  for (int c = 0; c < 4; ++c) {
    const Vec3 p = corner(grid, g.stencil.pixel[c]);
    g.value += g.stencil.weight[c] * p;
    g.d_pixel.col(0) += g.stencil.d_weight_dx[c] * p;
    g.d_pixel.col(1) += g.stencil.d_weight_dy[c] * p;
  }
  return g;
}

SampleGradient sample_with_grad(const PointMapGrid& grid, PixelLocation u) {
  return sample_with_grad(grid.view(), u);
}

Vec3 init_query(const PointMapGrid& first_frame, PixelLocation q) { return sample(first_frame, q); }

void write_pointmap(const std::filesystem::path& path, const PointMapGrid& grid) {
  auto out = detail::open_out(path, /*binary=*/true);
  detail::put_i32(out, grid.height());
  detail::put_i32(out, grid.width());
  detail::put_i32(out, grid.frame_index());
  for (double v : grid.values()) detail::put_f64(out, v);
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

PointMapGrid read_pointmap(const std::filesystem::path& path) {
  auto in = detail::open_in(path, /*binary=*/true);
  std::int32_t h = 0;
  std::int32_t w = 0;
  std::int32_t frame = 0;
  if (!detail::get_i32(in, h) || !detail::get_i32(in, w) || !detail::get_i32(in, frame)) {
    detail::format_error(path, 1, "truncated pointmap header");
  }
  if (h <= 0 || w <= 0) detail::format_error(path, 1, "non-positive pointmap dimensions");
  PointMapGrid grid(w, h, frame);
  auto values = grid.values();
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!detail::get_f64(in, values[k])) {
      detail::format_error(path, 1, "truncated pointmap payload at value " + std::to_string(k));
    }
    if (!std::isfinite(values[k])) {
      detail::format_error(path, 1, "non-finite pointmap value at index " + std::to_string(k));
    }
  }
  char extra;
  if (in.read(&extra, 1)) detail::format_error(path, 1, "trailing bytes after pointmap payload");
  return grid;
}

}  // namespace trackcouple
