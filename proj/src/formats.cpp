#include "trackcouple/formats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "io_util.hpp"
#include "text_table.hpp"
#include "trackcouple/error.hpp"

namespace trackcouple {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error(ErrorCode::kFormat, "cannot format number");
  return std::string(buf, ptr);
}

namespace detail {
std::string format_double(double v) { return trackcouple::format_double(v); }
}  // namespace detail

void write_poses(const std::filesystem::path& path, const std::vector<Pose>& poses) {
  auto out = detail::open_out(path, false);
  for (std::size_t t = 0; t < poses.size(); ++t) {
    out << t;
    const Mat3& r = poses[t].rotation();
    const Vec3& p = poses[t].translation();
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) out << ' ' << format_double(r(row, col));
      out << ' ' << format_double(p(row));
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::vector<Pose> read_poses(const std::filesystem::path& path) {
  detail::LineReader reader(path);
  std::vector<Pose> poses;
  while (auto fields = reader.next_fields()) {
    if (fields->size() != 13) reader.fail("expected 13 fields: t and a row-major 3x4 matrix");
    const int t = reader.to_int((*fields)[0]);
    if (t != static_cast<int>(poses.size())) reader.fail("frame indices must run 0..T-1 in order");
    Mat3 r;
    Vec3 p;
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) r(row, col) = reader.to_double((*fields)[1 + 4 * row + col]);
      p(row) = reader.to_double((*fields)[4 + 4 * row]);
    }
    if (!r.allFinite() || !p.allFinite()) reader.fail("non-finite pose entry");
    if ((r.transpose() * r - Mat3::Identity()).norm() > 1e-6 || r.determinant() < 0.0) {
      reader.fail("rotation block is not a rotation");
    }
    // Keep exactly what was written unless the block drifted past roundoff.
    const bool exact = (r.transpose() * r - Mat3::Identity()).norm() <= 1e-12;
    poses.emplace_back(exact ? r : nearest_rotation(r), p);
  }
  if (poses.empty()) reader.fail("no poses");
  return poses;
}

void write_pointmap_dir(const std::filesystem::path& dir, const std::vector<PointMapGrid>& grids) {
  std::filesystem::create_directories(dir);
  char name[32];
  for (std::size_t t = 0; t < grids.size(); ++t) {
    std::snprintf(name, sizeof(name), "%03zu.bin", t);
    write_pointmap(dir / name, grids[t]);
  }
}

std::vector<PointMapGrid> read_pointmap_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::kIo, "missing directory: " + dir.string());
  }
  std::vector<PointMapGrid> grids;
  char name[32];
  for (std::size_t t = 0;; ++t) {
    std::snprintf(name, sizeof(name), "%03zu.bin", t);
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) break;
    grids.push_back(read_pointmap(path));
  }
  if (grids.empty()) throw Error(ErrorCode::kIo, "missing file: " + (dir / "000.bin").string());
  for (std::size_t t = 1; t < grids.size(); ++t) {
    if (grids[t].width() != grids[0].width() || grids[t].height() != grids[0].height()) {
      throw Error(ErrorCode::kFormat, dir.string() + ": pointmaps differ in size");
    }
  }
  return grids;
}

}  // namespace trackcouple
