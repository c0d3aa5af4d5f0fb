#include "trackcouple/tracks.hpp"

#include <cmath>
#include <string>

#include "io_util.hpp"
#include "text_table.hpp"
#include "trackcouple/error.hpp"

namespace trackcouple {

TrackSet TrackSet::zeros(int n_tracks, int n_frames) {
  TrackSet s;
  s.n_tracks = n_tracks;
  s.n_frames = n_frames;
  const auto n = static_cast<std::size_t>(n_tracks) * n_frames;
  s.points.assign(n, Vec3::Zero());
  s.visibility.assign(n, 1.0);
  s.query_pixels.assign(n, PixelLocation{});
  s.static_mask.assign(n, 1);
  return s;
}

void TrackSet::validate() const {
  const auto n = static_cast<std::size_t>(n_tracks) * n_frames;
  if (points.size() != n || visibility.size() != n || query_pixels.size() != n ||
      static_mask.size() != n) {
    throw Error(ErrorCode::kConfigInvalid, "track arrays do not match N x T");
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!(visibility[k] >= 0.0 && visibility[k] <= 1.0)) {
      throw Error(ErrorCode::kConfigInvalid, "visibility outside [0, 1] at entry " + std::to_string(k));
    }
    if (visibility[k] > 0.0 && !points[k].allFinite()) {
      throw Error(ErrorCode::kConfigInvalid, "non-finite visible track point at entry " + std::to_string(k));
    }
  }
}

Vec3 geometric_median(std::span<const Vec3> points) {
  if (points.empty()) return Vec3::Zero();
  Vec3 y = Vec3::Zero();
  for (const Vec3& p : points) y += p;
  y /= static_cast<double>(points.size());

  double spread = 0.0;
  for (const Vec3& p : points) spread = std::max(spread, (p - y).norm());
  if (spread == 0.0) return y;
  const double eps = 1e-14 * spread;

  for (int iter = 0; iter < 500; ++iter) {
    Vec3 num = Vec3::Zero();
    double den = 0.0;
    for (const Vec3& p : points) {
      const double d = (p - y).norm();
      if (d < eps) continue;  // Weiszfeld step is undefined at a data point
      num += p / d;
      den += 1.0 / d;
    }
    if (den == 0.0) break;
    const Vec3 next = num / den;
    const double step = (next - y).norm();
    y = next;
    if (step <= 1e-13 * spread) break;
  }
  return y;
}

std::vector<std::uint8_t> static_mask(const WorldTrackSet& gt, int anchor, double tau,
                                      const Pose& anchor_camera, StaticReference reference) {
  if (anchor < 0 || anchor >= gt.n_frames) {
    throw Error(ErrorCode::kConfigInvalid, "anchor frame out of range");
  }
  if (!(tau > 0.0)) throw Error(ErrorCode::kConfigInvalid, "tau_static must be positive");

  const Pose world_to_anchor = anchor_camera.inverse();
  std::vector<std::uint8_t> mask(gt.points.size(), 0);
  std::vector<Vec3> local(gt.n_frames);
  std::vector<Vec3> visible;
  for (int i = 0; i < gt.n_tracks; ++i) {
    visible.clear();
    for (int t = 0; t < gt.n_frames; ++t) {
      local[t] = world_to_anchor * gt.points[gt.index(i, t)];
      if (gt.visible(i, t)) visible.push_back(local[t]);
    }
    Vec3 ref;
    if (reference == StaticReference::kAnchorFrame) {
      ref = local[anchor];
    } else {
      ref = visible.empty() ? geometric_median(local) : geometric_median(visible);
    }
    for (int t = 0; t < gt.n_frames; ++t) {
      mask[gt.index(i, t)] = (local[t] - ref).norm() < tau ? 1 : 0;
    }
  }
  return mask;
}

Vec3 camera_frame_position(const Vec3& world_point, const Pose& c_t) {
  return c_t.inverse() * world_point;
}

std::vector<Vec3> anchor_targets(const WorldTrackSet& gt, const Pose& c_x) {
  const Pose world_to_anchor = c_x.inverse();
  std::vector<Vec3> out(gt.points.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = world_to_anchor * gt.points[k];
  return out;
}

namespace {

struct Header {
  int n_tracks = 0;
  int n_frames = 0;
};

Header read_header(detail::LineReader& reader) {
  auto fields = reader.next_fields();
  if (!fields || fields->size() != 2) reader.fail("expected header 'N T'");
  Header h{reader.to_int((*fields)[0]), reader.to_int((*fields)[1])};
  if (h.n_tracks <= 0 || h.n_frames <= 0) reader.fail("N and T must be positive");
  return h;
}

// Reads the (i, t) prefix of a row and checks it against the declared shape
// and against entries already seen.
std::size_t read_row_index(detail::LineReader& reader, const std::vector<std::string>& fields,
                           const Header& h, std::vector<bool>& seen) {
  const int i = reader.to_int(fields[0]);
  const int t = reader.to_int(fields[1]);
  if (i < 0 || i >= h.n_tracks || t < 0 || t >= h.n_frames) reader.fail("(i, t) outside N x T");
  const auto k = static_cast<std::size_t>(i) * h.n_frames + t;
  if (seen[k]) reader.fail("duplicate row for (i, t)");
  seen[k] = true;
  return k;
}

}  // namespace

void write_tracks(const std::filesystem::path& path, const TrackSet& tracks) {
  auto out = detail::open_out(path, /*binary=*/false);
  out << tracks.n_tracks << ' ' << tracks.n_frames << '\n';
  for (int i = 0; i < tracks.n_tracks; ++i) {
    for (int t = 0; t < tracks.n_frames; ++t) {
      const std::size_t k = tracks.index(i, t);
      const Vec3& p = tracks.points[k];
      out << i << ' ' << t << ' ' << detail::format_double(p.x()) << ' '
          << detail::format_double(p.y()) << ' ' << detail::format_double(p.z()) << ' '
          << detail::format_double(tracks.visibility[k]) << ' '
          << detail::format_double(tracks.query_pixels[k].x) << ' '
          << detail::format_double(tracks.query_pixels[k].y) << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

TrackSet read_tracks(const std::filesystem::path& path) {
  detail::LineReader reader(path);
  const Header h = read_header(reader);
  TrackSet s = TrackSet::zeros(h.n_tracks, h.n_frames);
  std::vector<bool> seen(s.size(), false);
  while (auto fields = reader.next_fields()) {
    if (fields->size() != 8) reader.fail("expected 8 fields: i t x y z visibility px py");
    const std::size_t k = read_row_index(reader, *fields, h, seen);
    s.points[k] = Vec3(reader.to_double((*fields)[2]), reader.to_double((*fields)[3]),
                       reader.to_double((*fields)[4]));
    s.visibility[k] = reader.to_double((*fields)[5]);
    if (!(s.visibility[k] >= 0.0 && s.visibility[k] <= 1.0)) reader.fail("visibility outside [0, 1]");
    s.query_pixels[k] = PixelLocation{reader.to_double((*fields)[6]), reader.to_double((*fields)[7])};
  }
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (!seen[k]) reader.fail("missing row for entry " + std::to_string(k));
  }
  return s;
}

void write_world_tracks(const std::filesystem::path& path, const WorldTrackSet& tracks) {
  TrackSet as_rows = TrackSet::zeros(tracks.n_tracks, tracks.n_frames);
  as_rows.points = tracks.points;
  if (!tracks.visibility.empty()) as_rows.visibility = tracks.visibility;
  write_tracks(path, as_rows);
}

WorldTrackSet read_world_tracks(const std::filesystem::path& path) {
  TrackSet rows = read_tracks(path);
  WorldTrackSet out;
  out.n_tracks = rows.n_tracks;
  out.n_frames = rows.n_frames;
  out.points = std::move(rows.points);
  out.visibility = std::move(rows.visibility);
  return out;
}

void write_static_mask(const std::filesystem::path& path, int n_tracks, int n_frames,
                       std::span<const std::uint8_t> mask) {
  auto out = detail::open_out(path, /*binary=*/false);
  out << n_tracks << ' ' << n_frames << '\n';
  for (int i = 0; i < n_tracks; ++i) {
    for (int t = 0; t < n_frames; ++t) {
      out << (mask[static_cast<std::size_t>(i) * n_frames + t] ? '1' : '0');
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

std::vector<std::uint8_t> read_static_mask(const std::filesystem::path& path, int& n_tracks,
                                           int& n_frames) {
  detail::LineReader reader(path);
  const Header h = read_header(reader);
  std::vector<std::uint8_t> mask;
  mask.reserve(static_cast<std::size_t>(h.n_tracks) * h.n_frames);
  for (int i = 0; i < h.n_tracks; ++i) {
    auto fields = reader.next_fields();
    if (!fields || fields->size() != 1 || (*fields)[0].size() != static_cast<std::size_t>(h.n_frames)) {
      reader.fail("expected a row of T mask characters");
    }
    for (char c : (*fields)[0]) {
      if (c != '0' && c != '1') reader.fail("mask characters must be 0 or 1");
      mask.push_back(c == '1' ? 1 : 0);
    }
  }
  if (reader.next_fields()) reader.fail("extra rows after N mask rows");
  n_tracks = h.n_tracks;
  n_frames = h.n_frames;
  return mask;
}

}  // namespace trackcouple
