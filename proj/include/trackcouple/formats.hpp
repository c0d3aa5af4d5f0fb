#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "trackcouple/pointmap.hpp"
#include "trackcouple/pose.hpp"

namespace trackcouple {

// Pose file: one row per frame, "t r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2"
// (the top 3x4 block of the camera-to-world matrix, row-major). Rows must be
// numbered 0..T-1 in order.
void write_poses(const std::filesystem::path& path, const std::vector<Pose>& poses);
std::vector<Pose> read_poses(const std::filesystem::path& path);

// Frames stored as <dir>/000.bin, 001.bin, ... in the pointmap format.
void write_pointmap_dir(const std::filesystem::path& dir, const std::vector<PointMapGrid>& grids);
std::vector<PointMapGrid> read_pointmap_dir(const std::filesystem::path& dir);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace trackcouple
