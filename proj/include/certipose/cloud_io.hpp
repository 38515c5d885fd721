#pragma once

#include "certipose/geometry.hpp"

#include <iosfwd>
#include <string>

namespace certipose {

/// Plain-text XYZ: one "x y z" line per point, 17 significant digits.
void write_xyz(std::ostream& out, const PointCloud& cloud);
PointCloud read_xyz(std::istream& in);

/// Little-endian stream: uint64 point count followed by x,y,z f64 triplets.
void write_binary(std::ostream& out, const PointCloud& cloud);
PointCloud read_binary(std::istream& in);

void save_xyz(const std::string& path, const PointCloud& cloud);
PointCloud load_xyz(const std::string& path);
void save_binary(const std::string& path, const PointCloud& cloud);
PointCloud load_binary(const std::string& path);

/// Writes to `path + ".tmp"` and renames into place.
void write_file_atomically(const std::string& path, const std::string& contents);

/// Shortest round-trip decimal rendering of a double.
std::string format_real(double v);

}  // namespace certipose
