#include "certipose/cloud_io.hpp"

#include "certipose/errors.hpp"
#include "binary_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace certipose {
using detail::get;
using detail::put;

std::string format_real(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  char line[96];
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const auto p = cloud[i];
    std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << line;
  }
}

PointCloud read_xyz(std::istream& in) {
  std::vector<Vec3> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x() >> p.y() >> p.z())) throw ParseError("expected three reals", lineno);
    std::string extra;
    if (ls >> extra) throw ParseError("unexpected trailing field '" + extra + "'", lineno);
    pts.push_back(p);
  }
  return PointCloud(pts);
}

void write_binary(std::ostream& out, const PointCloud& cloud) {
  put<std::uint64_t>(out, static_cast<std::uint64_t>(cloud.size()));
  for (Eigen::Index i = 0; i < cloud.size(); ++i)
    for (int k = 0; k < 3; ++k) put<double>(out, cloud[i][k]);
}

PointCloud read_binary(std::istream& in) {
  const auto count = get<std::uint64_t>(in);
  if (count > (std::uint64_t{1} << 34)) throw ParseError("implausible point count in binary header");
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1 << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) p[k] = get<double>(in);
    pts.push_back(p);
  }
  return PointCloud(pts);
}

void write_file_atomically(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp);
    out << contents;
    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_xyz(const std::string& path, const PointCloud& cloud) {
  std::ostringstream os;
  write_xyz(os, cloud);
  write_file_atomically(path, os.str());
}

PointCloud load_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  return read_xyz(in);
}

void save_binary(const std::string& path, const PointCloud& cloud) {
  std::ostringstream os(std::ios::binary);
  write_binary(os, cloud);
  write_file_atomically(path, os.str());
}

PointCloud load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  return read_binary(in);
}

}  // namespace certipose
