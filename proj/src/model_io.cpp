#include "certipose/cloud_io.hpp"
#include "certipose/errors.hpp"
#include "certipose/models.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace certipose {
namespace {

constexpr const char* kModelMagic = "certipose-model";
constexpr const char* kSceneMagic = "certipose-scene";

std::string real17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_points(std::ostream& out, const Eigen::Matrix3Xd& pts) {
  for (Eigen::Index i = 0; i < pts.cols(); ++i)
    out << real17(pts(0, i)) << ' ' << real17(pts(1, i)) << ' ' << real17(pts(2, i)) << '\n';
}

// Line-oriented reader that skips blank lines and '#' comments and reports
// line numbers in its errors.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++lineno_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') continue;
      return true;
    }
    return false;
  }

  std::string require(const std::string& what) {
    std::string line;
    if (!next(line)) throw ParseError("unexpected end of file, expected " + what, lineno_ + 1);
    return line;
  }

  /// Reads "<keyword> <count>" and returns the count.
  long header(const std::string& keyword) {
    std::istringstream ls(require("section '" + keyword + "'"));
    std::string word;
    long count = -1;
    if (!(ls >> word) || word != keyword) throw ParseError("expected section '" + keyword + "'", lineno_);
    if (!(ls >> count) || count < 0) throw ParseError("section '" + keyword + "' needs a nonnegative count", lineno_);
    return count;
  }

  std::vector<double> reals(const std::string& what, std::size_t expected) {
    std::istringstream ls(require(what));
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (!ls.eof()) throw ParseError("malformed number in " + what, lineno_);
    if (v.size() != expected)
      throw ParseError(what + ": expected " + std::to_string(expected) + " reals, found " + std::to_string(v.size()),
                       lineno_);
    return v;
  }

  Eigen::Matrix3Xd points(long count, const std::string& what) {
    std::vector<Vec3> pts;
    for (long i = 0; i < count; ++i) {
      const auto v = reals(what + " row " + std::to_string(i), 3);
      pts.emplace_back(v[0], v[1], v[2]);
    }
    Eigen::Matrix3Xd out(3, count);
    for (long i = 0; i < count; ++i) out.col(i) = pts[static_cast<std::size_t>(i)];
    return out;
  }

  double keyed_real(const std::string& keyword) {
    std::istringstream ls(require("'" + keyword + "'"));
    std::string word;
    double v;
    if (!(ls >> word) || word != keyword) throw ParseError("expected '" + keyword + "'", lineno_);
    if (!(ls >> v)) {
      // value may sit on its own line
      const auto r = reals(keyword, 1);
      return r[0];
    }
    return v;
  }

  void magic(const char* expected) {
    std::istringstream ls(require(std::string("header '") + expected + "'"));
    std::string word;
    int version = 0;
    if (!(ls >> word) || word != expected || !(ls >> version) || version != 1)
      throw ParseError(std::string("bad header, expected '") + expected + " 1'", lineno_);
  }

  int lineno() const { return lineno_; }

 private:
  std::istream& in_;
  int lineno_ = 0;
};

}  // namespace

void write_model(std::ostream& out, const ObjectModel& model) {
  out << kModelMagic << " 1\n";
  out << "name " << model.name() << '\n';
  out << "points " << model.dense().size() << '\n';
  write_points(out, model.dense().matrix());
  out << "keypoints " << model.keypoints().cols() << '\n';
  write_points(out, model.keypoints());
  out << "diameter\n" << real17(model.diameter()) << '\n';
  out << "epsilon_s\n" << real17(model.sampling_slack()) << '\n';
  out << "indicator_sets " << model.indicator_sets().size() << '\n';
  for (const auto& set : model.indicator_sets()) {
    for (std::size_t i = 0; i < set.size(); ++i) out << (i ? " " : "") << set[i];
    out << '\n';
  }
}

ObjectModel read_model(std::istream& in) {
  LineReader r(in);
  r.magic(kModelMagic);
  std::string name;
  {
    std::istringstream ls(r.require("'name'"));
    std::string word;
    if (!(ls >> word) || word != "name" || !(ls >> name)) throw ParseError("expected 'name <identifier>'", r.lineno());
  }
  const long m = r.header("points");
  Eigen::Matrix3Xd dense = r.points(m, "points");
  const long n = r.header("keypoints");
  Eigen::Matrix3Xd kp = r.points(n, "keypoints");
  const double diameter = r.keyed_real("diameter");
  const double slack = r.keyed_real("epsilon_s");
  const long g = r.header("indicator_sets");
  std::vector<IndicatorSet> sets;
  for (long l = 0; l < g; ++l) {
    std::istringstream ls(r.require("indicator set " + std::to_string(l)));
    IndicatorSet set;
    long idx;
    while (ls >> idx) set.push_back(static_cast<int>(idx));
    if (!ls.eof()) throw ParseError("indicator set entries must be integers", r.lineno());
    sets.push_back(std::move(set));
  }
  std::string extra;
  if (r.next(extra)) throw ParseError("trailing content after indicator sets", r.lineno());
  return ObjectModel(name, PointCloud(std::move(dense)), std::move(kp), diameter, std::move(sets), slack);
}

void save_model(const ObjectModel& model, const std::string& path) {
  std::ostringstream os;
  write_model(os, model);
  write_file_atomically(path, os.str());
}

ObjectModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file: " + path);
  return read_model(in);
}

void write_scene(std::ostream& out, const Scene& scene) {
  out << kSceneMagic << " 1\n";
  const Vec3& v = scene.view_direction;
  out << "view " << real17(v.x()) << ' ' << real17(v.y()) << ' ' << real17(v.z()) << '\n';
  out << "epsilon_w " << real17(scene.noise_bound) << '\n';
  out << "pose";
  const Mat3& rot = scene.gt_pose.rotation();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out << ' ' << real17(rot(i, j));
  for (int i = 0; i < 3; ++i) out << ' ' << real17(scene.gt_pose.translation()[i]);
  out << '\n';
  if (scene.gt_keypoints.cols() > 0) {
    out << "keypoints " << scene.gt_keypoints.cols() << '\n';
    write_points(out, scene.gt_keypoints);
  }
  out << "points " << scene.input.size() << '\n';
  write_points(out, scene.input.matrix());
}

Scene read_scene(std::istream& in) {
  LineReader r(in);
  r.magic(kSceneMagic);
  Scene scene;
  auto keyed = [&](const std::string& key, std::size_t count) {
    std::istringstream ls(r.require("'" + key + "'"));
    std::string word;
    if (!(ls >> word) || word != key) throw ParseError("expected '" + key + "'", r.lineno());
    std::vector<double> v;
    double x;
    while (ls >> x) v.push_back(x);
    if (!ls.eof() || v.size() != count)
      throw ParseError("'" + key + "' needs " + std::to_string(count) + " reals", r.lineno());
    return v;
  };
  const auto view = keyed("view", 3);
  scene.view_direction = Vec3(view[0], view[1], view[2]);
  scene.noise_bound = keyed("epsilon_w", 1)[0];
  const auto pose = keyed("pose", 12);
  Mat3 rot;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rot(i, j) = pose[static_cast<std::size_t>(3 * i + j)];
  scene.gt_pose = RigidTransform(rot, Vec3(pose[9], pose[10], pose[11]));

  std::string line = r.require("'points' section");
  std::istringstream ls(line);
  std::string word;
  long count = -1;
  ls >> word >> count;
  if (word == "keypoints") {
    if (count < 0) throw ParseError("'keypoints' needs a count", r.lineno());
    scene.gt_keypoints = r.points(count, "keypoints");
    const long n = r.header("points");
    scene.input = PointCloud(r.points(n, "points"));
  } else if (word == "points" && count >= 0) {
    scene.input = PointCloud(r.points(count, "points"));
  } else {
    throw ParseError("expected 'keypoints' or 'points' section", r.lineno());
  }
  std::string extra;
  if (r.next(extra)) throw ParseError("trailing content after points", r.lineno());
  if (scene.input.empty()) throw InvariantError("scene has no points");
  return scene;
}

void save_scene(const Scene& scene, const std::string& path) {
  std::ostringstream os;
  write_scene(os, scene);
  write_file_atomically(path, os.str());
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scene file: " + path);
  return read_scene(in);
}

}  // namespace certipose
