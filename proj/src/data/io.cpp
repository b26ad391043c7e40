#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "asmflow/data.hpp"
#include "asmflow/error.hpp"

namespace asmflow::data {

namespace fs = std::filesystem;
using nlohmann::json;

PointCloud read_xyz(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<double> v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const char* p = line.data();
    const char* end = p + line.size();
    double xyz[3];
    int got = 0;
    while (true) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p == end) break;
      if (got == 3) throw Error(Errc::ParseError, path.string() + ":" + std::to_string(lineno) + ": more than 3 values");
      const auto r = std::from_chars(p, end, xyz[got]);
      if (r.ec != std::errc{} || !std::isfinite(xyz[got]))
        throw Error(Errc::ParseError, path.string() + ":" + std::to_string(lineno) + ": not a number");
      p = r.ptr;
      ++got;
    }
    if (got == 0) continue;
    if (got != 3) throw Error(Errc::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected x y z");
    v.insert(v.end(), xyz, xyz + 3);
  }
  if (v.empty()) throw Error(Errc::ParseError, path.string() + ":" + std::to_string(lineno) + ": no points");
  PointCloud out(3, static_cast<Eigen::Index>(v.size() / 3));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

void write_xyz(const fs::path& path, const PointCloud& pts) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  char buf[32];
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const auto r = std::to_chars(buf, buf + sizeof buf, pts(a, i));
      out.write(buf, r.ptr - buf);
      out.put(a == 2 ? '\n' : ' ');
    }
  }
  if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

namespace {

json pose_json(const lie::RigidTransform& g) {
  const Eigen::Quaterniond q = g.r.quaternion();
  return {{"q", {q.w(), q.x(), q.y(), q.z()}}, {"t", {g.t.x(), g.t.y(), g.t.z()}}};
}

lie::RigidTransform pose_from_json(const json& j) {
  const auto q = j.at("q").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  if (q.size() != 4 || t.size() != 3) throw Error(Errc::ParseError, "pose needs q[4] and t[3]");
  return {lie::Rotation::from_quaternion(Eigen::Quaterniond(q[0], q[1], q[2], q[3])), Eigen::Vector3d(t[0], t[1], t[2])};
}

}  // namespace

void write_record(const fs::path& dir, const AssemblyRecord& rec) {
  if (rec.pieces.size() != rec.gt.size()) throw Error(Errc::LengthMismatch, "record poses differ from pieces");
  fs::create_directories(dir);
  json m;
  m["shape_id"] = rec.shape_id;
  m["split"] = rec.split;
  m["units"] = "unit";
  m["n_pieces"] = rec.pieces.size();
  m["pieces"] = json::array();
  m["poses"] = json::array();
  for (std::size_t i = 0; i < rec.pieces.size(); ++i) {
    const std::string name = "piece_" + std::to_string(i) + ".xyz";
    write_xyz(dir / name, rec.pieces.pieces[i]);
    m["pieces"].push_back(name);
    m["poses"].push_back(pose_json(rec.gt[i]));
  }
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << '\n';
  if (!out) throw Error(Errc::IoError, "cannot write manifest in " + dir.string());
}

AssemblyRecord read_record(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(Errc::IoError, "missing manifest in " + dir.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, (dir / "manifest.json").string() + ": " + e.what());
  }
  AssemblyRecord rec;
  try {
    rec.shape_id = m.value("shape_id", dir.filename().string());
    rec.split = m.value("split", std::string{});
    const std::size_t n = m.at("n_pieces").get<std::size_t>();
    const auto& files = m.at("pieces");
    const auto& poses = m.at("poses");
    if (files.size() != n || poses.size() != n)
      throw Error(Errc::LengthMismatch, "manifest lists " + std::to_string(files.size()) + " pieces and " +
                                            std::to_string(poses.size()) + " poses for n_pieces = " + std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) {
      rec.pieces.pieces.push_back(read_xyz(dir / files[i].get<std::string>()));
      rec.gt.parts.push_back(pose_from_json(poses[i]));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, (dir / "manifest.json").string() + ": " + e.what());
  }
  return rec;
}

void write_poses(const fs::path& path, const std::string& shape_id, const lie::GroupElementN& g) {
  json j;
  j["shape_id"] = shape_id;
  j["poses"] = json::array();
  for (const auto& p : g.parts) j["poses"].push_back(pose_json(p));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
}

lie::GroupElementN read_poses(const fs::path& path, std::string* shape_id) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  lie::GroupElementN g;
  try {
    const json j = json::parse(in);
    if (shape_id) *shape_id = j.value("shape_id", std::string{});
    for (const auto& p : j.at("poses")) g.parts.push_back(pose_from_json(p));
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, path.string() + ": " + e.what());
  }
  return g;
}

void write_dataset(const fs::path& root, const std::vector<AssemblyRecord>& recs) {
  for (const auto& r : recs) write_record(root / (r.split.empty() ? "train" : r.split) / r.shape_id, r);
}

std::vector<AssemblyRecord> read_split(const fs::path& root, const std::string& split) {
  const fs::path dir = root / split;
  if (!fs::is_directory(dir)) throw Error(Errc::IoError, "no split directory " + dir.string());
  std::vector<fs::path> shapes;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) shapes.push_back(e.path());
  std::sort(shapes.begin(), shapes.end());
  std::vector<AssemblyRecord> out;
  for (const auto& s : shapes) {
    out.push_back(read_record(s));
    if (out.back().split.empty()) out.back().split = split;
  }
  return out;
}

}  // namespace asmflow::data
