#include "fieldslam/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fieldslam {

double TriMesh::surface_area() const {
  double area = 0.0;
  for (const auto& t : tris) {
    const Vec3& a = vertices[static_cast<size_t>(t[0])];
    const Vec3& b = vertices[static_cast<size_t>(t[1])];
    const Vec3& c = vertices[static_cast<size_t>(t[2])];
    area += 0.5 * (b - a).cross(c - a).norm();
  }
  return area;
}

void write_ply(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "element face " << mesh.tris.size() << "\n";
  out << "property list uchar int vertex_indices\n";
  out << "end_header\n";
  out.precision(17);
  for (const Vec3& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.tris) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

TriMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  size_t n_vertices = 0, n_faces = 0;
  bool ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (tok == "element") {
      std::string what;
      size_t count;
      ls >> what >> count;
      if (what == "vertex") n_vertices = count;
      if (what == "face") n_faces = count;
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!ascii) throw IoError(path.string() + ": only ascii PLY is supported");
  TriMesh mesh;
  mesh.vertices.resize(n_vertices);
  for (size_t i = 0; i < n_vertices; ++i) {
    if (!(in >> mesh.vertices[i].x() >> mesh.vertices[i].y() >> mesh.vertices[i].z())) {
      throw IoError(path.string() + ": truncated vertex list");
    }
  }
  mesh.tris.resize(n_faces);
  for (size_t i = 0; i < n_faces; ++i) {
    int n;
    if (!(in >> n) || n != 3) throw IoError(path.string() + ": only triangle faces supported");
    in >> mesh.tris[i][0] >> mesh.tris[i][1] >> mesh.tris[i][2];
  }
  return mesh;
}

std::vector<Vec3> sample_mesh_surface(const TriMesh& mesh, int count, Rng& rng) {
  std::vector<double> cum;
  cum.reserve(mesh.tris.size());
  double acc = 0.0;
  for (const auto& t : mesh.tris) {
    const Vec3& a = mesh.vertices[static_cast<size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<size_t>(t[2])];
    acc += 0.5 * (b - a).cross(c - a).norm();
    cum.push_back(acc);
  }
  std::vector<Vec3> out;
  if (acc <= 0.0 || mesh.tris.empty()) return out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform01() * acc;
    const size_t ti = static_cast<size_t>(
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    const auto& t = mesh.tris[std::min(ti, mesh.tris.size() - 1)];
    const Vec3& a = mesh.vertices[static_cast<size_t>(t[0])];
    const Vec3& b = mesh.vertices[static_cast<size_t>(t[1])];
    const Vec3& c = mesh.vertices[static_cast<size_t>(t[2])];
    double r1 = rng.uniform01(), r2 = rng.uniform01();
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    out.push_back(a + r1 * (b - a) + r2 * (c - a));
  }
  return out;
}

TriMesh frustum_cull(const TriMesh& mesh, const std::vector<Pose>& poses,
                     const CameraIntrinsics& k, double max_depth) {
  std::vector<Pose> inv;
  inv.reserve(poses.size());
  for (const Pose& p : poses) inv.push_back(p.inverse());
  TriMesh out;
  std::vector<int> vertex_map(mesh.vertices.size(), -1);
  for (const auto& t : mesh.tris) {
    const Vec3 centroid = (mesh.vertices[static_cast<size_t>(t[0])] +
                           mesh.vertices[static_cast<size_t>(t[1])] +
                           mesh.vertices[static_cast<size_t>(t[2])]) /
                          3.0;
    bool seen = false;
    for (const Pose& w2c : inv) {
      const Vec3 pc = w2c.apply(centroid);
      if (pc.z() <= 0.0 || pc.z() > max_depth) continue;
      const double u = k.fx * pc.x() / pc.z() + k.cx;
      const double v = k.fy * pc.y() / pc.z() + k.cy;
      if (u >= 0.0 && u < k.width && v >= 0.0 && v < k.height) {
        seen = true;
        break;
      }
    }
    if (!seen) continue;
    Eigen::Vector3i nt;
    for (int i = 0; i < 3; ++i) {
      const int vi = t[i];
      if (vertex_map[static_cast<size_t>(vi)] < 0) {
        vertex_map[static_cast<size_t>(vi)] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[static_cast<size_t>(vi)]);
      }
      nt[i] = vertex_map[static_cast<size_t>(vi)];
    }
    out.tris.push_back(nt);
  }
  return out;
}

// ---- KdTree3 ------------------------------------------------------------------

KdTree3::KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  for (size_t i = 0; i < points_.size(); ++i) order_[i] = static_cast<int>(i);
  nodes_.reserve(points_.size());
  root_ = build(0, static_cast<int>(points_.size()), 0);
}

int KdTree3::build(int begin, int end, int depth) {
  if (begin >= end) return -1;
  const int axis = depth % 3;
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     return points_[static_cast<size_t>(a)][axis] <
                            points_[static_cast<size_t>(b)][axis];
                   });
  Node node;
  node.point = order_[static_cast<size_t>(mid)];
  node.axis = axis;
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  nodes_[static_cast<size_t>(self)].left = build(begin, mid, depth + 1);
  nodes_[static_cast<size_t>(self)].right = build(mid + 1, end, depth + 1);
  return self;
}

void KdTree3::search(int node, const Vec3& q, double& best_sq) const {
  if (node < 0) return;
  const Node& n = nodes_[static_cast<size_t>(node)];
  const Vec3& p = points_[static_cast<size_t>(n.point)];
  best_sq = std::min(best_sq, (p - q).squaredNorm());
  const double delta = q[n.axis] - p[n.axis];
  const int near = delta < 0.0 ? n.left : n.right;
  const int far = delta < 0.0 ? n.right : n.left;
  search(near, q, best_sq);
  if (delta * delta < best_sq) search(far, q, best_sq);
}

double KdTree3::nearest_distance(const Vec3& query) const {
  if (points_.empty()) return std::numeric_limits<double>::infinity();
  double best_sq = std::numeric_limits<double>::infinity();
  search(root_, query, best_sq);
  return std::sqrt(best_sq);
}

}  // namespace fieldslam
