#pragma once

#include "fieldslam/camera.hpp"
#include "fieldslam/pose.hpp"
#include "fieldslam/rng.hpp"
#include "fieldslam/types.hpp"

#include <filesystem>
#include <vector>

namespace fieldslam {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> tris;

  bool empty() const { return tris.empty(); }
  double surface_area() const;
};

// ASCII PLY with a documented minimal header (element vertex x y z, element
// face with vertex_indices lists).
void write_ply(const std::filesystem::path& path, const TriMesh& mesh);
TriMesh read_ply(const std::filesystem::path& path);

// Area-weighted uniform surface samples.
std::vector<Vec3> sample_mesh_surface(const TriMesh& mesh, int count, Rng& rng);

// Keeps triangles whose centroid falls inside at least one camera frustum
// (in front of the camera, inside the image, nearer than max_depth).
TriMesh frustum_cull(const TriMesh& mesh, const std::vector<Pose>& poses,
                     const CameraIntrinsics& k, double max_depth);

// Exact nearest-neighbor index over a fixed point set (median-split kd-tree).
class KdTree3 {
 public:
  explicit KdTree3(std::vector<Vec3> points);
  double nearest_distance(const Vec3& query) const;

 private:
  struct Node {
    int left = -1, right = -1;
    int point = -1;
    int axis = 0;
  };
  int build(int begin, int end, int depth);
  void search(int node, const Vec3& q, double& best_sq) const;
  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace fieldslam
