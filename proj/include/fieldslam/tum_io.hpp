#pragma once

#include "fieldslam/frame.hpp"
#include "fieldslam/types.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fieldslam {

// An RGB-D sequence loaded into memory. Timestamps are strictly increasing;
// depth is metric with 0 kept as the invalid marker.
struct SequenceSource {
  CameraIntrinsics intrinsics;
  std::vector<Frame> frames;
  bool has_groundtruth = false;
};

struct TumLoadOptions {
  double depth_scale = 5000.0;  // raw units per meter (TUM convention)
  double assoc_tol_s = 0.02;    // rgb/depth timestamp association tolerance
  // Fallback intrinsics when the directory has no intrinsics.txt.
  std::optional<CameraIntrinsics> intrinsics;
};

// Directory layout: rgb.txt / depth.txt listing "timestamp filename", '#'
// comments; optional groundtruth.txt with "t tx ty tz qx qy qz qw"; optional
// intrinsics.txt with "fx fy cx cy width height depth_scale". Image payloads
// are PNM (P6 color, 16-bit P5 depth).
SequenceSource load_tum_sequence(const std::filesystem::path& dir, const TumLoadOptions& opts);

// TUM trajectory line: "t tx ty tz qx qy qz qw". Values use shortest
// round-trip formatting, so serialize(parse(line)) == line for our output.
std::string serialize_pose_line(double timestamp, const Pose& pose);
std::pair<double, Pose> parse_pose_line(const std::string& line);

struct TimedPose {
  double timestamp;
  Pose pose;
};

void write_trajectory(const std::filesystem::path& path, const std::vector<TimedPose>& traj);
std::vector<TimedPose> read_trajectory(const std::filesystem::path& path);

void write_intrinsics(const std::filesystem::path& path, const CameraIntrinsics& k);
CameraIntrinsics read_intrinsics(const std::filesystem::path& path);

}  // namespace fieldslam
