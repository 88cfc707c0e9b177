#pragma once

#include "fieldslam/camera.hpp"
#include "fieldslam/pose.hpp"
#include "fieldslam/types.hpp"

#include <optional>
#include <vector>

namespace fieldslam {

// One RGB-D observation. Color is [0,1] per channel (quantized to 8-bit
// source data), depth is planar depth in meters with 0 marking invalid.
struct Frame {
  int id = 0;
  double timestamp = 0.0;
  CameraIntrinsics intrinsics;
  std::vector<float> rgb;    // 3 * width * height, interleaved row-major
  std::vector<float> depth;  // width * height, meters, 0 = invalid
  std::optional<Pose> gt_pose;
  Pose pose;  // current estimate (camera-to-world)

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
  size_t pixel_count() const { return static_cast<size_t>(width()) * height(); }

  Vec3 color_at(int px, int py) const {
    const size_t i = 3 * (static_cast<size_t>(py) * width() + px);
    return Vec3(rgb[i], rgb[i + 1], rgb[i + 2]);
  }
  double depth_at(int px, int py) const {
    return depth[static_cast<size_t>(py) * width() + px];
  }
};

}  // namespace fieldslam
