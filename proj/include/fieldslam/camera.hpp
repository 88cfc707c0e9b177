#pragma once

#include "fieldslam/types.hpp"

namespace fieldslam {

// Pinhole camera. Optical axis is +z in the camera frame, x right, y down.
struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  double depth_scale = 5000.0;  // raw depth units per meter

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("intrinsics: fx, fy must be > 0");
    if (!(cx > 0.0 && cx < width)) throw ConfigError("intrinsics: cx must be inside the image");
    if (!(cy > 0.0 && cy < height)) throw ConfigError("intrinsics: cy must be inside the image");
    if (!(depth_scale > 0.0)) throw ConfigError("intrinsics: depth_scale must be > 0");
  }

  // Camera-frame back-projection of pixel (u, v), z-component 1.
  Vec3 pixel_dir(double u, double v) const {
    return Vec3((u - cx) / fx, (v - cy) / fy, 1.0);
  }
};

}  // namespace fieldslam
