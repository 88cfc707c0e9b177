#pragma once

#include "fieldslam/bounds.hpp"
#include "fieldslam/mesh.hpp"
#include "fieldslam/types.hpp"

#include <functional>

namespace fieldslam {

using SdfFunction = std::function<double(const Vec3&)>;

// Marching cubes at iso-level 0 over a regular grid with the given cell size.
// The field is sampled once per grid vertex; vertices on shared edges are
// deduplicated so closed surfaces come out watertight away from the bounds.
// Triangles are oriented with normals pointing toward positive field values
// (free space). cell_of, when given, receives one flat cell index per
// triangle (for frustum culling against observed cells).
TriMesh marching_cubes(const SdfFunction& sdf, const SceneBounds& bounds, double cell,
                       std::vector<int64_t>* cell_of = nullptr);

}  // namespace fieldslam
