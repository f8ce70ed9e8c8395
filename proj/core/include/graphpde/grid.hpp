#pragma once

#include <cstdint>
#include <vector>

#include "graphpde/dsl.hpp"

namespace gpde {

// Square sampling of the unit box: value at (x, y) = (ix/r, iy/r) is stored
// at v[iy*r + ix] (row index = y, column index = x). Single precision is the
// interchange format; numeric kernels widen to double internally.
struct GridField {
  int r = 0;
  std::vector<float> v;

  GridField() = default;
  explicit GridField(int R, float fill = 0.0f)
      : r(R), v(static_cast<size_t>(R) * R, fill) {}

  float& at(int iy, int ix) { return v[static_cast<size_t>(iy) * r + ix]; }
  float at(int iy, int ix) const { return v[static_cast<size_t>(iy) * r + ix]; }
  size_t size() const { return v.size(); }

  float min_value() const;
  float max_value() const;
  // max - min <= tol (empty fields are not constant)
  bool constant_within(double tol) const;
};

// Signed distance to the domain boundary, negative inside, so that the
// gradient of the field is the outward normal. Fully periodic squares have
// no boundary; callers must not ask for their SDF.
GridField sdf_domain(const Domain& d, int R);

// Unsigned distance to the boundary region a condition is attached to
// (union of square edges, or the disk rim).
GridField sdf_boundary(const Domain& d, const BoundaryRef& on, int R);

}  // namespace gpde
