#include "graphpde/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gpde {

float GridField::min_value() const {
  return *std::min_element(v.begin(), v.end());
}
float GridField::max_value() const {
  return *std::max_element(v.begin(), v.end());
}
bool GridField::constant_within(double tol) const {
  if (v.empty()) return false;
  return double(max_value()) - double(min_value()) <= tol;
}

GridField sdf_domain(const Domain& d, int R) {
  if (d.fully_periodic())
    throw std::invalid_argument("fully periodic domain has no boundary SDF");
  GridField f(R);
  for (int iy = 0; iy < R; ++iy) {
    const double y = double(iy) / R;
    for (int ix = 0; ix < R; ++ix) {
      const double x = double(ix) / R;
      double dist;
      if (d.shape == Domain::Shape::Disk) {
        dist = std::hypot(x - d.cx, y - d.cy) - d.radius;  // signed already
      } else {
        double inside = 1e30;
        if (d.periodic != Periodicity::XOnly)
          inside = std::min(inside, std::min(x, 1.0 - x));
        if (d.periodic != Periodicity::YOnly)
          inside = std::min(inside, std::min(y, 1.0 - y));
        dist = -inside;  // negative inside the box
      }
      f.at(iy, ix) = float(dist);
    }
  }
  return f;
}

GridField sdf_boundary(const Domain& d, const BoundaryRef& on, int R) {
  GridField f(R);
  for (int iy = 0; iy < R; ++iy) {
    const double y = double(iy) / R;
    for (int ix = 0; ix < R; ++ix) {
      const double x = double(ix) / R;
      double dist = 1e30;
      if (on.outer)
        dist = std::fabs(std::hypot(x - d.cx, y - d.cy) - d.radius);
      if (on.edges & kEdgeLeft) dist = std::min(dist, x);
      if (on.edges & kEdgeRight) dist = std::min(dist, 1.0 - x);
      if (on.edges & kEdgeBottom) dist = std::min(dist, y);
      if (on.edges & kEdgeTop) dist = std::min(dist, 1.0 - y);
      f.at(iy, ix) = float(dist);
    }
  }
  return f;
}

}  // namespace gpde
