#pragma once

#include <cmath>

#include <Eigen/Geometry>

#include "bodybench/common.hpp"

namespace bodybench {

template <typename T>
Mat3<T> skew(const Vec3<T>& w) {
  Mat3<T> s;
  s << T(0), -w.z(), w.y(),
       w.z(), T(0), -w.x(),
       -w.y(), w.x(), T(0);
  return s;
}

// Exponential map from axis-angle to rotation matrix. Generic over the
// scalar so it can be instantiated with automatic-differentiation types;
// the small-angle branch avoids sqrt(0) so derivatives stay finite at rest.
template <typename T>
Mat3<T> rodrigues(const Vec3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = w.squaredNorm();
  Mat3<T> r;
  if (theta2 > T(1e-16)) {
    const T theta = sqrt(theta2);
    const T c = cos(theta);
    const T s = sin(theta);
    const Vec3<T> k = w / theta;
    const T one_c = T(1) - c;
    r(0, 0) = c + k.x() * k.x() * one_c;
    r(0, 1) = k.x() * k.y() * one_c - k.z() * s;
    r(0, 2) = k.x() * k.z() * one_c + k.y() * s;
    r(1, 0) = k.y() * k.x() * one_c + k.z() * s;
    r(1, 1) = c + k.y() * k.y() * one_c;
    r(1, 2) = k.y() * k.z() * one_c - k.x() * s;
    r(2, 0) = k.z() * k.x() * one_c - k.y() * s;
    r(2, 1) = k.z() * k.y() * one_c + k.x() * s;
    r(2, 2) = c + k.z() * k.z() * one_c;
  } else {
    // First order is exact in value and derivative at the origin.
    r = Mat3<T>::Identity() + skew(w);
  }
  return r;
}

// Inverse of rodrigues for double matrices; angle in [0, pi].
inline Vec3<double> log_rotation(const Mat3<double>& r) {
  Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

}  // namespace bodybench
