#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <type_traits>
#include <cstddef>
#include <ostream>

#include "aot/errors.hpp"

namespace aot {

inline constexpr double kPi = 3.14159265358979323846;

// Scalar helpers shared by double and dual evaluation. Templates call these
// unqualified so that overloads for Dual are found by ADL.
inline double value_of(double x) { return x; }
inline long double value_of(long double x) { return x; }

template <class T>
struct Vec3 {
  T x{}, y{}, z{};

  constexpr Vec3() = default;
  constexpr Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

  template <class U>
  static Vec3 cast(const Vec3<U>& v) { return {T(v.x), T(v.y), T(v.z)}; }

  T& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
  const T& operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3 operator*(const T& s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(const T& s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(const T& s) { x *= s; y *= s; z *= s; return *this; }

  bool operator==(const Vec3&) const = default;
};

template <class T>
Vec3<T> operator*(const T& s, const Vec3<T>& v) { return v * s; }

template <class T>
T dot(const Vec3<T>& a, const Vec3<T>& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

template <class T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class T>
T squared_norm(const Vec3<T>& v) { return dot(v, v); }

template <class T>
T norm(const Vec3<T>& v) {
  using std::sqrt;
  return sqrt(dot(v, v));
}

using Vec3d = Vec3<double>;

inline Vec3d normalized(const Vec3d& v) {
  const double n = norm(v);
  if (!(n > 0.0)) throw GeometryError("cannot normalize a zero vector");
  return v / n;
}

inline std::ostream& operator<<(std::ostream& os, const Vec3d& v) {
  return os << '(' << v.x << ", " << v.y << ", " << v.z << ')';
}

// Row-major 3x3 matrix.
template <class T>
struct Mat3 {
  std::array<T, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {T(1), T(0), T(0), T(0), T(1), T(0), T(0), T(0), T(1)};
    return r;
  }
  static Mat3 from_columns(const Vec3<T>& c0, const Vec3<T>& c1, const Vec3<T>& c2) {
    Mat3 r;
    r.m = {c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z};
    return r;
  }
  template <class U>
  static Mat3 cast(const Mat3<U>& o) {
    Mat3 r;
    for (std::size_t i = 0; i < 9; ++i) r.m[i] = T(o.m[i]);
    return r;
  }

  T& operator()(std::size_t r, std::size_t c) { return m[r * 3 + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return m[r * 3 + c]; }

  Vec3<T> column(std::size_t c) const { return {m[c], m[3 + c], m[6 + c]}; }
  Vec3<T> row(std::size_t r) const { return {m[3 * r], m[3 * r + 1], m[3 * r + 2]}; }

  Mat3 transpose() const {
    Mat3 r;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        r(i, j) = (*this)(i, 0) * o(0, j) + (*this)(i, 1) * o(1, j) + (*this)(i, 2) * o(2, j);
    return r;
  }
  Vec3<T> operator*(const Vec3<T>& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  // Product with a constant vector, without promoting it to T.
  Vec3<T> operator*(const Vec3<double>& v) const
    requires(!std::is_same_v<T, double>)
  {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator+(const Mat3& o) const {
    Mat3 r;
    for (std::size_t i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
    return r;
  }
  Mat3 operator-(const Mat3& o) const {
    Mat3 r;
    for (std::size_t i = 0; i < 9; ++i) r.m[i] = m[i] - o.m[i];
    return r;
  }
  Mat3 operator*(const T& s) const {
    Mat3 r;
    for (std::size_t i = 0; i < 9; ++i) r.m[i] = m[i] * s;
    return r;
  }

  T trace() const { return m[0] + m[4] + m[8]; }
  T determinant() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }

  bool operator==(const Mat3&) const = default;
};

using Mat3d = Mat3<double>;

template <class T>
Mat3<T> skew(const Vec3<T>& w) {
  Mat3<T> r;
  r.m = {T(0), -w.z, w.y, w.z, T(0), -w.x, -w.y, w.x, T(0)};
  return r;
}

// Exponential map from an axis-angle vector to a rotation matrix (Rodrigues).
// Below a tiny angle the second-order series is used; it has the exact value
// and first derivative at zero, which is all the optimizer differentiates.
template <class T>
Mat3<T> exp_so3(const Vec3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = dot(w, w);
  const Mat3<T> k = skew(w);
  const Mat3<T> k2 = k * k;
  if (value_of(theta2) < 1e-16) {
    return Mat3<T>::identity() + k + k2 * T(0.5);
  }
  const T theta = sqrt(theta2);
  const T a = sin(theta) / theta;
  const T b = (T(1) - cos(theta)) / theta2;
  return Mat3<T>::identity() + k * a + k2 * b;
}

// Rotation by `angle` about the unit vector `axis`.
inline Mat3d rotation_about(const Vec3d& axis, double angle) {
  return exp_so3(normalized(axis) * angle);
}

inline Mat3d rot_x(double a) { return rotation_about({1, 0, 0}, a); }
inline Mat3d rot_y(double a) { return rotation_about({0, 1, 0}, a); }
inline Mat3d rot_z(double a) { return rotation_about({0, 0, 1}, a); }

// Smallest rotation taking unit vector `from` onto unit vector `to`.
inline Mat3d rotation_between(const Vec3d& from, const Vec3d& to) {
  const Vec3d a = normalized(from);
  const Vec3d b = normalized(to);
  const Vec3d c = cross(a, b);
  const double s = norm(c);
  const double cth = dot(a, b);
  if (s < 1e-15) {
    if (cth > 0) return Mat3d::identity();
    // Antiparallel: rotate by pi about any axis perpendicular to `a`.
    Vec3d ortho = std::abs(a.x) < 0.9 ? cross(a, Vec3d{1, 0, 0}) : cross(a, Vec3d{0, 1, 0});
    return rotation_about(ortho, kPi);
  }
  return rotation_about(c / s, std::atan2(s, cth));
}

// Re-orthonormalize a nearly orthonormal matrix (Gram-Schmidt on columns).
inline Mat3d orthonormalize(const Mat3d& r) {
  const Vec3d c0 = normalized(r.column(0));
  Vec3d c1 = r.column(1) - c0 * dot(c0, r.column(1));
  c1 = normalized(c1);
  const Vec3d c2 = cross(c0, c1);
  return Mat3d::from_columns(c0, c1, c2);
}

inline bool is_rotation(const Mat3d& r, double tol = 1e-9) {
  const Mat3d rrt = r * r.transpose();
  const Mat3d id = Mat3d::identity();
  for (std::size_t i = 0; i < 9; ++i)
    if (!(std::abs(rrt.m[i] - id.m[i]) <= tol)) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

// Row-major 4x4 homogeneous matrix.
struct Mat4 {
  std::array<double, 16> m{};

  static Mat4 identity() {
    Mat4 r;
    r.m[0] = r.m[5] = r.m[10] = r.m[15] = 1.0;
    return r;
  }
  double& operator()(std::size_t r, std::size_t c) { return m[r * 4 + c]; }
  double operator()(std::size_t r, std::size_t c) const { return m[r * 4 + c]; }

  Mat4 operator*(const Mat4& o) const {
    Mat4 r;
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }

  // Applies the matrix to (x, y, z, w) and returns all four components.
  std::array<double, 4> apply(const std::array<double, 4>& v) const {
    std::array<double, 4> r{};
    for (std::size_t i = 0; i < 4; ++i)
      r[i] = m[i * 4] * v[0] + m[i * 4 + 1] * v[1] + m[i * 4 + 2] * v[2] + m[i * 4 + 3] * v[3];
    return r;
  }
};

// Rigid transform x -> rotation * x + translation.
template <class T>
struct BasicPose {
  Mat3<T> rotation = Mat3<T>::identity();
  Vec3<T> translation{};

  static BasicPose identity() { return {}; }

  Vec3<T> apply(const Vec3<T>& x) const { return rotation * x + translation; }
  Vec3<T> apply_inverse(const Vec3<T>& x) const { return rotation.transpose() * (x - translation); }
  Vec3<T> rotate(const Vec3<T>& v) const { return rotation * v; }

  BasicPose inverse() const {
    const Mat3<T> rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }

  BasicPose operator*(const BasicPose& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }

  template <class U>
  static BasicPose cast(const BasicPose<U>& p) {
    return {Mat3<T>::cast(p.rotation), Vec3<T>::cast(p.translation)};
  }
};

using Pose = BasicPose<double>;

inline Pose compose(const Pose& a, const Pose& b) { return a * b; }
inline Pose inverse(const Pose& p) { return p.inverse(); }
inline Vec3d transform_point(const Pose& p, const Vec3d& x) { return p.apply(x); }

inline Pose make_pose(const Mat3d& r, const Vec3d& t) { return {r, t}; }
inline Pose translation_pose(const Vec3d& t) { return {Mat3d::identity(), t}; }
inline Pose rotation_pose(const Mat3d& r) { return {r, {}}; }

inline Mat4 as_affine(const Pose& p) {
  Mat4 a = Mat4::identity();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) a(i, j) = p.rotation(i, j);
    a(i, 3) = p.translation[i];
  }
  return a;
}

// Builds a pose from a 4x4 affine matrix; rejects non-rigid input.
inline Pose pose_from_affine(const Mat4& a, double tol = 1e-9) {
  Pose p;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) p.rotation(i, j) = a(i, j);
    p.translation[i] = a(i, 3);
  }
  if (std::abs(a(3, 0)) > tol || std::abs(a(3, 1)) > tol || std::abs(a(3, 2)) > tol ||
      std::abs(a(3, 3) - 1.0) > tol)
    throw DomainError("affine matrix bottom row must be (0, 0, 0, 1)");
  if (!is_rotation(p.rotation, tol)) throw DomainError("pose rotation is not orthonormal with det +1");
  return p;
}

inline bool is_valid_pose(const Pose& p, double tol = 1e-9) {
  for (double v : p.rotation.m)
    if (!std::isfinite(v)) return false;
  for (std::size_t i = 0; i < 3; ++i)
    if (!std::isfinite(p.translation[i])) return false;
  return is_rotation(p.rotation, tol);
}

inline double max_abs_diff(const Pose& a, const Pose& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < 9; ++i) d = std::max(d, std::abs(a.rotation.m[i] - b.rotation.m[i]));
  for (std::size_t i = 0; i < 3; ++i) d = std::max(d, std::abs(a.translation[i] - b.translation[i]));
  return d;
}

// Geodesic angle between two rotations.
inline double rotation_angle_between(const Mat3d& a, const Mat3d& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace aot
