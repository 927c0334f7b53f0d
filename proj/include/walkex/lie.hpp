#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace walkex {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Angles below this switch exp/log and their Jacobians to Taylor series.
inline constexpr double kSmallAngle = 1e-8;

inline Mat3 skew(const Vec3& v)
{
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/**
 * Orientation in SO(3), stored as a unit quaternion.
 *
 * The rotation is used as a linear map: rotate(v) applies it to a vector.
 * Perturbations are applied on the left, R ⊞ d = exp(d) * R, i.e. in the
 * frame the rotation maps into. For an orientation Φ_CI that maps inertial
 * coordinates into body coordinates this is the body frame.
 */
class Rotation
{
 public:
  Rotation() : q_(1.0, 0.0, 0.0, 0.0) {}

  static Rotation identity() { return {}; }

  static Rotation fromQuaternion(const Eigen::Quaterniond& q)
  {
    Rotation r;
    r.q_ = q.normalized();
    return r;
  }

  static Rotation fromMatrix(const Mat3& m) { return fromQuaternion(Eigen::Quaterniond(m)); }

  static Rotation aboutZ(double angle) { return exp(Vec3(0.0, 0.0, angle)); }

  static Rotation exp(const Vec3& phi)
  {
    const double theta = phi.norm();
    Eigen::Quaterniond q;
    if (theta < kSmallAngle) {
      const double t2 = theta * theta;
      q.w() = 1.0 - t2 / 8.0;
      q.vec() = 0.5 * (1.0 - t2 / 24.0) * phi;
    } else {
      q.w() = std::cos(0.5 * theta);
      q.vec() = (std::sin(0.5 * theta) / theta) * phi;
    }
    return fromQuaternion(q);
  }

  /// Rotation vector in (-pi, pi].
  Vec3 log() const
  {
    Eigen::Quaterniond q = q_;
    if (q.w() < 0.0) {
      q.coeffs() = -q.coeffs();
    }
    const double s = q.vec().norm();
    if (s < kSmallAngle) {
      const double w = q.w();
      return (2.0 / w) * (1.0 - s * s / (3.0 * w * w)) * q.vec();
    }
    const double theta = 2.0 * std::atan2(s, q.w());
    return (theta / s) * q.vec();
  }

  Rotation inverse() const
  {
    Rotation r;
    r.q_ = q_.conjugate();
    return r;
  }

  Rotation operator*(const Rotation& other) const { return fromQuaternion(q_ * other.q_); }

  Vec3 rotate(const Vec3& v) const { return q_ * v; }
  Vec3 inverseRotate(const Vec3& v) const { return q_.conjugate() * v; }

  Mat3 matrix() const { return q_.toRotationMatrix(); }

  const Eigen::Quaterniond& quaternion() const { return q_; }

 private:
  Eigen::Quaterniond q_;
};

inline Rotation expMap(const Vec3& phi) { return Rotation::exp(phi); }
inline Vec3 logMap(const Rotation& r) { return r.log(); }

/// Γ(φ): exp(φ + δ) ≈ exp(Γ(φ) δ) * exp(φ) to first order.
inline Mat3 expJacobian(const Vec3& phi)
{
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double t2 = theta * theta;
  const double half = std::sin(0.5 * theta) / theta;
  // the K^2 coefficient cancels badly for small theta; its series is exact to double there
  const double c2 = theta < 1e-3 ? 1.0 / 6.0 - t2 / 120.0 : (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() + (2.0 * half * half) * k + c2 * k * k;
}

inline Mat3 expJacobianInverse(const Vec3& phi)
{
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * k + (1.0 / 12.0) * k * k;
  }
  const double t2 = theta * theta;
  const double c = theta < 1e-3 ? 1.0 / 12.0 + t2 / 720.0
                                : 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() - 0.5 * k + c * k * k;
}

inline Rotation boxplus(const Rotation& r, const Vec3& delta) { return expMap(delta) * r; }

/// boxplus(b, boxminus(a, b)) == a
inline Vec3 boxminus(const Rotation& a, const Rotation& b) { return logMap(a * b.inverse()); }

inline Vec3 rotate(const Rotation& r, const Vec3& v) { return r.rotate(v); }

}  // namespace walkex
