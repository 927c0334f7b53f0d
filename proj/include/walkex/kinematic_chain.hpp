#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "walkex/lie.hpp"

namespace walkex {

enum class JointType { Revolute, Prismatic };

/// One joint of a serial chain; offset/fixedRotation place the joint frame in the parent link frame.
struct ChainJoint
{
  JointType type = JointType::Revolute;
  Vec3 offset = Vec3::Zero();
  Mat3 fixedRotation = Mat3::Identity();
  Vec3 axis = Vec3::UnitZ();
};

/// Rigid link carried by a joint. com and inertia are in the link frame; inertia about the com.
struct LinkInertia
{
  double mass = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();
};

template <typename S>
using Vec3T = Eigen::Matrix<S, 3, 1>;
template <typename S>
using Mat3T = Eigen::Matrix<S, 3, 3>;
template <typename S>
using VecT = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct FrameT
{
  Mat3T<S> rotation = Mat3T<S>::Identity();  // link -> base
  Vec3T<S> position = Vec3T<S>::Zero();      // link origin in base
};

namespace detail {

template <typename S>
Mat3T<S> axisRotation(const Vec3& axis, const S& angle)
{
  using std::cos;
  using std::sin;
  const Mat3T<S> k = skew(axis).template cast<S>();
  return Mat3T<S>::Identity() + sin(angle) * k + (S(1) - cos(angle)) * (k * k);
}

template <typename S>
Vec3T<S> cross(const Vec3T<S>& a, const Vec3T<S>& b)
{
  return Vec3T<S>(a(1) * b(2) - a(2) * b(1), a(2) * b(0) - a(0) * b(2), a(0) * b(1) - a(1) * b(0));
}

}  // namespace detail

/**
 * Fixed-base serial chain.
 *
 * Kinematics and recursive Newton-Euler are templated on the scalar so the
 * same code runs on double and on Eigen::AutoDiffScalar.
 */
class KinematicChain
{
 public:
  std::vector<ChainJoint> joints;
  std::vector<LinkInertia> links;

  int size() const { return static_cast<int>(joints.size()); }

  /// Parent-to-link transform of joint i at position q.
  template <typename S>
  void localTransform(int i, const S& q, Mat3T<S>& rotation, Vec3T<S>& position) const
  {
    const ChainJoint& j = joints[i];
    const Mat3T<S> fixed = j.fixedRotation.template cast<S>();
    if (j.type == JointType::Revolute) {
      rotation = fixed * detail::axisRotation<S>(j.axis, q);
      position = j.offset.template cast<S>();
    } else {
      rotation = fixed;
      position = j.offset.template cast<S>() + fixed * (j.axis.template cast<S>() * q);
    }
  }

  /// Link frames in the base frame; frames[i] belongs to joint i. Uses the first q.size() joints.
  template <typename S>
  std::vector<FrameT<S>> frames(const VecT<S>& q) const
  {
    std::vector<FrameT<S>> out(q.size());
    FrameT<S> parent;
    for (int i = 0; i < q.size(); ++i) {
      Mat3T<S> r;
      Vec3T<S> p;
      localTransform(i, q(i), r, p);
      out[i].rotation = parent.rotation * r;
      out[i].position = parent.position + parent.rotation * p;
      parent = out[i];
    }
    return out;
  }

  /// Joint axis (world) and joint origin (world) for joint i given link frames.
  static Vec3 worldAxis(const KinematicChain& c, const std::vector<FrameT<double>>& f, int i)
  {
    return f[i].rotation * c.joints[i].axis;
  }

  /**
   * Geometric Jacobian (translational rows 0-2, rotational rows 3-5) of a point
   * rigidly attached to link `link`, given in world coordinates.
   */
  Eigen::Matrix<double, 6, Eigen::Dynamic> pointJacobian(const std::vector<FrameT<double>>& f, int link,
                                                         const Vec3& point, int columns) const
  {
    Eigen::Matrix<double, 6, Eigen::Dynamic> jac = Eigen::Matrix<double, 6, Eigen::Dynamic>::Zero(6, columns);
    for (int i = 0; i <= link && i < columns; ++i) {
      const Vec3 axis = f[i].rotation * joints[i].axis;
      if (joints[i].type == JointType::Revolute) {
        jac.block<3, 1>(0, i) = axis.cross(point - f[i].position);
        jac.block<3, 1>(3, i) = axis;
      } else {
        jac.block<3, 1>(0, i) = axis;
      }
    }
    return jac;
  }

  /**
   * Recursive Newton-Euler inverse dynamics over the first q.size() joints:
   * tau = M(q) qdd + b(q, qd) + g(q). gravity is the base-frame gravity vector.
   */
  template <typename S>
  VecT<S> inverseDynamics(const VecT<S>& q, const VecT<S>& qd, const VecT<S>& qdd, const Vec3& gravity) const
  {
    const int n = static_cast<int>(q.size());
    std::vector<Mat3T<S>> rot(n);
    std::vector<Vec3T<S>> pos(n);
    std::vector<Vec3T<S>> omega(n), omegaDot(n), accel(n), force(n), moment(n);

    Vec3T<S> wPrev = Vec3T<S>::Zero();
    Vec3T<S> wdPrev = Vec3T<S>::Zero();
    Vec3T<S> aPrev = (-gravity).template cast<S>();
    for (int i = 0; i < n; ++i) {
      localTransform(i, q(i), rot[i], pos[i]);
      const Mat3T<S> rt = rot[i].transpose();
      const Vec3T<S> axis = joints[i].axis.template cast<S>();
      const Vec3T<S> wIn = rt * wPrev;
      const Vec3T<S> aOrigin =
          rt * (aPrev + detail::cross<S>(wdPrev, pos[i]) + detail::cross<S>(wPrev, detail::cross<S>(wPrev, pos[i])));
      if (joints[i].type == JointType::Revolute) {
        omega[i] = wIn + axis * qd(i);
        omegaDot[i] = rt * wdPrev + axis * qdd(i) + detail::cross<S>(wIn, axis * qd(i));
        accel[i] = aOrigin;
      } else {
        omega[i] = wIn;
        omegaDot[i] = rt * wdPrev;
        accel[i] = aOrigin + axis * qdd(i) + S(2) * detail::cross<S>(wIn, axis * qd(i));
      }
      const LinkInertia& link = links[i];
      const Vec3T<S> c = link.com.template cast<S>();
      const Mat3T<S> inertia = link.inertia.template cast<S>();
      const Vec3T<S> aCom = accel[i] + detail::cross<S>(omegaDot[i], c) + detail::cross<S>(omega[i], detail::cross<S>(omega[i], c));
      force[i] = S(link.mass) * aCom;
      moment[i] = inertia * omegaDot[i] + detail::cross<S>(omega[i], Vec3T<S>(inertia * omega[i]));
      wPrev = omega[i];
      wdPrev = omegaDot[i];
      aPrev = accel[i];
    }

    VecT<S> tau(n);
    Vec3T<S> fNext = Vec3T<S>::Zero();
    Vec3T<S> nNext = Vec3T<S>::Zero();
    for (int i = n - 1; i >= 0; --i) {
      Vec3T<S> fChild = Vec3T<S>::Zero();
      Vec3T<S> nChild = Vec3T<S>::Zero();
      if (i + 1 < n) {
        fChild = rot[i + 1] * fNext;
        nChild = rot[i + 1] * nNext + detail::cross<S>(pos[i + 1], fChild);
      }
      const Vec3T<S> c = links[i].com.template cast<S>();
      const Vec3T<S> f = force[i] + fChild;
      const Vec3T<S> m = moment[i] + nChild + detail::cross<S>(c, force[i]);
      const Vec3T<S> axis = joints[i].axis.template cast<S>();
      tau(i) = joints[i].type == JointType::Revolute ? m.dot(axis) : f.dot(axis);
      fNext = f;
      nNext = m;
    }
    return tau;
  }

  /// Mass matrix over the first q.size() joints, one inverse-dynamics call per column.
  template <typename S>
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> massMatrix(const VecT<S>& q) const
  {
    const int n = static_cast<int>(q.size());
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> m(n, n);
    const VecT<S> zero = VecT<S>::Zero(n);
    for (int i = 0; i < n; ++i) {
      VecT<S> e = VecT<S>::Zero(n);
      e(i) = S(1);
      m.col(i) = inverseDynamics<S>(q, zero, e, Vec3::Zero());
    }
    return m;
  }

  /// Potential energy -sum m_i g·c_i over the first q.size() links.
  double potentialEnergy(const Eigen::VectorXd& q, const Vec3& gravity) const
  {
    const auto f = frames<double>(q);
    double v = 0.0;
    for (int i = 0; i < q.size(); ++i) {
      const Vec3 c = f[i].position + f[i].rotation * links[i].com;
      v -= links[i].mass * gravity.dot(c);
    }
    return v;
  }
};

}  // namespace walkex
