#include "walkex/trajectory.hpp"

#include <algorithm>
#include <cmath>

#include "walkex/errors.hpp"

namespace walkex {

namespace {

// Hermite basis and derivatives on s in [0, 1]
struct Basis
{
  double h00, h10, h01, h11;
  double d00, d10, d01, d11;
};

Basis basis(double s)
{
  const double s2 = s * s, s3 = s2 * s;
  return {2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2,
          6 * s2 - 6 * s,      3 * s2 - 4 * s + 1, -6 * s2 + 6 * s, 3 * s2 - 2 * s};
}

Vec3 clampEach(const Vec3& v, double limit)
{
  Vec3 out;
  for (int i = 0; i < 3; ++i) out(i) = std::clamp(v(i), -limit, limit);
  return out;
}

}  // namespace

HermiteSpline::HermiteSpline(std::vector<HermiteKnot> knots, EndPolicy policy)
    : knots_(std::move(knots)), policy_(policy)
{
  if (knots_.size() < 2) throw ConfigError("knot", "a spline needs at least two knots");
  for (std::size_t i = 1; i < knots_.size(); ++i) {
    if (!(knots_[i].time > knots_[i - 1].time)) {
      throw ConfigError("knot." + std::to_string(i) + ".t", "knot times must increase strictly");
    }
  }
}

int HermiteSpline::locate(double& t) const
{
  if (!(t >= start() && t <= end())) {
    if (policy_ == EndPolicy::Throw || !std::isfinite(t)) {
      throw OutOfDomain("time " + formatDouble(t) + " outside spline [" + formatDouble(start()) + ", " +
                        formatDouble(end()) + "]");
    }
    t = std::clamp(t, start(), end());
  }
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t,
                                   [](double v, const HermiteKnot& k) { return v < k.time; });
  const int i = static_cast<int>(it - knots_.begin()) - 1;
  return std::clamp(i, 0, static_cast<int>(knots_.size()) - 2);
}

Pose HermiteSpline::pose(double t) const
{
  const int i = locate(t);
  const HermiteKnot& a = knots_[i];
  const HermiteKnot& b = knots_[i + 1];
  const double h = b.time - a.time;
  const Basis w = basis((t - a.time) / h);
  Pose p;
  p.position = w.h00 * a.pose.position + w.h10 * h * a.twist.linear + w.h01 * b.pose.position +
               w.h11 * h * b.twist.linear;
  const Vec3 phi1 = boxminus(b.pose.rotation, a.pose.rotation);
  // tangents in phi coordinates: the end angular velocity maps through the inverse exp Jacobian
  const Vec3 phi = w.h10 * h * a.twist.angular + w.h01 * phi1 + w.h11 * h * (expJacobianInverse(phi1) * b.twist.angular);
  p.rotation = boxplus(a.pose.rotation, phi);
  return p;
}

Twist HermiteSpline::twist(double t) const
{
  const bool clamped = t < start() || t > end();
  const int i = locate(t);
  Twist out;
  if (clamped) return out;  // holding the end pose
  const HermiteKnot& a = knots_[i];
  const HermiteKnot& b = knots_[i + 1];
  const double h = b.time - a.time;
  const Basis w = basis((t - a.time) / h);
  out.linear = (w.d00 * a.pose.position + w.d01 * b.pose.position) / h + w.d10 * a.twist.linear + w.d11 * b.twist.linear;
  const Vec3 phi1 = boxminus(b.pose.rotation, a.pose.rotation);
  const Vec3 endTangent = expJacobianInverse(phi1) * b.twist.angular;
  const Vec3 phi = w.h10 * h * a.twist.angular + w.h01 * phi1 + w.h11 * h * endTangent;
  const Vec3 phiDot = w.d10 * a.twist.angular + w.d01 * phi1 / h + w.d11 * endTangent;
  out.angular = expJacobian(phi) * phiDot;
  return out;
}

SplineTracker::SplineTracker(const TrackingGains& gains) : gains_(gains)
{
  for (const PidGains* g : {&gains.position, &gains.orientation}) {
    if (!(g->kp >= 0.0 && g->ki >= 0.0 && g->kd >= 0.0)) throw ConfigError("tracking", "PID gains must be >= 0");
    if (!(g->outputLimit > 0.0)) throw ConfigError("tracking", "output limit must be positive");
  }
}

void SplineTracker::reset()
{
  integral_ = {};
  previous_ = {};
  first_ = true;
}

Twist SplineTracker::update(double t, const HermiteSpline& spline, const Pose& current, double dt)
{
  const Pose ref = spline.pose(t);
  Twist out = spline.twist(t);
  Twist e;
  e.linear = ref.position - current.position;
  e.angular = boxminus(ref.rotation, current.rotation);

  auto channel = [&](const PidGains& g, const Vec3& err, Vec3& integral, const Vec3& prev) {
    if (g.ki > 0.0) integral = clampEach(integral + dt * err, g.outputLimit / g.ki);
    const Vec3 derivative = first_ || !(dt > 0.0) ? Vec3::Zero() : Vec3((err - prev) / dt);
    return Vec3(g.kp * err + g.ki * integral + g.kd * derivative);
  };
  out.linear += channel(gains_.position, e.linear, integral_.linear, previous_.linear);
  out.angular += channel(gains_.orientation, e.angular, integral_.angular, previous_.angular);
  previous_ = e;
  first_ = false;
  return out;
}

HermiteSpline parseKnots(const KeyValueDoc& doc)
{
  if (doc.getString("kind") != "knots") throw ConfigError("kind", "expected 'knots'");
  if (doc.getInt("schema_version") != 1) throw ConfigError("schema_version", "unsupported version");
  const std::string policy = doc.getString("end_policy", "throw");
  if (policy != "throw" && policy != "clamp") throw ConfigError("end_policy", "expected throw or clamp");

  std::vector<std::string> ids = doc.children("knot");
  for (const std::string& id : ids) {
    if (id.empty() || id.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("knot." + id, "knot ids must be non-negative integers");
    }
  }
  std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) { return std::stoi(a) < std::stoi(b); });
  std::vector<HermiteKnot> knots;
  for (const std::string& id : ids) {
    const std::string p = "knot." + id + ".";
    HermiteKnot k;
    k.time = doc.getDouble(p + "t");
    k.pose.position = doc.getVec3(p + "position");
    k.pose.rotation = expMap(doc.getVec3(p + "rotation", Vec3::Zero()));
    k.twist.linear = doc.getVec3(p + "velocity", Vec3::Zero());
    k.twist.angular = doc.getVec3(p + "angular_velocity", Vec3::Zero());
    knots.push_back(k);
  }
  doc.checkAllConsumed();
  return HermiteSpline(std::move(knots), policy == "clamp" ? EndPolicy::Clamp : EndPolicy::Throw);
}

}  // namespace walkex
