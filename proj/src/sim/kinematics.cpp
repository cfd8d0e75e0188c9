#include "vla/sim/kinematics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>

#include "vla/errors.hpp"

namespace vla::sim {

double wrap_angle(double a) {
  if (a >= -kPi && a < kPi) return a;
  double w = std::fmod(a + kPi, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  return w - kPi;
}

double angle_diff(double a, double b) { return wrap_angle(a - b); }

JointAction clamp_action(JointAction action, double limit) {
  for (auto& v : action.a) v = std::clamp(v, -limit, limit);
  return action;
}

double joint_distance(const JointState& a, const JointState& b) {
  if (a.size() != b.size()) throw ShapeError("joint_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = angle_diff(a.q[i], b.q[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

double ArmGeometry::reach() const { return std::accumulate(links.begin(), links.end(), 0.0); }

ArmGeometry ArmGeometry::with_dof(std::size_t m) {
  if (m < 2 || m > 7) throw ConfigError("arm must have between 2 and 7 joints");
  ArmGeometry g;
  if (m == 4) return g;
  // Linearly tapering links with the default total reach of 0.9 m.
  g.links.clear();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) total += static_cast<double>(m - i + 2);
  for (std::size_t i = 0; i < m; ++i) g.links.push_back(0.9 * static_cast<double>(m - i + 2) / total);
  return g;
}

std::vector<Vec2> joint_positions(const JointState& joints, const ArmGeometry& arm) {
  if (joints.size() != arm.dof()) throw ShapeError("joint state has wrong dimension for arm");
  std::vector<Vec2> pts{arm.base};
  double theta = 0.0;
  Vec2 p = arm.base;
  for (std::size_t i = 0; i < arm.dof(); ++i) {
    theta += joints.q[i];
    p = p + unit_from_angle(theta) * arm.links[i];
    pts.push_back(p);
  }
  return pts;
}

Vec2 fk(const JointState& joints, const ArmGeometry& arm) { return joint_positions(joints, arm).back(); }

Eigen::Matrix<double, 2, Eigen::Dynamic> jacobian(const JointState& joints, const ArmGeometry& arm) {
  if (joints.size() != arm.dof()) throw ShapeError("joint state has wrong dimension for arm");
  const std::size_t m = arm.dof();
  Eigen::Matrix<double, 2, Eigen::Dynamic> j(2, static_cast<Eigen::Index>(m));
  std::vector<double> cumulative(m);
  double theta = 0.0;
  for (std::size_t i = 0; i < m; ++i) cumulative[i] = (theta += joints.q[i]);
  // Column i sums the contributions of every link at or after joint i.
  double sx = 0.0, sy = 0.0;
  for (std::size_t k = m; k-- > 0;) {
    sx += -arm.links[k] * std::sin(cumulative[k]);
    sy += arm.links[k] * std::cos(cumulative[k]);
    j(0, static_cast<Eigen::Index>(k)) = sx;
    j(1, static_cast<Eigen::Index>(k)) = sy;
  }
  return j;
}

JointState solve_ik(Vec2 target, const JointState& init, const ArmGeometry& arm, const IkOptions& opts) {
  const double dist = (target - arm.base).norm();
  if (dist > arm.reach()) {
    throw IkError("IK target beyond reach (" + std::to_string(dist) + " > " + std::to_string(arm.reach()) + ")",
                  dist - arm.reach());
  }
  JointState q = init;
  const double lambda2 = opts.damping * opts.damping;
  double residual = (target - fk(q, arm)).norm();
  for (std::size_t it = 0; it < opts.max_iterations && residual > opts.tolerance; ++it) {
    const Vec2 err = target - fk(q, arm);
    const auto j = jacobian(q, arm);
    const Eigen::Matrix2d jjt = j * j.transpose() + lambda2 * Eigen::Matrix2d::Identity();
    const Eigen::Vector2d w = jjt.ldlt().solve(Eigen::Vector2d(err.x, err.y));
    const Eigen::VectorXd dq = j.transpose() * w;
    for (std::size_t i = 0; i < q.size(); ++i) q.q[i] = wrap_angle(q.q[i] + dq(static_cast<Eigen::Index>(i)));
    residual = (target - fk(q, arm)).norm();
  }
  if (residual > opts.tolerance) throw IkError("IK did not converge", residual);
  return q;
}

JointAction ee_velocity_to_joints(const JointState& joints, const ArmGeometry& arm, Vec2 ee_velocity,
                                  double damping, bool& singular) {
  const auto j = jacobian(joints, arm);
  const Eigen::Matrix2d jjt = j * j.transpose();
  singular = std::abs(jjt.determinant()) < 1e-12;
  JointAction out{std::vector<double>(joints.size(), 0.0)};
  if (singular) return out;
  const Eigen::Matrix2d damped = jjt + damping * damping * Eigen::Matrix2d::Identity();
  const Eigen::VectorXd dq = j.transpose() * damped.ldlt().solve(Eigen::Vector2d(ee_velocity.x, ee_velocity.y));
  for (std::size_t i = 0; i < out.size(); ++i) out.a[i] = dq(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace vla::sim
