#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <vector>

namespace vla::sim {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline Vec2 unit_from_angle(double theta) { return {std::cos(theta), std::sin(theta)}; }

// Maps an angle to [-pi, pi).
double wrap_angle(double a);
// Shortest signed angular difference a - b.
double angle_diff(double a, double b);

/// Joint angles in radians.
struct JointState {
  std::vector<double> q;

  std::size_t size() const noexcept { return q.size(); }
  friend bool operator==(const JointState&, const JointState&) = default;
};

/// Joint velocities in radians per step.
struct JointAction {
  std::vector<double> a;

  std::size_t size() const noexcept { return a.size(); }
  friend bool operator==(const JointAction&, const JointAction&) = default;
};

inline constexpr double kMaxJointVelocity = 0.1;

JointAction clamp_action(JointAction action, double limit = kMaxJointVelocity);

// Euclidean norm of the component-wise wrapped difference a - b.
double joint_distance(const JointState& a, const JointState& b);

/// Planar serial arm: base position plus link lengths, one revolute joint per link.
struct ArmGeometry {
  Vec2 base{0.5, 0.0};
  std::vector<double> links{0.30, 0.25, 0.20, 0.15};

  std::size_t dof() const noexcept { return links.size(); }
  double reach() const;

  // Default 4-link arm, or an m-link arm (2..7) with the same total reach.
  static ArmGeometry with_dof(std::size_t m);
};

Vec2 fk(const JointState& joints, const ArmGeometry& arm);
// Base, each joint, and the end effector (dof + 1 points).
std::vector<Vec2> joint_positions(const JointState& joints, const ArmGeometry& arm);
Eigen::Matrix<double, 2, Eigen::Dynamic> jacobian(const JointState& joints, const ArmGeometry& arm);

struct IkOptions {
  double damping = 0.05;
  std::size_t max_iterations = 500;
  double tolerance = 1e-3;
};

/// Damped-least-squares IK seeded at `init`, so the returned branch stays
/// close to the seed. Throws IkError (carrying the residual) when the target
/// is out of reach or the iteration does not converge.
JointState solve_ik(Vec2 target, const JointState& init, const ArmGeometry& arm, const IkOptions& opts = {});

// Joint-velocity command realising an end-effector velocity through the
// damped pseudo-inverse. `singular` reports a rank-deficient Jacobian.
JointAction ee_velocity_to_joints(const JointState& joints, const ArmGeometry& arm, Vec2 ee_velocity,
                                  double damping, bool& singular);

}  // namespace vla::sim
