#include <gtest/gtest.h>

#include <complex>
#include <filesystem>
#include <fstream>
#include <random>

#include "vla/errors.hpp"
#include "vla/sim/demo.hpp"
#include "vla/sim/io.hpp"
#include "vla/sim/kinematics.hpp"
#include "vla/sim/task.hpp"
#include "vla/sim/world.hpp"

using namespace vla::sim;

namespace {

ArmGeometry unit_arm() {
  ArmGeometry g;
  g.base = {0.5, 0.0};
  g.links = {1, 1, 1, 1};
  return g;
}

JointState random_joints(std::mt19937_64& rng, std::size_t m = 4) {
  std::uniform_real_distribution<double> u(-kPi, kPi);
  JointState q{std::vector<double>(m)};
  for (auto& v : q.q) v = u(rng);
  return q;
}

// Independent FK: product of unit phasors.
Vec2 phasor_fk(const JointState& q, const ArmGeometry& arm) {
  std::complex<double> p{arm.base.x, arm.base.y};
  std::complex<double> rot{1.0, 0.0};
  for (std::size_t i = 0; i < q.size(); ++i) {
    rot *= std::polar(1.0, q.q[i]);
    p += arm.links[i] * rot;
  }
  return {p.real(), p.imag()};
}

WorldState world_with(JointState q, std::vector<SceneObject> objs = {}) {
  WorldState w;
  w.joints = std::move(q);
  w.objects = std::move(objs);
  return w;
}

}  // namespace

TEST(Kinematics, StraightArm) {
  const auto arm = unit_arm();
  const Vec2 p = fk(JointState{{0, 0, 0, 0}}, arm);
  EXPECT_NEAR(p.x, 4.5, 1e-12);
  EXPECT_NEAR(p.y, 0.0, 1e-12);
  const Vec2 up = fk(JointState{{kPi / 2, 0, 0, 0}}, arm);
  EXPECT_NEAR(up.x, 0.5, 1e-12);
  EXPECT_NEAR(up.y, 4.0, 1e-12);
}

TEST(Kinematics, PhasorOracle) {
  std::mt19937_64 rng(7);
  ArmGeometry arm;
  for (int t = 0; t < 1000; ++t) {
    const auto q = random_joints(rng);
    const Vec2 a = fk(q, arm), b = phasor_fk(q, arm);
    ASSERT_NEAR(a.x, b.x, 1e-12);
    ASSERT_NEAR(a.y, b.y, 1e-12);
  }
}

TEST(Kinematics, JacobianFiniteDifference) {
  std::mt19937_64 rng(11);
  for (std::size_t m : {2u, 4u, 7u}) {
    const auto arm = ArmGeometry::with_dof(m);
    for (int t = 0; t < 50; ++t) {
      const auto q = random_joints(rng, m);
      const auto j = jacobian(q, arm);
      for (std::size_t i = 0; i < m; ++i) {
        auto hi = q, lo = q;
        const double h = 1e-6;
        hi.q[i] += h;
        lo.q[i] -= h;
        const Vec2 d = (phasor_fk(hi, arm) - phasor_fk(lo, arm)) * (0.5 / h);
        ASSERT_NEAR(j(0, i), d.x, 1e-6);
        ASSERT_NEAR(j(1, i), d.y, 1e-6);
      }
    }
  }
}

TEST(Kinematics, JacobianStraightArmColumnNorms) {
  const auto arm = unit_arm();
  const auto j = jacobian(JointState{{0, 0, 0, 0}}, arm);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(j.col(i).norm(), 4.0 - i, 1e-12);
}

TEST(Kinematics, SingleLinkJacobian) {
  ArmGeometry arm;
  arm.links = {0.7};
  const auto j = jacobian(JointState{{0.0}}, arm);
  EXPECT_NEAR(j(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(j(1, 0), 0.7, 1e-15);
}

TEST(Kinematics, WrapAngle) {
  EXPECT_NEAR(wrap_angle(3 * kPi / 2), -kPi / 2, 1e-12);
  EXPECT_NEAR(wrap_angle(-3 * kPi / 2), kPi / 2, 1e-12);
  EXPECT_NEAR(angle_diff(kPi - 0.1, -kPi + 0.1), -0.2, 1e-12);
  EXPECT_NEAR(joint_distance(JointState{{0, 0.3}}, JointState{{0, 0}}), 0.3, 1e-15);
}

TEST(Ik, FixedPoint) {
  std::mt19937_64 rng(3);
  ArmGeometry arm;
  const auto q = random_joints(rng);
  const auto sol = solve_ik(fk(q, arm), q, arm);
  EXPECT_EQ(sol, q);
}

TEST(Ik, FullExtension) {
  ArmGeometry arm;
  const double r = arm.reach();
  const Vec2 target = arm.base + unit_from_angle(0.8) * (r - 1e-6);
  const auto sol = solve_ik(target, JointState{{0.6, 0.1, 0.1, 0.1}}, arm, IkOptions{.tolerance = 1e-4});
  EXPECT_NEAR(sol.q[0], 0.8, 0.05);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(sol.q[i], 0.0, 0.05);
}

TEST(Ik, ConvergesOnReachableTargets) {
  std::mt19937_64 rng(5);
  ArmGeometry arm;
  const auto home = home_joints(arm);
  std::uniform_real_distribution<double> ux(0.3, 0.7), uy(0.3, 0.65);
  for (int t = 0; t < 200; ++t) {
    const Vec2 target{ux(rng), uy(rng)};
    const auto sol = solve_ik(target, home, arm);
    ASSERT_LE((fk(sol, arm) - target).norm(), 1e-3);
  }
}

TEST(Ik, UnreachableThrows) {
  ArmGeometry arm;
  try {
    solve_ik({0.5, 1.5}, home_joints(arm), arm);
    FAIL() << "expected IkError";
  } catch (const vla::IkError& e) {
    EXPECT_GT(e.residual(), 0.5);
  }
}

TEST(Step, ZeroActionIsIdentity) {
  std::mt19937_64 rng(1);
  const auto w = sample_scene(rng, {0, 1});
  const auto next = step(w, JointAction{{0, 0, 0, 0}});
  EXPECT_EQ(next.joints, w.joints);
  EXPECT_EQ(next.objects, w.objects);
  EXPECT_FALSE(next.exited);
}

TEST(Step, IntegratorIdentityAndClamp) {
  const auto w = world_with(JointState{{3.1, 0, 0, 0}});
  const auto next = step(w, JointAction{{0.5, -0.05, 0.02, -0.3}});
  EXPECT_NEAR(next.joints.q[0], wrap_angle(3.2), 1e-15);
  EXPECT_NEAR(next.joints.q[1], -0.05, 1e-15);
  EXPECT_NEAR(next.joints.q[2], 0.02, 1e-15);
  EXPECT_NEAR(next.joints.q[3], -0.1, 1e-15);
}

TEST(Step, HeadOnPush) {
  // Straight arm pointing up, rotated slightly clockwise.
  ArmGeometry arm;
  WorldState w;
  w.arm = arm;
  w.joints = JointState{{kPi / 2, 0, 0, 0}};
  const Vec2 ee0 = w.end_effector();
  const auto after = [&] {
    WorldState t = w;
    t.joints.q[0] -= 0.05;
    return t.end_effector();
  }();
  const Vec2 dir = (after - ee0) * (1.0 / (after - ee0).norm());
  const double delta = 0.01;
  // Object placed so that after the step the tip penetrates by delta along dir.
  const double reach = kObjectRadius + kEndEffectorRadius;
  w.objects = {{0, after + dir * (reach - delta), kObjectRadius}};
  const auto next = step(w, JointAction{{-0.05, 0, 0, 0}});
  const Vec2 moved = next.objects[0].pos - w.objects[0].pos;
  EXPECT_NEAR(moved.norm(), delta, 1e-12);
  EXPECT_NEAR(moved.cross(dir), 0.0, 1e-12);
  EXPECT_GT(moved.dot(dir), 0.0);
}

TEST(Step, ObliqueContactDirection) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ang(-kPi, kPi), depth(0.001, 0.04);
  ArmGeometry arm;
  const auto q = home_joints(arm);
  const Vec2 ee = fk(q, arm);
  for (int t = 0; t < 500; ++t) {
    const Vec2 n = unit_from_angle(ang(rng));
    const double reach = kObjectRadius + kEndEffectorRadius;
    const double d = depth(rng);
    auto w = world_with(q, {{0, ee + n * (reach - d), kObjectRadius}});
    const auto next = step(w, JointAction{{0, 0, 0, 0}});
    const Vec2 moved = next.objects[0].pos - w.objects[0].pos;
    ASSERT_NEAR(moved.x, n.x * d, 1e-12);
    ASSERT_NEAR(moved.y, n.y * d, 1e-12);
    ASSERT_NEAR((next.objects[0].pos - ee).norm(), reach, 1e-12);
  }
}

TEST(Step, ObjectsImmobileWithoutContact) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int episode = 0; episode < 50; ++episode) {
    auto w = sample_scene(rng, {0, 1, 2});
    for (int t = 0; t < 40; ++t) {
      JointAction a{std::vector<double>(4)};
      for (auto& v : a.a) v = u(rng);
      const auto next = step(w, a);
      for (std::size_t k = 0; k < w.objects.size(); ++k) {
        const double gap = (next.end_effector() - w.objects[k].pos).norm();
        if (gap >= w.objects[k].radius + kEndEffectorRadius) {
          ASSERT_EQ(next.objects[k].pos, w.objects[k].pos);
        } else {
          ASSERT_NE(next.objects[k].pos, w.objects[k].pos);
        }
      }
      for (std::size_t i = 0; i < 4; ++i) {
        ASSERT_NEAR(next.joints.q[i], wrap_angle(w.joints.q[i] + a.a[i]), 1e-15);
      }
      w = next;
    }
  }
}

TEST(Step, ExitFlag) {
  ArmGeometry arm;
  const auto q = JointState{{0.0, 0.0, 0.0, 0.0}};  // tip at (1.4, 0)
  const Vec2 ee = fk(q, arm);
  auto w = world_with(q, {{0, {0.99, 0.01}, kObjectRadius}});
  w.objects[0].pos = ee + Vec2{0.0, 0.04};
  const auto next = step(w, JointAction{{0, 0, 0, 0}});
  EXPECT_TRUE(next.exited);
}

TEST(Render, EmptyWorkspaceHasNoObjectColours) {
  const auto img = render(world_with(home_joints(ArmGeometry{})));
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      // No object palette pixel: channel 1 is never lit by background or arm.
      ASSERT_EQ(img.at(r, c, 1), 0.0);
    }
  }
}

TEST(Render, DiskRasterOracle) {
  auto w = world_with(home_joints(ArmGeometry{}), {{1, {0.5, 0.5}, kObjectRadius}});
  const auto img = render(w);
  const auto color = class_color(1);
  // Independent raster: pixel centres within the radius carry the class colour.
  int lit = 0;
  double sr = 0.0, sc = 0.0;
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const double x = (c + 0.5) / 48.0, y = 1.0 - (r + 0.5) / 48.0;
      const bool inside = std::hypot(x - 0.5, y - 0.5) <= kObjectRadius;
      bool is_color = true;
      for (int ch = 0; ch < 3; ++ch) is_color &= std::abs(img.at(r, c, ch) - color[ch]) < 1e-12;
      ASSERT_EQ(inside, is_color) << r << "," << c;
      if (is_color) {
        ++lit;
        sr += r;
        sc += c;
      }
    }
  }
  ASSERT_GT(lit, 0);
  EXPECT_NEAR(sr / lit, 23.5, 1.0);
  EXPECT_NEAR(sc / lit, 23.5, 1.0);
}

TEST(Render, Deterministic) {
  std::mt19937_64 a(99), b(99);
  for (int t = 0; t < 10; ++t) {
    const auto wa = sample_scene(a, {0, 3});
    const auto wb = sample_scene(b, {0, 3});
    ASSERT_EQ(render(wa).to_bytes(), render(wb).to_bytes());
  }
}

TEST(Render, ByteRoundTrip) {
  std::mt19937_64 rng(4);
  const auto img = render(sample_scene(rng, {2, 4}));
  EXPECT_EQ(WorkspaceImage::from_bytes(img.to_bytes()), img);
}

TEST(Render, ClassColoursUnique) {
  for (int i = 0; i < 8; ++i) {
    for (int j = i + 1; j < 8; ++j) EXPECT_NE(class_color(i), class_color(j));
  }
  EXPECT_THROW(class_color(8), vla::ConfigError);
}

TEST(Scene, SingleClass) {
  std::mt19937_64 rng(2);
  const auto w = sample_scene(rng, {3});
  ASSERT_EQ(w.objects.size(), 1u);
  EXPECT_EQ(w.objects[0].class_id, 3);
}

TEST(Scene, NoOverlapBruteForce) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 1000; ++t) {
    const auto w = sample_scene(rng, {0, 1});
    const auto& a = w.objects[0];
    const auto& b = w.objects[1];
    ASSERT_GE((a.pos - b.pos).norm(), a.radius + b.radius + 2 * kObjectRadius);
    for (const auto& o : w.objects) {
      ASSERT_GE(o.pos.x - o.radius, 0.0);
      ASSERT_LE(o.pos.x + o.radius, 1.0);
    }
  }
}

TEST(Scene, SeedDeterminism) {
  std::mt19937_64 a(5), b(5);
  for (int t = 0; t < 20; ++t) {
    const auto wa = sample_scene(a, {0, 1, 2});
    const auto wb = sample_scene(b, {0, 1, 2});
    ASSERT_EQ(wa.objects, wb.objects);
    ASSERT_EQ(wa.joints, wb.joints);
  }
}

TEST(Scene, Errors) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_scene(rng, {}), vla::SamplingError);
  SceneOptions tiny;
  tiny.region = {0.45, 0.55, 0.45, 0.55};
  EXPECT_THROW(sample_scene(rng, {0, 1, 2, 3}, tiny), vla::SamplingError);
}

TEST(Task, SuccessBoundaries) {
  auto w0 = world_with(home_joints(ArmGeometry{}), {{0, {0.5, 0.5}, kObjectRadius}});
  const Task south = make_task(0, "south");
  std::vector<WorldState> h{w0, w0};
  EXPECT_FALSE(task_success(h, south));

  h[1].objects[0].pos = {0.5, 0.5 - kPushDistance};
  EXPECT_TRUE(task_success(h, south));

  h[1].objects[0].pos = {0.5 + 2 * kPushDistance, 0.5 - kPushDistance};
  EXPECT_FALSE(task_success(h, south));

  // Lateral exactly at the cone edge is still inside.
  const double edge = kPushDistance * std::tan(15.0 * kPi / 180.0);
  h[1].objects[0].pos = {0.5 + edge, 0.5 - kPushDistance};
  EXPECT_TRUE(task_success(h, south));

  h[1].exited = true;
  EXPECT_FALSE(task_success(h, south));

  EXPECT_THROW(task_success(h, make_task(3, "west")), vla::TaskError);
  EXPECT_THROW(make_task(0, "north"), vla::TaskError);
}

TEST(Task, DiagonalHeadings) {
  auto w0 = world_with(home_joints(ArmGeometry{}), {{0, {0.5, 0.5}, kObjectRadius}});
  std::vector<WorldState> h{w0, w0};
  const double s = kPushDistance / std::sqrt(2.0);
  h[1].objects[0].pos = {0.5 - s - 1e-9, 0.5 - s - 1e-9};
  EXPECT_TRUE(task_success(h, make_task(0, "south-west")));
  EXPECT_FALSE(task_success(h, make_task(0, "south-east")));
}

TEST(Task, CircleSweep) {
  const Vec2 c{0.5, 0.45};
  ArmGeometry arm;
  auto w0 = world_with(home_joints(arm), {{4, c, kObjectRadius}});
  std::vector<WorldState> h;
  auto q = w0.joints;
  const double r = kObjectRadius + kCircleClearance;
  for (int k = 0; k <= 40; ++k) {
    q = solve_ik(c + unit_from_angle(-kPi / 2 + 2 * kPi * k / 36.0) * r, q, arm);
    auto w = w0;
    w.joints = q;
    h.push_back(w);
  }
  const Task circle = make_task(4, "circle");
  EXPECT_GT(swept_angle(h, circle), 2 * kPi);
  EXPECT_TRUE(task_success(h, circle));
  h.resize(30);
  EXPECT_FALSE(task_success(h, circle));
}

namespace {

void check_demos(const std::string& name, int cls, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SceneOptions opts;
  opts.region = task_region();
  opts.joint_init = JointInit::HomeJitter;
  std::size_t longest = 0, latest_contact = 0;
  for (int t = 0; t < 100; ++t) {
    const auto scene = sample_scene(rng, {cls}, opts);
    DemoOptions d;
    d.render_frames = false;
    const auto demo = scripted_demo(scene, make_task(cls, name), rng, d);
    ASSERT_GE(demo.frames.size(), 2u);
    for (std::size_t f = 1; f < demo.frames.size(); ++f) {
      for (std::size_t i = 0; i < 4; ++i) {
        ASSERT_LE(std::abs(angle_diff(demo.frames[f].joints.q[i], demo.frames[f - 1].joints.q[i])),
                  kMaxJointVelocity + 1e-12);
      }
    }
    const auto history = replay(demo);
    ASSERT_TRUE(task_success(history, demo.task)) << name << " scene " << t;
    longest = std::max(longest, demo.frames.size());
    latest_contact = std::max(latest_contact, demo.contact_frame);
  }
  std::cout << name << ": longest demo " << longest << " frames, latest contact frame " << latest_contact << "\n";
}

}  // namespace

TEST(Demo, PushSouthSucceedsOnReplay) { check_demos("south", 1, 100); }
TEST(Demo, PushEastSucceedsOnReplay) { check_demos("east", 0, 101); }
TEST(Demo, PushSouthWestSucceedsOnReplay) { check_demos("south-west", 2, 102); }
TEST(Demo, PushWestSucceedsOnReplay) { check_demos("west", 3, 103); }
TEST(Demo, PushSouthEastSucceedsOnReplay) { check_demos("south-east", 4, 104); }
TEST(Demo, CircleSucceedsOnReplay) { check_demos("circle", 4, 105); }

TEST(Demo, ZeroNoiseDeterministic) {
  std::mt19937_64 srng(1);
  SceneOptions opts;
  opts.region = task_region();
  opts.joint_init = JointInit::Home;
  const auto scene = sample_scene(srng, {0}, opts);
  DemoOptions d;
  d.noise_sigma = 0.0;
  std::mt19937_64 a(1), b(2);
  const auto da = scripted_demo(scene, make_task(0, "east"), a, d);
  const auto db = scripted_demo(scene, make_task(0, "east"), b, d);
  ASSERT_EQ(da.frames.size(), db.frames.size());
  for (std::size_t f = 0; f < da.frames.size(); ++f) {
    ASSERT_EQ(da.frames[f].joints, db.frames[f].joints);
    ASSERT_EQ(da.frames[f].image.to_bytes(), db.frames[f].image.to_bytes());
  }
}

TEST(Demo, CircleStations) {
  std::mt19937_64 rng(6);
  SceneOptions opts;
  opts.region = task_region();
  opts.joint_init = JointInit::Home;
  const auto scene = sample_scene(rng, {4}, opts);
  const auto demo = scripted_demo(scene, make_task(4, "circle"), rng);
  ASSERT_EQ(demo.station_frames.size(), 4u);
  EXPECT_LT(demo.contact_frame, demo.station_frames[0]);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_LT(demo.station_frames[i - 1], demo.station_frames[i]);
}

TEST(Demo, MissingTargetThrows) {
  std::mt19937_64 rng(6);
  const auto scene = sample_scene(rng, {0});
  EXPECT_THROW(scripted_demo(scene, make_task(2, "west"), rng), vla::DemoError);
}

TEST(DemoFiles, RoundTrip) {
  std::mt19937_64 rng(31);
  SceneOptions opts;
  opts.region = task_region();
  opts.joint_init = JointInit::HomeJitter;
  std::vector<Demonstration> demos;
  demos.push_back(scripted_demo(sample_scene(rng, {0}, opts), make_task(0, "east"), rng));
  demos.push_back(scripted_demo(sample_scene(rng, {4}, opts), make_task(4, "circle"), rng));
  const auto path = std::filesystem::temp_directory_path() / "vla_demo_roundtrip.jsonl";
  save_demonstrations(demos, path);
  EXPECT_EQ(std::filesystem::file_size(sidecar_path(path)),
            8 + 4 + 4 + 8 + (8 + 48 * 48 * 3) * (demos[0].frames.size() + demos[1].frames.size()));
  const auto back = load_demonstrations(path);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].task, demos[i].task);
    EXPECT_EQ(back[i].scene.objects, demos[i].scene.objects);
    EXPECT_EQ(back[i].scene.joints, demos[i].scene.joints);
    EXPECT_EQ(back[i].contact_frame, demos[i].contact_frame);
    EXPECT_EQ(back[i].station_frames, demos[i].station_frames);
    ASSERT_EQ(back[i].frames.size(), demos[i].frames.size());
    for (std::size_t f = 0; f < demos[i].frames.size(); ++f) {
      ASSERT_EQ(back[i].frames[f].joints, demos[i].frames[f].joints);
      ASSERT_EQ(back[i].frames[f].image, demos[i].frames[f].image);
    }
  }
  std::filesystem::resize_file(sidecar_path(path), 100);
  EXPECT_THROW(load_demonstrations(path), vla::IoError);
  std::filesystem::remove(path);
  std::filesystem::remove(sidecar_path(path));
}

TEST(DemoFiles, MissingFile) {
  EXPECT_THROW(load_demonstrations("/nonexistent/demos.jsonl"), vla::IoError);
}
