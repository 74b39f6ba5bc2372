#pragma once

#include <functional>
#include <map>

#include "qpblend/qp.hpp"
#include "qpblend/skills.hpp"
#include "qpblend/weights.hpp"

namespace qpblend {

struct PlanarRobotModel {
  Vec link_lengths;           // N >= 2, all positive
  Vec2 base = Vec2::Zero();

  int dofs() const { return static_cast<int>(link_lengths.size()); }
  double total_reach() const { return link_lengths.sum(); }
};

struct RobotState {
  Vec alpha;          // joint angles
  double gamma = 1.0; // gripper closure in [0,1]
  Vec2 ee = Vec2::Zero();
};

struct SceneConfig {
  Vec2 pick = Vec2::Zero();
  Vec2 place = Vec2::Zero();
  Vec2 object_start = Vec2::Zero();
  double grasp_radius = 0.1;
  double success_tolerance = 0.1;
  int n_steps = 200;
  double duration = 10.0;
  Vec initial_alpha;
  double initial_gamma = 1.0;
};

struct WorldState {
  RobotState robot;
  Vec2 object = Vec2::Zero();
  bool attached = false;
};

struct TrajStep {
  double s = 0.0;
  RobotState robot;
  Vec u;          // realized reduced command (post gripper clamp)
  Vec z_star;     // stacked optimal skill values
  Vec weights;    // diagonal weights w_k(s)
  Vec2 object = Vec2::Zero();
  bool attached = false;
  bool attach_event = false;
  bool detach_event = false;
  double model_ms = 0.0;  // weight evaluation
  double solve_ms = 0.0;  // QP solve
};

struct Trajectory {
  std::vector<TrajStep> steps;
  int dofs = 0;
  std::vector<std::string> skill_ids;
};

// p = base + sum_i L_i (cos th_i, sin th_i), th_i the cumulative angle.
Vec2 fk(const PlanarRobotModel& model, const Vec& alpha);

// Analytic 2xN Jacobian of fk.
Mat jacobian(const PlanarRobotModel& model, const Vec& alpha);

// Explicit Euler step. alpha += alpha_dot dt, gamma clamped to [0,1]. The
// object attaches when gamma < 0.1 within grasp radius of the end effector,
// follows it while attached, and detaches when gamma > 0.9. Throws
// std::invalid_argument on non-finite commands.
WorldState step(const PlanarRobotModel& model, const SceneConfig& scene, const WorldState& in,
                const Vec& alpha_dot, double gamma_dot, double dt);

// How each control space binds to the decision variables of the joint-space QP.
enum class SpaceRole { ee_velocity, gripper_rate };
using SpaceRoles = std::map<std::string, SpaceRole>;

using WeightFn = std::function<WeightMatrix(double)>;

// QP-blended reproduction: at each of n_steps+1 phases, queries every skill at
// the current state, binds ee-velocity spaces through the Jacobian, solves the
// blending QP for (alpha_dot, gamma_dot) and integrates. The last record holds
// the final state and its (unapplied) command.
Trajectory rollout(const WeightFn& weight_fn, const std::vector<SkillPtr>& skills,
                   const BlendStructure& st, const SpaceRoles& roles,
                   const PlanarRobotModel& model, const SceneConfig& scene,
                   const WorldState& initial);

struct TaskReport {
  bool grasp_success = false;
  bool place_success = false;
  double grasp_object_error = -1.0;  // object-to-pick distance at attach, -1 if never attached
  double final_object_to_place = -1.0;
  double final_ee_to_place = -1.0;
  double j_smooth = 0.0;             // max command jump between consecutive steps
  double latency_p50_ms = 0.0;
  double latency_p95_ms = 0.0;
  double latency_max_ms = 0.0;
};

TaskReport eval_task(const Trajectory& traj, const SceneConfig& scene);

}  // namespace qpblend
