#include "qpblend/planar.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace qpblend {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double idx = p * (v.size() - 1);
  const size_t lo = static_cast<size_t>(idx);
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (idx - lo) * (v[hi] - v[lo]);
}

}  // namespace

Vec2 fk(const PlanarRobotModel& model, const Vec& alpha) {
  if (alpha.size() != model.dofs())
    throw std::invalid_argument("fk: alpha has wrong number of joints");
  Vec2 p = model.base;
  double th = 0.0;
  for (int i = 0; i < model.dofs(); ++i) {
    th += alpha[i];
    p += model.link_lengths[i] * Vec2(std::cos(th), std::sin(th));
  }
  return p;
}

Mat jacobian(const PlanarRobotModel& model, const Vec& alpha) {
  if (alpha.size() != model.dofs())
    throw std::invalid_argument("jacobian: alpha has wrong number of joints");
  const int n = model.dofs();
  Mat J = Mat::Zero(2, n);
  double th = 0.0;
  std::vector<Vec2> link(n);
  for (int i = 0; i < n; ++i) {
    th += alpha[i];
    link[i] = model.link_lengths[i] * Vec2(-std::sin(th), std::cos(th));
  }
  Vec2 acc = Vec2::Zero();
  for (int j = n - 1; j >= 0; --j) {
    acc += link[j];
    J.col(j) = acc;
  }
  return J;
}

WorldState step(const PlanarRobotModel& model, const SceneConfig& scene, const WorldState& in,
                const Vec& alpha_dot, double gamma_dot, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("step: dt must be positive");
  if (!alpha_dot.allFinite() || !std::isfinite(gamma_dot))
    throw std::invalid_argument("step: non-finite command");
  WorldState out = in;
  out.robot.alpha += alpha_dot * dt;
  out.robot.gamma = std::clamp(in.robot.gamma + gamma_dot * dt, 0.0, 1.0);
  out.robot.ee = fk(model, out.robot.alpha);
  if (out.attached) {
    if (out.robot.gamma > 0.9) {
      out.attached = false;
      out.object = out.robot.ee;
    } else {
      out.object = out.robot.ee;
    }
  } else if (out.robot.gamma < 0.1 &&
             (out.robot.ee - out.object).norm() <= scene.grasp_radius) {
    out.attached = true;
    out.object = out.robot.ee;
  }
  return out;
}

Trajectory rollout(const WeightFn& weight_fn, const std::vector<SkillPtr>& skills,
                   const BlendStructure& st, const SpaceRoles& roles,
                   const PlanarRobotModel& model, const SceneConfig& scene,
                   const WorldState& initial) {
  if (skills.size() != st.skills.size())
    throw ConfigError("rollout: skill count does not match the structure");
  for (size_t k = 0; k < skills.size(); ++k) {
    if (skills[k]->id() != st.skills[k].id || skills[k]->space() != st.skills[k].space)
      throw ConfigError("rollout: skill '" + skills[k]->id() +
                        "' does not match structure slot " + std::to_string(k));
  }
  int gripper_cols = 0;
  for (const auto& sp : st.spaces) {
    const auto it = roles.find(sp.id);
    if (it == roles.end()) throw ConfigError("rollout: no role for space '" + sp.id + "'");
    if (it->second == SpaceRole::gripper_rate) {
      if (sp.dim != 1) throw ConfigError("rollout: gripper space must be 1-D");
      ++gripper_cols;
    }
  }
  if (gripper_cols != 1) throw ConfigError("rollout: exactly one gripper space required");

  const int N = model.dofs();
  const int m = N + 1;  // decision: joint velocities then the gripper rate
  const double dt = scene.duration / scene.n_steps;

  Trajectory traj;
  traj.dofs = N;
  for (const auto& sk : st.skills) traj.skill_ids.push_back(sk.id);
  traj.steps.reserve(scene.n_steps + 1);

  WorldState world = initial;
  world.robot.ee = fk(model, world.robot.alpha);

  for (int i = 0; i <= scene.n_steps; ++i) {
    const double s = static_cast<double>(i) / scene.n_steps;
    TrajStep rec;
    rec.s = s;

    SkillQueryState q{world.robot.ee, world.robot.gamma, s, scene.duration};
    Vec zhat(st.n);
    for (size_t k = 0; k < skills.size(); ++k) {
      const SkillOutput out = skills[k]->query(q);
      if (out.value.size() != st.skills[k].dim)
        throw ConfigError("rollout: skill '" + skills[k]->id() + "' returned wrong dim");
      zhat.segment(st.block_offsets[k], st.skills[k].dim) = out.value;
    }

    const auto t_model = Clock::now();
    const WeightMatrix W = weight_fn(s);
    rec.model_ms = ms_since(t_model);

    Mat B = Mat::Zero(st.q, m);
    const Mat J = jacobian(model, world.robot.alpha);
    for (size_t c = 0; c < st.spaces.size(); ++c) {
      if (roles.at(st.spaces[c].id) == SpaceRole::ee_velocity) {
        if (st.spaces[c].dim != 2) throw ConfigError("rollout: ee space must be 2-D");
        B.block(st.space_offsets[c], 0, 2, N) = J;
      } else {
        B(st.space_offsets[c], N) = 1.0;
      }
    }

    const auto t_solve = Clock::now();
    QPSolution sol;
    try {
      sol = solve_blend(W.W, zhat, st, B);
    } catch (const std::exception& e) {
      throw NumericalError("rollout: QP failed at step " + std::to_string(i) + ": " + e.what());
    }
    rec.solve_ms = ms_since(t_solve);

    const Vec alpha_dot = sol.u_star.head(N);
    const double gamma_cmd = sol.u_star[N];

    rec.robot = world.robot;
    rec.z_star = sol.z_star;
    rec.weights = W.diag_weights;
    rec.object = world.object;
    rec.attached = world.attached;

    if (i < scene.n_steps) {
      const WorldState next = step(model, scene, world, alpha_dot, gamma_cmd, dt);
      rec.u = sol.u_star;
      rec.u[N] = (next.robot.gamma - world.robot.gamma) / dt;  // realized rate
      rec.attach_event = next.attached && !world.attached;
      rec.detach_event = !next.attached && world.attached;
      world = next;
    } else {
      // Final command is not applied; record it clamped the same way the
      // integrator would realize it so the command trace stays uniform.
      rec.u = sol.u_star;
      rec.u[N] =
          (std::clamp(world.robot.gamma + gamma_cmd * dt, 0.0, 1.0) - world.robot.gamma) / dt;
    }
    traj.steps.push_back(std::move(rec));
  }
  return traj;
}

TaskReport eval_task(const Trajectory& traj, const SceneConfig& scene) {
  TaskReport rep;
  if (traj.steps.empty()) return rep;

  for (size_t i = 0; i < traj.steps.size(); ++i) {
    if (traj.steps[i].attach_event) {
      const double err = (traj.steps[i].object - scene.pick).norm();
      if (rep.grasp_object_error < 0.0 || err < rep.grasp_object_error)
        rep.grasp_object_error = err;
    }
  }
  rep.grasp_success =
      rep.grasp_object_error >= 0.0 && rep.grasp_object_error <= scene.success_tolerance;

  const TrajStep& last = traj.steps.back();
  rep.final_object_to_place = (last.object - scene.place).norm();
  rep.final_ee_to_place = (last.robot.ee - scene.place).norm();
  rep.place_success = rep.final_object_to_place <= scene.success_tolerance;

  for (size_t i = 0; i + 1 < traj.steps.size(); ++i)
    rep.j_smooth = std::max(rep.j_smooth, (traj.steps[i + 1].u - traj.steps[i].u).norm());

  std::vector<double> lat;
  lat.reserve(traj.steps.size());
  for (const auto& st : traj.steps) lat.push_back(st.model_ms + st.solve_ms);
  rep.latency_p50_ms = percentile(lat, 0.50);
  rep.latency_p95_ms = percentile(lat, 0.95);
  rep.latency_max_ms = lat.empty() ? 0.0 : *std::max_element(lat.begin(), lat.end());
  return rep;
}

}  // namespace qpblend
