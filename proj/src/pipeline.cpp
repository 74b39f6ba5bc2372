#include "qpblend/pipeline.hpp"

#include <cmath>
#include <numbers>

namespace qpblend {

namespace {

// Cosine ramp of the boundary at b with half-width hw: 0 before, 1 after.
double ramp_in(double s, double b, double hw) {
  if (hw <= 0.0) return s >= b ? 1.0 : 0.0;
  if (s <= b - hw) return 0.0;
  if (s >= b + hw) return 1.0;
  return 0.5 * (1.0 - std::cos(std::numbers::pi * (s - b + hw) / (2.0 * hw)));
}

}  // namespace

void ActivationSchedule::validate(const BlendStructure& st) const {
  if (per_group.size() != st.groups.size())
    throw ConfigError("schedule: expected " + std::to_string(st.groups.size()) + " groups");
  for (size_t g = 0; g < per_group.size(); ++g) {
    const auto& entries = per_group[g];
    if (entries.empty()) throw ConfigError("schedule: group has no entries");
    double cursor = 0.0;
    for (const auto& e : entries) {
      if (std::abs(e.from - cursor) > 1e-9)
        throw ConfigError("schedule: group intervals leave a gap at s=" + std::to_string(cursor));
      if (e.to <= e.from) throw ConfigError("schedule: empty interval");
      bool in_group = false;
      for (int k : st.groups[g]) in_group |= (k == e.skill);
      if (!in_group)
        throw ConfigError("schedule: skill index " + std::to_string(e.skill) +
                          " is not in group " + std::to_string(g));
      cursor = e.to;
    }
    if (std::abs(cursor - 1.0) > 1e-9)
      throw ConfigError("schedule: group intervals must cover [0, 1]");
  }
}

Vec ActivationSchedule::activations(const BlendStructure& st, double s) const {
  Vec act = Vec::Zero(st.skills.size());
  for (size_t g = 0; g < per_group.size(); ++g) {
    const auto& entries = per_group[g];
    // Entry weight = ramp at its start boundary minus ramp at its end boundary.
    for (size_t i = 0; i < entries.size(); ++i) {
      const double w_in = i == 0 ? 1.0 : ramp_in(s, entries[i].from, entries[i].half_width);
      const double w_out =
          i + 1 == entries.size() ? 0.0 : ramp_in(s, entries[i + 1].from, entries[i + 1].half_width);
      act[entries[i].skill] += w_in - w_out;
    }
  }
  return act;
}

ActivationSchedule hard_switch(const ActivationSchedule& schedule) {
  ActivationSchedule hs = schedule;
  for (auto& group : hs.per_group)
    for (auto& e : group) e.half_width = 0.0;
  return hs;
}

Trajectory scripted_demo(const PlanarRobotModel& model, const SceneConfig& scene,
                         const BlendStructure& st, const std::vector<SkillConfig>& skill_cfgs,
                         const ActivationSchedule& schedule, const TeacherGains& gains) {
  schedule.validate(st);
  if (skill_cfgs.size() != st.skills.size())
    throw ConfigError("scripted_demo: skill config count does not match the structure");

  // Per-skill proportional targets the teacher drives toward.
  struct Target {
    bool arm = false;
    Vec2 point = Vec2::Zero();
    double gamma = 0.0;
  };
  std::vector<Target> targets(skill_cfgs.size());
  for (size_t k = 0; k < skill_cfgs.size(); ++k) {
    const auto& cfg = skill_cfgs[k];
    if (cfg.type == "ds_attractor") {
      targets[k].arm = true;
      targets[k].point = Vec2(cfg.params.at("target").at(0), cfg.params.at("target").at(1));
    } else if (cfg.type == "gripper") {
      targets[k].gamma = cfg.params.at("direction") == "open" ? 1.0 : 0.0;
    } else {
      throw ConfigError("scripted_demo: no teacher controller for skill type '" + cfg.type +
                        "'");
    }
    const double reach = model.total_reach();
    if (targets[k].arm && (targets[k].point - model.base).norm() >= reach)
      throw ConfigError("scripted_demo: target of skill '" + cfg.id + "' is out of reach");
  }

  const double dt = scene.duration / scene.n_steps;
  Trajectory traj;
  traj.dofs = model.dofs();
  for (const auto& sk : st.skills) traj.skill_ids.push_back(sk.id);

  WorldState world;
  world.robot.alpha = scene.initial_alpha;
  world.robot.gamma = scene.initial_gamma;
  world.robot.ee = fk(model, world.robot.alpha);
  world.object = scene.object_start;

  for (int i = 0; i <= scene.n_steps; ++i) {
    const double s = static_cast<double>(i) / scene.n_steps;
    const Vec act = schedule.activations(st, s);

    // Blend the proportional commands per control space.
    Vec u_cmd = Vec::Zero(st.q);
    for (size_t k = 0; k < skill_cfgs.size(); ++k) {
      if (act[k] == 0.0) continue;
      const int off = st.space_offset_of_skill(static_cast<int>(k));
      if (targets[k].arm) {
        Vec2 v = gains.arm_gain * (targets[k].point - world.robot.ee);
        const double speed = v.norm();
        if (speed > gains.arm_rate_cap) v *= gains.arm_rate_cap / speed;
        u_cmd.segment(off, 2) += act[k] * v;
      } else {
        const double raw = gains.gripper_gain * (targets[k].gamma - world.robot.gamma);
        u_cmd[off] += act[k] * std::clamp(raw, -gains.gripper_rate_cap, gains.gripper_rate_cap);
      }
    }

    // Realize arm commands by damped least squares; the gripper integrates
    // with clamping. The record keeps the teacher's actual commands.
    const Mat J = jacobian(model, world.robot.alpha);
    Vec alpha_dot = Vec::Zero(model.dofs());
    double gamma_cmd = 0.0;
    for (size_t c = 0; c < st.spaces.size(); ++c) {
      const int off = st.space_offsets[c];
      if (st.spaces[c].dim == 2) {
        const Mat M = J.transpose() * J + kDefaultEps * Mat::Identity(model.dofs(), model.dofs());
        alpha_dot = M.ldlt().solve(J.transpose() * u_cmd.segment(off, 2));
      } else {
        gamma_cmd = u_cmd[off];
      }
    }

    TrajStep rec;
    rec.s = s;
    rec.robot = world.robot;
    rec.weights = act;
    rec.object = world.object;
    rec.attached = world.attached;

    if (i < scene.n_steps) {
      const WorldState next = step(model, scene, world, alpha_dot, gamma_cmd, dt);
      rec.attach_event = next.attached && !world.attached;
      rec.detach_event = !next.attached && world.attached;
      world = next;
    }
    rec.u = u_cmd;
    rec.z_star = st.S * u_cmd;
    traj.steps.push_back(std::move(rec));
  }
  return traj;
}

Demonstration annotate(const Trajectory& raw, const std::vector<SkillPtr>& skills,
                       const BlendStructure& st, const std::vector<SkillConfig>& skill_cfgs,
                       const std::vector<ControlSpace>& spaces, const PlanarRobotModel& model,
                       double duration, const std::string& task) {
  if (skills.size() != st.skills.size())
    throw ConfigError("annotate: skill count does not match the structure");
  for (size_t k = 0; k < skills.size(); ++k)
    if (skills[k]->space() != st.skills[k].space || skills[k]->dim() != st.skills[k].dim)
      throw ConfigError("annotate: skill '" + skills[k]->id() + "' does not match slot " +
                        std::to_string(k));

  Demonstration demo;
  demo.task = task;
  demo.robot_links = model.link_lengths;
  demo.robot_base = model.base;
  demo.duration = duration;
  demo.spaces = spaces;
  demo.skills = skill_cfgs;

  for (const auto& stp : raw.steps) {
    if (stp.u.size() != st.q)
      throw ConfigError("annotate: trajectory commands are not in the reduced space");
    DemoSample smp;
    smp.s = stp.s;
    smp.state.alpha = stp.robot.alpha;
    smp.state.gamma = stp.robot.gamma;
    smp.state.ee = stp.robot.ee;
    smp.executed = stp.u;
    smp.skill_outputs = Vec(st.n);
    SkillQueryState q{stp.robot.ee, stp.robot.gamma, stp.s, duration};
    for (size_t k = 0; k < skills.size(); ++k)
      smp.skill_outputs.segment(st.block_offsets[k], st.skills[k].dim) = skills[k]->query(q).value;
    demo.samples.push_back(std::move(smp));
  }
  return demo;
}

}  // namespace qpblend
