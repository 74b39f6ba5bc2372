#pragma once

#include "qpblend/planar.hpp"
#include "qpblend/trainer.hpp"

namespace qpblend {

// Ground-truth activation: per group, intervals of one active skill with a
// cosine cross-fade of the given half-width at each interior boundary.
struct ScheduleEntry {
  double from = 0.0;
  double to = 1.0;
  int skill = 0;  // structure skill index
  double half_width = 0.02;
};

struct ActivationSchedule {
  std::vector<std::vector<ScheduleEntry>> per_group;  // indexed like structure groups

  // Per-skill activations at phase s; each group's activations sum to 1.
  Vec activations(const BlendStructure& st, double s) const;
  void validate(const BlendStructure& st) const;
};

// Returns a one-hot variant (zero half-widths) for hard-switch baselines.
ActivationSchedule hard_switch(const ActivationSchedule& schedule);

// Rate-capped proportional teacher. The gains differ from the library skills'
// DS gains; the caps sit at the skills' own rate limits. The gripper gain is
// stiff (1/dt puts the closure exactly on its limit in one step) so
// demonstrations reach gamma 0/1 bit-exactly.
struct TeacherGains {
  double arm_gain = 2.0;
  double arm_rate_cap = 1.0;
  double gripper_gain = 20.0;
  double gripper_rate_cap = 2.0;
};

// Rolls out proportional controllers toward the schedule's active targets,
// cross-faded per the schedule, realizing arm commands through the damped
// Jacobian least-squares map. Records executed reduced controls per step.
Trajectory scripted_demo(const PlanarRobotModel& model, const SceneConfig& scene,
                         const BlendStructure& st, const std::vector<SkillConfig>& skill_cfgs,
                         const ActivationSchedule& schedule, const TeacherGains& gains);

// Queries every skill at each demonstrated state and pairs the outputs with
// the executed controls; the result is exactly what the loss consumes.
Demonstration annotate(const Trajectory& raw, const std::vector<SkillPtr>& skills,
                       const BlendStructure& st, const std::vector<SkillConfig>& skill_cfgs,
                       const std::vector<ControlSpace>& spaces, const PlanarRobotModel& model,
                       double duration, const std::string& task);

}  // namespace qpblend
