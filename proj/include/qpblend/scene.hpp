#pragma once

#include "qpblend/pipeline.hpp"
#include "qpblend/toml.hpp"

namespace qpblend {

// Everything a scene file describes: robot, task geometry, the skill library
// with its control spaces and groups, the QP structure they induce, and the
// teacher schedule used to script demonstrations.
struct SceneBundle {
  PlanarRobotModel model;
  SceneConfig scene;
  std::vector<ControlSpace> spaces;
  SpaceRoles roles;
  std::vector<SkillConfig> skill_configs;
  std::vector<std::vector<int>> groups;
  BlendStructure structure;
  ActivationSchedule schedule;  // may be empty when the file has no [teacher]
  bool has_schedule = false;
  TeacherGains gains;
  std::string task_name;

  std::vector<SkillPtr> make_skills() const;
  ModelArch arch(WeightVariant variant, int hidden_dim = 32) const;
};

SceneBundle load_scene(const std::string& path);
SceneBundle parse_scene(const toml::Value& doc, const std::string& origin);

}  // namespace qpblend
