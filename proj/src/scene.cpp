#include "qpblend/scene.hpp"

#include <map>

namespace qpblend {

namespace {

Vec2 to_vec2(const std::vector<double>& v, const std::string& what) {
  if (v.size() != 2) throw ConfigError("scene: '" + what + "' must have 2 entries");
  return Vec2(v[0], v[1]);
}

}  // namespace

std::vector<SkillPtr> SceneBundle::make_skills() const {
  std::vector<SkillPtr> out;
  out.reserve(skill_configs.size());
  for (const auto& cfg : skill_configs) out.push_back(make_skill(cfg));
  return out;
}

ModelArch SceneBundle::arch(WeightVariant variant, int hidden_dim) const {
  ModelArch a;
  a.variant = variant;
  a.hidden_dim = hidden_dim;
  a.groups = groups;
  for (const auto& sk : structure.skills) a.blocks.push_back(sk.dim);
  a.validate();
  return a;
}

SceneBundle load_scene(const std::string& path) {
  return parse_scene(toml::parse_file(path), path);
}

SceneBundle parse_scene(const toml::Value& doc, const std::string& origin) {
  SceneBundle b;
  b.task_name = doc.contains("task_name") ? doc.str("task_name") : origin;

  const toml::Value& robot = doc.at("robot");
  const auto links = robot.number_array("links");
  if (links.size() < 2) throw ConfigError("scene: robot needs at least 2 links");
  b.model.link_lengths = Eigen::Map<const Vec>(links.data(), links.size());
  for (double l : links)
    if (l <= 0.0) throw ConfigError("scene: link lengths must be positive");
  b.model.base = to_vec2(robot.number_array("base"), "robot.base");
  const auto alpha0 = robot.number_array("initial_joints");
  if (alpha0.size() != links.size())
    throw ConfigError("scene: initial_joints must have one entry per link");
  b.scene.initial_alpha = Eigen::Map<const Vec>(alpha0.data(), alpha0.size());
  b.scene.initial_gamma = robot.number_or("initial_gripper", 1.0);

  const toml::Value& task = doc.at("task");
  b.scene.pick = to_vec2(task.number_array("pick"), "task.pick");
  b.scene.place = to_vec2(task.number_array("place"), "task.place");
  b.scene.object_start = task.contains("object") ? to_vec2(task.number_array("object"), "task.object")
                                                 : b.scene.pick;
  b.scene.duration = task.number_or("duration", 10.0);
  b.scene.n_steps = static_cast<int>(task.number_or("steps", 200));
  const double reach = b.model.total_reach();
  b.scene.grasp_radius = task.number_or("grasp_radius", 0.05 * reach);
  b.scene.success_tolerance = task.number_or("success_tolerance", 0.05 * reach);
  if (b.scene.duration <= 0.0 || b.scene.n_steps < 1)
    throw ConfigError("scene: duration and steps must be positive");
  if ((b.scene.pick - b.model.base).norm() >= reach)
    throw ConfigError("scene: pick position is out of reach");
  if ((b.scene.place - b.model.base).norm() >= reach)
    throw ConfigError("scene: place position is out of reach");

  for (const auto& sp : doc.at("spaces").as_array("spaces")) {
    ControlSpace cs{sp.str("id"), static_cast<int>(sp.number("dim"))};
    const std::string role = sp.str("role");
    if (role == "ee_velocity")
      b.roles[cs.id] = SpaceRole::ee_velocity;
    else if (role == "gripper_rate")
      b.roles[cs.id] = SpaceRole::gripper_rate;
    else
      throw ConfigError("scene: space '" + cs.id + "' has unknown role '" + role + "'");
    b.spaces.push_back(std::move(cs));
  }

  std::vector<SkillSlot> slots;
  std::map<std::string, int> space_dim;
  for (const auto& sp : b.spaces) space_dim[sp.id] = sp.dim;
  for (const auto& sk : doc.at("skills").as_array("skills")) {
    SkillConfig cfg;
    cfg.id = sk.str("id");
    cfg.type = sk.str("type");
    cfg.space = sk.str("space");
    cfg.group = sk.str("group");
    cfg.params = nlohmann::json::object();
    if (cfg.type == "ds_attractor") {
      // Targets may name a task point or give coordinates.
      Vec2 target;
      const toml::Value& t = sk.at("target");
      if (t.is_string()) {
        const std::string& name = t.as_string("target");
        if (name == "pick")
          target = b.scene.pick;
        else if (name == "place")
          target = b.scene.place;
        else
          throw ConfigError("scene: skill '" + cfg.id + "' target '" + name + "' unknown");
      } else {
        std::vector<double> coords;
        for (const auto& v : t.as_array("target")) coords.push_back(v.as_number("target"));
        target = to_vec2(coords, "target");
      }
      cfg.params["target"] = {target.x(), target.y()};
      cfg.params["gain"] = sk.number_or("gain", 1.0);
      cfg.params["vmax"] = sk.number_or("vmax", 1.0);
    } else if (cfg.type == "gripper") {
      cfg.params["direction"] = sk.str("direction");
      cfg.params["rate"] = sk.number_or("rate", 2.0);
    } else if (cfg.type == "playback") {
      auto knots = nlohmann::json::array();
      for (const auto& knot : sk.at("knots").as_array("knots")) {
        nlohmann::json k;
        k["s"] = knot.number("s");
        k["value"] = knot.number_array("value");
        knots.push_back(std::move(k));
      }
      cfg.params["knots"] = std::move(knots);
    } else {
      throw ConfigError("scene: skill '" + cfg.id + "' has unknown type '" + cfg.type + "'");
    }
    auto it = space_dim.find(cfg.space);
    if (it == space_dim.end())
      throw ConfigError("scene: skill '" + cfg.id + "' references undeclared space '" +
                        cfg.space + "'");
    slots.push_back({cfg.id, cfg.space, it->second});
    b.skill_configs.push_back(std::move(cfg));
  }

  // Groups from labels, in first-appearance order.
  std::map<std::string, int> group_index;
  for (size_t k = 0; k < b.skill_configs.size(); ++k) {
    const std::string& label = b.skill_configs[k].group;
    auto it = group_index.find(label);
    if (it == group_index.end()) {
      group_index[label] = static_cast<int>(b.groups.size());
      b.groups.push_back({static_cast<int>(k)});
    } else {
      b.groups[it->second].push_back(static_cast<int>(k));
    }
  }

  b.structure = build_structure(b.spaces, slots, b.groups);

  if (doc.contains("teacher")) {
    const toml::Value& teacher = doc.at("teacher");
    b.gains.arm_gain = teacher.number_or("arm_gain", b.gains.arm_gain);
    b.gains.arm_rate_cap = teacher.number_or("arm_rate_cap", b.gains.arm_rate_cap);
    b.gains.gripper_gain = teacher.number_or("gripper_gain", b.gains.gripper_gain);
    b.gains.gripper_rate_cap = teacher.number_or("gripper_rate_cap", b.gains.gripper_rate_cap);
    const double default_hw = teacher.number_or("half_width", 0.02);

    std::map<std::string, int> skill_index;
    for (size_t k = 0; k < b.skill_configs.size(); ++k)
      skill_index[b.skill_configs[k].id] = static_cast<int>(k);

    b.schedule.per_group.resize(b.groups.size());
    for (const auto& seg : teacher.at("schedule").as_array("schedule")) {
      ScheduleEntry e;
      const std::string skill_id = seg.str("skill");
      auto it = skill_index.find(skill_id);
      if (it == skill_index.end())
        throw ConfigError("scene: schedule references unknown skill '" + skill_id + "'");
      e.skill = it->second;
      e.from = seg.number("from");
      e.to = seg.number("to");
      e.half_width = seg.number_or("half_width", default_hw);
      b.schedule.per_group[b.structure.group_of(e.skill)].push_back(e);
    }
    b.schedule.validate(b.structure);
    b.has_schedule = true;
  }

  return b;
}

}  // namespace qpblend
