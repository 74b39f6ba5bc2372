#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "qpblend/common.hpp"

namespace qpblend {

// State snapshot a skill may condition on.
struct SkillQueryState {
  Vec2 ee_position = Vec2::Zero();
  double gripper = 1.0;        // closure in [0,1], 0 = closed, 1 = open
  double time_fraction = 0.0;  // phase s
  double total_duration = 1.0; // T, seconds
};

struct SkillOutput {
  std::string skill_id;
  std::string space_id;
  Vec value;
};

// Black-box generator of desired control values. Implementations are
// immutable after construction; query is pure.
class Skill {
 public:
  virtual ~Skill() = default;
  virtual const std::string& id() const = 0;
  virtual const std::string& space() const = 0;
  virtual int dim() const = 0;
  virtual SkillOutput query(const SkillQueryState& state) const = 0;
};

using SkillPtr = std::shared_ptr<const Skill>;

// Point-attractor dynamical system: v = -gain (p - target), speed capped at
// vmax. Globally asymptotically stable toward the target.
SkillPtr make_ds_attractor(std::string id, std::string space, Vec2 target, double gain,
                           double vmax);

// Constant-rate gripper skill, zero at the relevant travel limit.
SkillPtr make_gripper(std::string id, std::string space, bool open, double rate);

// Piecewise-linear playback of a reference over normalized time; the value is
// interpolated at the query's time_fraction.
SkillPtr make_playback(std::string id, std::string space, std::vector<double> knots_s,
                       std::vector<Vec> knots_value);

// Rigidly transforms a DS attractor skill: target' = R(angle) target + translation.
// Throws std::invalid_argument for non-adaptable skills.
SkillPtr adapt_skill(const SkillPtr& skill, const Vec2& translation, double rotation);

// Serializable skill description used in scene files and demonstration
// documents; targets are stored resolved (coordinates, not scene references).
struct SkillConfig {
  std::string id;
  std::string type;   // "ds_attractor" | "gripper" | "playback"
  std::string space;
  std::string group;  // softmax group label
  nlohmann::json params;
};

SkillPtr make_skill(const SkillConfig& cfg);

}  // namespace qpblend
