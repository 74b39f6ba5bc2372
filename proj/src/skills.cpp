#include "qpblend/skills.hpp"

#include <algorithm>
#include <cmath>

namespace qpblend {

namespace {

class DsAttractorSkill final : public Skill {
 public:
  DsAttractorSkill(std::string id, std::string space, Vec2 target, double gain, double vmax)
      : id_(std::move(id)), space_(std::move(space)), target_(target), gain_(gain), vmax_(vmax) {
    if (gain_ <= 0.0 || vmax_ <= 0.0)
      throw std::invalid_argument("ds_attractor: gain and vmax must be positive");
  }

  const std::string& id() const override { return id_; }
  const std::string& space() const override { return space_; }
  int dim() const override { return 2; }

  SkillOutput query(const SkillQueryState& state) const override {
    Vec2 v = -gain_ * (state.ee_position - target_);
    const double speed = v.norm();
    if (speed > vmax_) v *= vmax_ / speed;
    return {id_, space_, v};
  }

  const Vec2& target() const { return target_; }
  double gain() const { return gain_; }
  double vmax() const { return vmax_; }

 private:
  std::string id_;
  std::string space_;
  Vec2 target_;
  double gain_;
  double vmax_;
};

class GripperSkill final : public Skill {
 public:
  GripperSkill(std::string id, std::string space, bool open, double rate)
      : id_(std::move(id)), space_(std::move(space)), open_(open), rate_(rate) {
    if (rate_ <= 0.0) throw std::invalid_argument("gripper: rate must be positive");
  }

  const std::string& id() const override { return id_; }
  const std::string& space() const override { return space_; }
  int dim() const override { return 1; }

  SkillOutput query(const SkillQueryState& state) const override {
    const double g = std::clamp(state.gripper, 0.0, 1.0);
    Vec v(1);
    if (open_)
      v[0] = g < 1.0 ? rate_ : 0.0;
    else
      v[0] = g > 0.0 ? -rate_ : 0.0;
    return {id_, space_, v};
  }

 private:
  std::string id_;
  std::string space_;
  bool open_;
  double rate_;
};

class PlaybackSkill final : public Skill {
 public:
  PlaybackSkill(std::string id, std::string space, std::vector<double> s,
                std::vector<Vec> value)
      : id_(std::move(id)), space_(std::move(space)), s_(std::move(s)), value_(std::move(value)) {
    if (s_.empty() || s_.size() != value_.size())
      throw std::invalid_argument("playback: empty or inconsistent reference");
    for (size_t i = 1; i < s_.size(); ++i) {
      if (s_[i] <= s_[i - 1]) throw std::invalid_argument("playback: knots must be increasing");
      if (value_[i].size() != value_[0].size())
        throw std::invalid_argument("playback: knot value dims differ");
    }
  }

  const std::string& id() const override { return id_; }
  const std::string& space() const override { return space_; }
  int dim() const override { return static_cast<int>(value_[0].size()); }

  SkillOutput query(const SkillQueryState& state) const override {
    const double s = state.time_fraction;
    Vec v;
    if (s <= s_.front()) {
      v = value_.front();
    } else if (s >= s_.back()) {
      v = value_.back();
    } else {
      const auto it = std::upper_bound(s_.begin(), s_.end(), s);
      const size_t i = static_cast<size_t>(it - s_.begin());
      const double t = (s - s_[i - 1]) / (s_[i] - s_[i - 1]);
      v = (1.0 - t) * value_[i - 1] + t * value_[i];
    }
    return {id_, space_, v};
  }

 private:
  std::string id_;
  std::string space_;
  std::vector<double> s_;
  std::vector<Vec> value_;
};

}  // namespace

SkillPtr make_ds_attractor(std::string id, std::string space, Vec2 target, double gain,
                           double vmax) {
  return std::make_shared<DsAttractorSkill>(std::move(id), std::move(space), target, gain, vmax);
}

SkillPtr make_gripper(std::string id, std::string space, bool open, double rate) {
  return std::make_shared<GripperSkill>(std::move(id), std::move(space), open, rate);
}

SkillPtr make_playback(std::string id, std::string space, std::vector<double> knots_s,
                       std::vector<Vec> knots_value) {
  return std::make_shared<PlaybackSkill>(std::move(id), std::move(space), std::move(knots_s),
                                         std::move(knots_value));
}

SkillPtr adapt_skill(const SkillPtr& skill, const Vec2& translation, double rotation) {
  const auto* ds = dynamic_cast<const DsAttractorSkill*>(skill.get());
  if (!ds)
    throw std::invalid_argument("adapt_skill: '" + skill->id() + "' is not an adaptable skill");
  Eigen::Rotation2Dd rot(rotation);
  const Vec2 target = rot * ds->target() + translation;
  return make_ds_attractor(ds->id(), ds->space(), target, ds->gain(), ds->vmax());
}

SkillPtr make_skill(const SkillConfig& cfg) {
  try {
    if (cfg.type == "ds_attractor") {
      const auto& t = cfg.params.at("target");
      return make_ds_attractor(cfg.id, cfg.space, Vec2(t.at(0), t.at(1)),
                               cfg.params.at("gain"), cfg.params.at("vmax"));
    }
    if (cfg.type == "gripper") {
      const std::string dir = cfg.params.at("direction");
      if (dir != "open" && dir != "close")
        throw ConfigError("skill '" + cfg.id + "': direction must be open or close");
      return make_gripper(cfg.id, cfg.space, dir == "open", cfg.params.at("rate"));
    }
    if (cfg.type == "playback") {
      std::vector<double> s;
      std::vector<Vec> vals;
      for (const auto& knot : cfg.params.at("knots")) {
        s.push_back(knot.at("s"));
        const auto& raw = knot.at("value");
        Vec v(raw.size());
        for (size_t i = 0; i < raw.size(); ++i) v[i] = raw.at(i);
        vals.push_back(v);
      }
      return make_playback(cfg.id, cfg.space, std::move(s), std::move(vals));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("skill '" + cfg.id + "': bad params: " + e.what());
  }
  throw ConfigError("skill '" + cfg.id + "': unknown type '" + cfg.type + "'");
}

}  // namespace qpblend
