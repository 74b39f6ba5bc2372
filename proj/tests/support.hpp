// Shared fixtures and independent oracles for the test suites. Oracles here
// must stay independent of the implementation paths they check.
#pragma once

#include <random>

#include "qpblend/scene.hpp"

namespace qpblend::testing {

inline std::mt19937_64 rng_for(uint64_t seed) { return std::mt19937_64(seed); }

inline Mat random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline Vec random_vector(std::mt19937_64& rng, int n, double lo = -0.5, double hi = 0.5) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

// Symmetric PSD matrix with a controlled spectrum in [lmin, lmax].
inline Mat random_spd(std::mt19937_64& rng, int n, double lmin, double lmax) {
  const Mat a = random_matrix(rng, n, n);
  const Eigen::HouseholderQR<Mat> qr(a);
  const Mat Q = qr.householderQ();
  std::uniform_real_distribution<double> u(lmin, lmax);
  Vec lam(n);
  for (int i = 0; i < n; ++i) lam[i] = u(rng);
  return Mat(Q * lam.asDiagonal() * Q.transpose());
}

// Random blend structure: 1-3 spaces of dim 1-3, 1-3 skills per space.
inline BlendStructure random_structure(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nspaces(1, 3), dim(1, 3), nskills(1, 3);
  std::vector<ControlSpace> spaces;
  std::vector<SkillSlot> skills;
  const int S = nspaces(rng);
  for (int c = 0; c < S; ++c) spaces.push_back({"space" + std::to_string(c), dim(rng)});
  for (int c = 0; c < S; ++c) {
    const int count = nskills(rng);
    for (int k = 0; k < count; ++k)
      skills.push_back({"s" + std::to_string(c) + "_" + std::to_string(k), spaces[c].id,
                        spaces[c].dim});
  }
  // One group per space (the grouping used throughout the experiments).
  std::vector<std::vector<int>> groups(S);
  for (size_t k = 0; k < skills.size(); ++k)
    for (int c = 0; c < S; ++c)
      if (skills[k].space == spaces[c].id) groups[c].push_back(static_cast<int>(k));
  return build_structure(spaces, skills, groups);
}

// Independent dense-KKT oracle: solves [W P^T; P 0][z; nu] = [W zhat; r]
// by full-pivot LU on the stacked system.
inline Vec dense_kkt_solve(const Mat& W, const Vec& zhat, const Mat& P, const Vec& r) {
  const int n = static_cast<int>(W.rows());
  const int p = static_cast<int>(P.rows());
  Mat kkt = Mat::Zero(n + p, n + p);
  kkt.topLeftCorner(n, n) = W;
  if (p > 0) {
    kkt.topRightCorner(n, p) = P.transpose();
    kkt.bottomLeftCorner(p, n) = P;
  }
  Vec rhs(n + p);
  rhs.head(n) = W * zhat;
  rhs.tail(p) = r;
  const Vec sol = kkt.fullPivLu().solve(rhs);
  return sol.head(n);
}

// The pick-and-place fixture used across suites; mirrors scenes/pickplace_4dof.toml.
inline SceneBundle reference_bundle() {
  const std::string toml_text = R"(
task_name = "pickplace_4dof"
[robot]
links = [0.5, 0.5, 0.5, 0.5]
base = [0.0, 0.0]
initial_joints = [1.8, -0.5, -0.4, -0.3]
initial_gripper = 1.0
[task]
pick = [1.2, 0.8]
place = [-0.9, 1.1]
duration = 10.0
steps = 200
[[spaces]]
id = "ee_vel"
dim = 2
role = "ee_velocity"
[[spaces]]
id = "gripper_vel"
dim = 1
role = "gripper_rate"
[[skills]]
id = "pick"
type = "ds_attractor"
space = "ee_vel"
group = "arm"
target = "pick"
gain = 1.0
vmax = 1.0
[[skills]]
id = "place"
type = "ds_attractor"
space = "ee_vel"
group = "arm"
target = "place"
gain = 1.0
vmax = 1.0
[[skills]]
id = "open"
type = "gripper"
space = "gripper_vel"
group = "hand"
direction = "open"
rate = 2.0
[[skills]]
id = "close"
type = "gripper"
space = "gripper_vel"
group = "hand"
direction = "close"
rate = 2.0
[teacher]
arm_gain = 2.0
arm_rate_cap = 1.0
gripper_gain = 20.0
gripper_rate_cap = 2.0
half_width = 0.02
[[teacher.schedule]]
skill = "pick"
from = 0.0
to = 0.45
[[teacher.schedule]]
skill = "place"
from = 0.45
to = 1.0
[[teacher.schedule]]
skill = "open"
from = 0.0
to = 0.35
[[teacher.schedule]]
skill = "close"
from = 0.35
to = 0.85
[[teacher.schedule]]
skill = "open"
from = 0.85
to = 1.0
)";
  return parse_scene(toml::parse(toml_text, "reference"), "reference");
}

inline Demonstration reference_demo(const SceneBundle& bundle) {
  const Trajectory raw = scripted_demo(bundle.model, bundle.scene, bundle.structure,
                                       bundle.skill_configs, bundle.schedule, bundle.gains);
  return annotate(raw, bundle.make_skills(), bundle.structure, bundle.skill_configs,
                  bundle.spaces, bundle.model, bundle.scene.duration, bundle.task_name);
}

// Synthetic demonstration on an arbitrary structure: random executed controls
// and skill outputs on a phase grid. Geometry-free; for loss/gradient tests.
inline Demonstration synthetic_demo(std::mt19937_64& rng, const BlendStructure& st,
                                    int samples) {
  Demonstration demo;
  demo.task = "synthetic";
  demo.robot_links = Vec::Ones(2);
  demo.duration = 1.0;
  demo.spaces = st.spaces;
  for (size_t k = 0; k < st.skills.size(); ++k) {
    SkillConfig cfg;
    cfg.id = st.skills[k].id;
    cfg.type = "synthetic";
    cfg.space = st.skills[k].space;
    cfg.group = "g" + std::to_string(st.group_of(static_cast<int>(k)));
    cfg.params = nlohmann::json::object();
    demo.skills.push_back(std::move(cfg));
  }
  for (int i = 0; i < samples; ++i) {
    DemoSample smp;
    smp.s = samples == 1 ? 0.0 : static_cast<double>(i) / (samples - 1);
    smp.state.alpha = Vec::Zero(2);
    smp.state.gamma = 0.5;
    smp.executed = random_vector(rng, st.q, -1.0, 1.0);
    smp.skill_outputs = random_vector(rng, st.n, -1.0, 1.0);
    demo.samples.push_back(std::move(smp));
  }
  return demo;
}

// Central finite difference of f along the i-th coordinate of x.
template <typename F>
double central_diff(const F& f, Vec x, int i, double h) {
  x[i] += h;
  const double hi = f(x);
  x[i] -= 2 * h;
  const double lo = f(x);
  return (hi - lo) / (2 * h);
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

inline double rel_err_vec(const Vec& got, const Vec& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

inline ModelArch pickplace_arch(WeightVariant variant, int hidden = 32) {
  ModelArch arch;
  arch.variant = variant;
  arch.hidden_dim = hidden;
  arch.groups = {{0, 1}, {2, 3}};
  arch.blocks = {2, 2, 1, 1};
  arch.validate();
  return arch;
}

}  // namespace qpblend::testing
