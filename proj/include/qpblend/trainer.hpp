#pragma once

#include <cstdint>

#include "qpblend/qp.hpp"
#include "qpblend/skills.hpp"
#include "qpblend/weights.hpp"

namespace qpblend {

struct DemoState {
  Vec alpha;
  double gamma = 1.0;
  Vec2 ee = Vec2::Zero();
};

// One phase-indexed observation: the teacher's executed reduced controls
// (one value per control space) and the skill outputs queried at the
// demonstrated state. The loss target is z_tilde = S * executed.
struct DemoSample {
  double s = 0.0;
  DemoState state;
  Vec executed;       // q-dim, reduced-space layout of the structure
  Vec skill_outputs;  // n-dim, stacked in skill order
};

struct Demonstration {
  std::string task;
  Vec robot_links;
  Vec2 robot_base = Vec2::Zero();
  double duration = 1.0;
  std::vector<ControlSpace> spaces;
  std::vector<SkillConfig> skills;
  std::vector<DemoSample> samples;

  // Structure implied by the recorded spaces/skills/groups (group order =
  // first appearance of the group labels).
  BlendStructure structure() const;
  std::vector<std::vector<int>> groups() const;
  void validate(const BlendStructure& st) const;
};

enum class LossVariant { projected, unprojected };
enum class QpPath { optnet, closed_form };

struct TrainConfig {
  int epochs = 2000;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossVariant loss = LossVariant::projected;
  QpPath path = QpPath::optnet;
  uint64_t seed = 0;
  int phase_stride = 1;  // subsample demo phases by this stride
};

struct LossBreakdown {
  double total = 0.0;
  std::vector<double> per_demo;
  std::vector<std::vector<double>> per_sample;
};

// Projected: ||Pi W (z_tilde - z_star)||^2. Unprojected: ||W (z_tilde - z_star)||^2.
double sample_loss(const Mat& W, const Mat& Pi, const Vec& z_tilde, const Vec& zhat,
                   const Vec& z_star, LossVariant variant);

// Sums sample losses over all demos; the QP is solved (optnet path) or the
// solve is skipped via the projector identity Pi W (zhat - z*) = 0 (closed
// form, where z* is replaced by zhat).
LossBreakdown total_loss(const ThetaParams& theta, const std::vector<Demonstration>& demos,
                         const BlendStructure& st, const ModelArch& arch,
                         const TrainConfig& config);

// Exact gradient of total_loss w.r.t. theta: the direct dW term, the QP
// adjoint (optnet path only; the d-zhat branch is dropped, skill outputs are
// data), then the weight-model reverse pass per sample.
ThetaParams grad_loss(const ThetaParams& theta, const std::vector<Demonstration>& demos,
                      const BlendStructure& st, const ModelArch& arch,
                      const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double total = 0.0;
  std::vector<double> per_demo;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  ThetaParams theta;   // parameters with the lowest recorded loss
  std::vector<EpochRecord> history;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Adaptive-moment gradient descent with a constant rate. Deterministic for
// fixed (theta0, demos, config). Throws NumericalError when the loss exceeds
// 1e6 x the initial loss.
TrainResult train(const ThetaParams& theta0, const std::vector<Demonstration>& demos,
                  const BlendStructure& st, const ModelArch& arch, const TrainConfig& config);

struct BaselineRow {
  int demo = 0;
  int sample = 0;
  double s = 0.0;
  Vec weights;  // per-skill, groups solved independently on the simplex
};

// Non-parametric per-sample schedule: minimizes (1/K_g)||u - sum w_k xi_k||^2
// per group over the probability simplex (projected gradient).
std::vector<BaselineRow> baseline_per_sample(const std::vector<Demonstration>& demos,
                                             const BlendStructure& st);

}  // namespace qpblend
