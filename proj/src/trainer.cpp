#include "qpblend/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>

namespace qpblend {

namespace {

struct SampleRef {
  int demo = 0;
  int index = 0;
};

std::vector<SampleRef> collect_samples(const std::vector<Demonstration>& demos, int stride) {
  if (stride < 1) throw ConfigError("phase_stride must be >= 1");
  std::vector<SampleRef> refs;
  for (size_t d = 0; d < demos.size(); ++d)
    for (size_t i = 0; i < demos[d].samples.size(); i += stride)
      refs.push_back({static_cast<int>(d), static_cast<int>(i)});
  return refs;
}

}  // namespace

std::vector<std::vector<int>> Demonstration::groups() const {
  std::vector<std::string> order;
  std::map<std::string, int> index;
  std::vector<std::vector<int>> out;
  for (size_t k = 0; k < skills.size(); ++k) {
    auto it = index.find(skills[k].group);
    if (it == index.end()) {
      index[skills[k].group] = static_cast<int>(out.size());
      out.push_back({static_cast<int>(k)});
    } else {
      out[it->second].push_back(static_cast<int>(k));
    }
  }
  return out;
}

BlendStructure Demonstration::structure() const {
  std::vector<SkillSlot> slots;
  std::map<std::string, int> space_dims;
  for (const auto& sp : spaces) space_dims[sp.id] = sp.dim;
  for (const auto& sk : skills) {
    auto it = space_dims.find(sk.space);
    if (it == space_dims.end())
      throw ConfigError("demonstration: skill '" + sk.id + "' references unknown space");
    slots.push_back({sk.id, sk.space, it->second});
  }
  return build_structure(spaces, slots, groups());
}

void Demonstration::validate(const BlendStructure& st) const {
  if (samples.size() < 2) throw ConfigError("demonstration needs at least 2 samples");
  double prev = -1.0;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& smp = samples[i];
    if (smp.executed.size() != st.q || smp.skill_outputs.size() != st.n)
      throw ConfigError("demonstration sample " + std::to_string(i) + " has wrong dims");
    if (smp.s < prev)
      throw ConfigError("demonstration phases must be nondecreasing");
    prev = smp.s;
  }
  if (samples.front().s > 1e-9 || samples.back().s < 1.0 - 1e-9)
    throw ConfigError("demonstration phases must span [0, 1]");
}

double sample_loss(const Mat& W, const Mat& Pi, const Vec& z_tilde, const Vec& zhat,
                   const Vec& z_star, LossVariant variant) {
  if (z_tilde.size() != W.rows() || zhat.size() != W.rows() || z_star.size() != W.rows())
    throw std::invalid_argument("sample_loss: dimension mismatch");
  const Vec r = z_tilde - z_star;
  const Vec v = variant == LossVariant::projected ? Vec(Pi * (W * r)) : Vec(W * r);
  return v.squaredNorm();
}

namespace {

struct SampleEval {
  double loss = 0.0;
  ThetaParams grad;  // defined only when with_grad
};

SampleEval eval_sample(const ThetaParams& theta, const DemoSample& smp,
                       const BlendStructure& st, const Mat& Pi, const ModelArch& arch,
                       const TrainConfig& config, bool with_grad) {
  SampleEval out;
  const WeightMatrix wm = forward(theta, smp.s, arch);
  const Vec z_tilde = st.S * smp.executed;
  const Vec& zhat = smp.skill_outputs;

  if (config.path == QpPath::closed_form) {
    const Vec r = z_tilde - zhat;
    const Vec pir = config.loss == LossVariant::projected ? Vec(Pi * (wm.W * r)) : Vec(wm.W * r);
    out.loss = pir.squaredNorm();
    if (with_grad) {
      const Vec lead = config.loss == LossVariant::projected ? Vec(Pi * pir) : pir;
      out.grad = backward(theta, smp.s, arch, symmetrize(2.0 * lead * r.transpose()));
    }
    return out;
  }

  const QPSolution sol = solve_blend(wm.W, zhat, st);
  const Vec r = z_tilde - sol.z_star;
  const Vec wr = wm.W * r;
  const Vec pir = config.loss == LossVariant::projected ? Vec(Pi * wr) : wr;
  out.loss = pir.squaredNorm();
  if (with_grad) {
    // Direct dependence of ||A W r||^2 on W (A = Pi or I, idempotent).
    const Vec lead = config.loss == LossVariant::projected ? Vec(Pi * pir) : pir;
    Mat GW = symmetrize(2.0 * lead * r.transpose());
    // Dependence through z*: d loss/d z* = -2 W A A W r, mapped to u* by S.
    const Vec gbar = st.S.transpose() * (-2.0 * (wm.W * lead));
    const AdjointResult adj =
        solve_adjoint(sol, wm.W, zhat, st, std::nullopt, kDefaultEps, gbar);
    GW += adj.grad_W;  // the grad_zhat branch is dropped: skill outputs are data
    out.grad = backward(theta, smp.s, arch, GW);
  }
  return out;
}

void accumulate(ThetaParams& into, const ThetaParams& add) {
  into.feature_w += add.feature_w;
  into.feature_b += add.feature_b;
  into.softmax_w += add.softmax_w;
  into.softmax_b += add.softmax_b;
  for (size_t i = 0; i < into.contraction.size(); ++i) {
    into.contraction[i].u_w += add.contraction[i].u_w;
    into.contraction[i].u_b += add.contraction[i].u_b;
    into.contraction[i].v_w += add.contraction[i].v_w;
    into.contraction[i].v_b += add.contraction[i].v_b;
  }
}

struct BatchEval {
  LossBreakdown breakdown;
  ThetaParams grad;
};

BatchEval eval_batch(const ThetaParams& theta, const std::vector<Demonstration>& demos,
                     const BlendStructure& st, const ModelArch& arch,
                     const TrainConfig& config, bool with_grad) {
  const Mat Pi = nullspace_projector(st);
  const auto refs = collect_samples(demos, config.phase_stride);
  std::vector<SampleEval> evals(refs.size());
  std::string failure;
  std::mutex failure_mu;
  parallel_for(static_cast<int>(refs.size()), [&](int i) {
    try {
      evals[i] = eval_sample(theta, demos[refs[i].demo].samples[refs[i].index], st, Pi, arch,
                             config, with_grad);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (failure.empty())
        failure = "sample " + std::to_string(refs[i].index) + " of demo " +
                  std::to_string(refs[i].demo) + ": " + e.what();
    }
  });
  if (!failure.empty()) throw NumericalError("loss evaluation failed at " + failure);

  BatchEval out;
  out.breakdown.per_demo.assign(demos.size(), 0.0);
  out.breakdown.per_sample.resize(demos.size());
  if (with_grad) out.grad = zero_params(arch);
  for (size_t i = 0; i < refs.size(); ++i) {  // index order: deterministic reduction
    out.breakdown.total += evals[i].loss;
    out.breakdown.per_demo[refs[i].demo] += evals[i].loss;
    out.breakdown.per_sample[refs[i].demo].push_back(evals[i].loss);
    if (with_grad) accumulate(out.grad, evals[i].grad);
  }
  if (with_grad && !to_flat(out.grad).allFinite())
    throw NumericalError("grad_loss: non-finite gradient");
  return out;
}

}  // namespace

LossBreakdown total_loss(const ThetaParams& theta, const std::vector<Demonstration>& demos,
                         const BlendStructure& st, const ModelArch& arch,
                         const TrainConfig& config) {
  return eval_batch(theta, demos, st, arch, config, false).breakdown;
}

ThetaParams grad_loss(const ThetaParams& theta, const std::vector<Demonstration>& demos,
                      const BlendStructure& st, const ModelArch& arch,
                      const TrainConfig& config) {
  return eval_batch(theta, demos, st, arch, config, true).grad;
}

TrainResult train(const ThetaParams& theta0, const std::vector<Demonstration>& demos,
                  const BlendStructure& st, const ModelArch& arch, const TrainConfig& config) {
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (config.learning_rate <= 0.0) throw ConfigError("train: learning rate must be positive");

  using Clock = std::chrono::steady_clock;
  Vec flat = to_flat(theta0);
  Vec m = Vec::Zero(flat.size());
  Vec v = Vec::Zero(flat.size());

  TrainResult result;
  result.theta = theta0;

  double best = std::numeric_limits<double>::infinity();
  double initial = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const ThetaParams theta = from_flat(arch, flat);
    const BatchEval ev = eval_batch(theta, demos, st, arch, config, true);
    const Vec g = to_flat(ev.grad);

    if (epoch == 0) initial = ev.breakdown.total;
    if (ev.breakdown.total > 1e6 * std::max(initial, 1e-300))
      throw NumericalError("train: diverged at epoch " + std::to_string(epoch) + " (loss " +
                           std::to_string(ev.breakdown.total) + ", initial " +
                           std::to_string(initial) + ")");
    if (ev.breakdown.total < best) {
      best = ev.breakdown.total;
      result.theta = theta;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.total = ev.breakdown.total;
    rec.per_demo = ev.breakdown.per_demo;
    rec.grad_norm = g.norm();

    // Adam with bias correction.
    const double b1t = 1.0 - std::pow(config.beta1, epoch + 1);
    const double b2t = 1.0 - std::pow(config.beta2, epoch + 1);
    for (int i = 0; i < flat.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      flat[i] -= config.learning_rate * (m[i] / b1t) / (std::sqrt(v[i] / b2t) + config.adam_eps);
    }

    rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    result.history.push_back(std::move(rec));
  }

  // Post-update loss of the last iterate; keep it if it is the best seen.
  const ThetaParams theta_last = from_flat(arch, flat);
  const double last = total_loss(theta_last, demos, st, arch, config).total;
  if (last < best) {
    best = last;
    result.theta = theta_last;
  }
  result.initial_loss = initial;
  result.final_loss = best;
  return result;
}

namespace {

// Euclidean projection onto the probability simplex (sort-based).
Vec project_simplex(const Vec& y) {
  const int n = static_cast<int>(y.size());
  std::vector<double> u(y.data(), y.data() + n);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, tau = 0.0;
  int rho = 0;
  for (int i = 0; i < n; ++i) {
    css += u[i];
    const double t = (css - 1.0) / (i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      tau = t;
    }
  }
  (void)rho;
  return (y.array() - tau).max(0.0);
}

}  // namespace

std::vector<BaselineRow> baseline_per_sample(const std::vector<Demonstration>& demos,
                                             const BlendStructure& st) {
  if (demos.empty()) throw ConfigError("baseline_per_sample: no demonstrations");
  for (const auto& d : demos)
    if (d.samples.empty()) throw ConfigError("baseline_per_sample: empty demonstration");

  const int K = static_cast<int>(st.skills.size());
  std::vector<BaselineRow> rows;
  for (size_t d = 0; d < demos.size(); ++d) {
    for (size_t i = 0; i < demos[d].samples.size(); ++i) {
      const auto& smp = demos[d].samples[i];
      BaselineRow row;
      row.demo = static_cast<int>(d);
      row.sample = static_cast<int>(i);
      row.s = smp.s;
      row.weights = Vec::Zero(K);

      for (const auto& g : st.groups) {
        // The convex-combination solution needs every skill of a group on one space.
        for (int k : g)
          if (st.skill_space[k] != st.skill_space[g[0]])
            throw ConfigError("baseline_per_sample: group mixes control spaces");
        const int dim = st.skills[g[0]].dim;
        const Vec u = smp.executed.segment(st.space_offset_of_skill(g[0]), dim);
        Mat Xi(dim, g.size());
        for (size_t c = 0; c < g.size(); ++c)
          Xi.col(c) = smp.skill_outputs.segment(st.block_offsets[g[c]], dim);

        Vec w = Vec::Constant(g.size(), 1.0 / g.size());
        const Mat H = Xi.transpose() * Xi;
        const double lip = std::max(2.0 * H.operatorNorm(), 1e-12);
        for (int it = 0; it < 500; ++it) {
          const Vec grad = 2.0 * (H * w - Xi.transpose() * u);
          const Vec next = project_simplex(w - grad / lip);
          if ((next - w).lpNorm<Eigen::Infinity>() < 1e-12) {
            w = next;
            break;
          }
          w = next;
        }
        for (size_t c = 0; c < g.size(); ++c) row.weights[g[c]] = w[c];
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace qpblend
