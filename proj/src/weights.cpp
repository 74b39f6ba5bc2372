#include "qpblend/weights.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

namespace qpblend {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vec group_softmax(const Vec& logits, const std::vector<std::vector<int>>& groups) {
  Vec w = Vec::Zero(logits.size());
  for (const auto& g : groups) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k : g) mx = std::max(mx, logits[k]);
    double denom = 0.0;
    for (int k : g) denom += std::exp(logits[k] - mx);
    for (int k : g) w[k] = std::exp(logits[k] - mx) / denom;
  }
  return w;
}

// Intermediates of one contraction step, kept for the reverse pass.
struct StepTrace {
  Mat raw_u;
  Mat T;
  double norm_T = 0.0;
  double v_logit = 0.0;
  double v = 0.0;
  Mat K;
  Mat V;         // eigenvectors of the leading block Y
  Vec sqrt_lam;  // sqrt of its clamped eigenvalues
  Mat R;         // Y^{1/2}
};

struct ForwardTrace {
  FeatureResult feat;
  Vec logits;
  Vec w;
  std::vector<StepTrace> steps;
  WeightMatrix out;
};

Mat reshape_row_major(const Vec& flat, int rows, int cols) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = flat[i * cols + j];
  return m;
}

Vec flatten_row_major(const Mat& m) {
  Vec flat(m.rows() * m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) flat[i * m.cols() + j] = m(i, j);
  return flat;
}

void check_theta_shapes(const ThetaParams& theta, const ModelArch& arch) {
  const int h = arch.hidden_dim;
  const int K = arch.num_skills();
  if (theta.feature_w.size() != h || theta.feature_b.size() != h ||
      theta.softmax_w.rows() != K || theta.softmax_w.cols() != h ||
      theta.softmax_b.size() != K)
    throw ConfigError("theta shapes do not match the architecture");
  if (arch.variant == WeightVariant::full) {
    if (static_cast<int>(theta.contraction.size()) != K - 1)
      throw ConfigError("full variant needs K-1 contraction heads");
    for (int m = 2; m <= K; ++m) {
      const auto& head = theta.contraction[m - 2];
      const int entries = arch.step_rows(m) * arch.step_cols(m);
      if (head.u_w.rows() != entries || head.u_w.cols() != h ||
          head.u_b.size() != entries || head.v_w.size() != h)
        throw ConfigError("contraction head " + std::to_string(m) + " has wrong shape");
    }
  }
}

WeightMatrix assemble_diag(const Vec& w, const ModelArch& arch, bool clamped) {
  const int n = arch.total_dim();
  WeightMatrix out;
  out.W = Mat::Zero(n, n);
  out.diag_weights = w;
  out.blocks = arch.blocks;
  out.phase_clamped = clamped;
  for (int k = 0; k < arch.num_skills(); ++k) {
    const int off = arch.block_offset(k);
    out.W.block(off, off, arch.blocks[k], arch.blocks[k]) =
        w[k] * Mat::Identity(arch.blocks[k], arch.blocks[k]);
  }
  return out;
}

ForwardTrace forward_traced(const ThetaParams& theta, double s, const ModelArch& arch) {
  ForwardTrace tr;
  tr.feat = features(theta, s);
  tr.logits = theta.softmax_w * tr.feat.h + theta.softmax_b;
  tr.w = group_softmax(tr.logits, arch.groups);
  tr.out = assemble_diag(tr.w, arch, tr.feat.clamped);
  if (arch.variant != WeightVariant::full) return tr;

  const int K = arch.num_skills();
  for (int m = 2; m <= K; ++m) {
    StepTrace st;
    const int rows = arch.step_rows(m);
    const int cols = arch.step_cols(m);
    const auto& head = theta.contraction[m - 2];

    const Mat Y = tr.out.W.topLeftCorner(rows, rows);
    Eigen::SelfAdjointEigenSolver<Mat> eig(Y);
    if (eig.info() != Eigen::Success)
      throw NumericalError("forward_full: eigendecomposition failed at step " +
                           std::to_string(m));
    if (eig.eigenvalues().minCoeff() < -1e-9)
      throw NumericalError("forward_full: leading block lost positive semidefiniteness");
    st.V = eig.eigenvectors();
    st.sqrt_lam = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    st.R = st.V * st.sqrt_lam.asDiagonal() * st.V.transpose();

    st.raw_u = reshape_row_major(head.u_w * tr.feat.h + head.u_b, rows, cols);
    st.v_logit = head.v_w.dot(tr.feat.h) + head.v_b;
    st.v = sigmoid(st.v_logit);
    st.T = st.raw_u.array().tanh();
    st.norm_T = st.T.norm();
    st.K = st.norm_T > 0.0 ? Mat((st.v / st.norm_T) * st.T) : Mat::Zero(rows, cols);

    const int off = rows;
    const Mat X = st.R * st.K * std::sqrt(tr.w[m - 1]);
    tr.out.W.block(0, off, rows, cols) = X;
    tr.out.W.block(off, 0, cols, rows) = X.transpose();
    tr.steps.push_back(std::move(st));
  }
  return tr;
}

// Solves R G + G R = rhs in the eigenbasis of R = V diag(sqrt_lam) V^T.
Mat lyapunov_solve(const Mat& V, const Vec& sqrt_lam, const Mat& rhs) {
  Mat A = V.transpose() * rhs * V;
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j)
      A(i, j) /= std::max(sqrt_lam[i] + sqrt_lam[j], 1e-8);
  return V * A * V.transpose();
}

}  // namespace

int ModelArch::total_dim() const {
  int n = 0;
  for (int b : blocks) n += b;
  return n;
}

int ModelArch::block_offset(int k) const {
  int off = 0;
  for (int i = 0; i < k; ++i) off += blocks[i];
  return off;
}

void ModelArch::validate() const {
  if (hidden_dim < 1) throw ConfigError("ModelArch: hidden_dim must be >= 1");
  if (blocks.empty()) throw ConfigError("ModelArch: no blocks");
  for (int b : blocks)
    if (b < 1) throw ConfigError("ModelArch: block dims must be >= 1");
  if (variant == WeightVariant::full && num_skills() < 2)
    throw ConfigError("ModelArch: full variant requires at least 2 skills");
  std::vector<int> hits(blocks.size(), 0);
  for (const auto& g : groups)
    for (int k : g) {
      if (k < 0 || k >= num_skills()) throw ConfigError("ModelArch: group index out of range");
      ++hits[k];
    }
  for (int h : hits)
    if (h != 1) throw ConfigError("ModelArch: groups must partition the skills");
}

FeatureResult features(const ThetaParams& theta, double s) {
  FeatureResult out;
  out.clamped = s < 0.0 || s > 1.0;
  const double sc = std::clamp(s, 0.0, 1.0);
  out.h = (theta.feature_w * sc + theta.feature_b).array().tanh();
  return out;
}

WeightMatrix forward_diag(const ThetaParams& theta, double s, const ModelArch& arch) {
  check_theta_shapes(theta, arch);
  const FeatureResult f = features(theta, s);
  const Vec logits = theta.softmax_w * f.h + theta.softmax_b;
  return assemble_diag(group_softmax(logits, arch.groups), arch, f.clamped);
}

Mat contraction_matrix(const Mat& raw_u, double v_logit) {
  if (raw_u.size() == 0) throw std::invalid_argument("contraction_matrix: empty raw matrix");
  if (!raw_u.allFinite() || !std::isfinite(v_logit))
    throw std::invalid_argument("contraction_matrix: non-finite input");
  const Mat T = raw_u.array().tanh();
  const double norm = T.norm();
  if (norm == 0.0) return Mat::Zero(raw_u.rows(), raw_u.cols());
  return (sigmoid(v_logit) / norm) * T;
}

Mat psd_sqrt(const Mat& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("psd_sqrt: matrix must be square");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("psd_sqrt: input is asymmetric beyond 1e-9");
  Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrize(m));
  if (eig.info() != Eigen::Success) throw NumericalError("psd_sqrt: eigendecomposition failed");
  if (eig.eigenvalues().minCoeff() < -1e-9)
    throw std::invalid_argument("psd_sqrt: eigenvalue below -1e-9, matrix is not PSD");
  const Vec sq = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return symmetrize(eig.eigenvectors() * sq.asDiagonal() * eig.eigenvectors().transpose());
}

WeightMatrix forward_full(const ThetaParams& theta, double s, const ModelArch& arch) {
  if (arch.variant != WeightVariant::full)
    throw ConfigError("forward_full: architecture is not the full variant");
  check_theta_shapes(theta, arch);
  return forward_traced(theta, s, arch).out;
}

WeightMatrix forward(const ThetaParams& theta, double s, const ModelArch& arch) {
  return arch.variant == WeightVariant::full ? forward_full(theta, s, arch)
                                             : forward_diag(theta, s, arch);
}

ThetaParams backward(const ThetaParams& theta, double s, const ModelArch& arch,
                     const Mat& grad_W) {
  check_theta_shapes(theta, arch);
  const int n = arch.total_dim();
  if (grad_W.rows() != n || grad_W.cols() != n)
    throw std::invalid_argument("backward: grad_W must be n x n");

  const ForwardTrace tr = forward_traced(theta, s, arch);
  ThetaParams grad = zero_params(arch);
  const int K = arch.num_skills();
  const Vec& h = tr.feat.h;

  Mat G = symmetrize(grad_W);           // running accumulation over the assembly
  Vec gw = Vec::Zero(K);                // d/d w_k
  Vec gh = Vec::Zero(arch.hidden_dim);  // d/d h

  for (int m = K; m >= 2 && arch.variant == WeightVariant::full; --m) {
    const auto& st = tr.steps[m - 2];
    const auto& head = theta.contraction[m - 2];
    const int rows = arch.step_rows(m);
    const int cols = arch.step_cols(m);
    const int off = rows;
    const double sqw = std::sqrt(tr.w[m - 1]);

    const Mat GX = G.block(0, off, rows, cols) + G.block(off, 0, cols, rows).transpose();
    const Mat G_R = GX * st.K.transpose() * sqw;
    const Mat G_K = st.R * GX * sqw;
    gw[m - 1] += (st.R * st.K).cwiseProduct(GX).sum() / (2.0 * sqw);

    // psd_sqrt adjoint: Lyapunov solve in the eigenbasis of R.
    G.topLeftCorner(rows, rows) += lyapunov_solve(st.V, st.sqrt_lam, symmetrize(G_R));

    double g_vlogit = 0.0;
    Mat G_rawU = Mat::Zero(rows, cols);
    if (st.norm_T > 0.0) {
      const Mat N = st.T / st.norm_T;
      const double g_v = N.cwiseProduct(G_K).sum();
      g_vlogit = g_v * st.v * (1.0 - st.v);
      const Mat G_N = st.v * G_K;
      const Mat G_T = (G_N - G_N.cwiseProduct(N).sum() * N) / st.norm_T;
      G_rawU = G_T.cwiseProduct(Mat::Ones(rows, cols) - st.T.cwiseProduct(st.T));
    }

    const Vec gu = flatten_row_major(G_rawU);
    auto& ghead = grad.contraction[m - 2];
    ghead.u_w += gu * h.transpose();
    ghead.u_b += gu;
    gh += head.u_w.transpose() * gu;
    ghead.v_w += g_vlogit * h;
    ghead.v_b += g_vlogit;
    gh += g_vlogit * head.v_w;
    if (!gh.allFinite() || !gu.allFinite())
      throw NumericalError("backward: non-finite gradient in contraction step " +
                           std::to_string(m));
  }

  for (int k = 0; k < K; ++k) {
    const int off = arch.block_offset(k);
    gw[k] += G.block(off, off, arch.blocks[k], arch.blocks[k]).trace();
  }
  if (!gw.allFinite()) throw NumericalError("backward: non-finite gradient in diagonal blocks");

  Vec gl = Vec::Zero(K);
  for (const auto& g : arch.groups) {
    double dot = 0.0;
    for (int k : g) dot += tr.w[k] * gw[k];
    for (int k : g) gl[k] = tr.w[k] * (gw[k] - dot);
  }
  grad.softmax_w += gl * h.transpose();
  grad.softmax_b += gl;
  gh += theta.softmax_w.transpose() * gl;
  if (!gl.allFinite()) throw NumericalError("backward: non-finite gradient in softmax");

  const double sc = std::clamp(s, 0.0, 1.0);
  const Vec gpre = gh.cwiseProduct(Vec::Ones(arch.hidden_dim) - h.cwiseProduct(h));
  grad.feature_w += gpre * sc;
  grad.feature_b += gpre;

  if (!to_flat(grad).allFinite())
    throw NumericalError("backward: non-finite gradient in feature layer");
  return grad;
}

ThetaParams init_full_from_diag(const ThetaParams& theta_diag, const ModelArch& arch_full,
                                uint64_t seed) {
  if (arch_full.variant != WeightVariant::full)
    throw ConfigError("init_full_from_diag: target architecture must be full");
  arch_full.validate();
  ModelArch diag_view = arch_full;
  diag_view.variant = WeightVariant::diagonal;
  check_theta_shapes(theta_diag, diag_view);

  ThetaParams theta = zero_params(arch_full);
  theta.feature_w = theta_diag.feature_w;
  theta.feature_b = theta_diag.feature_b;
  theta.softmax_w = theta_diag.softmax_w;
  theta.softmax_b = theta_diag.softmax_b;
  // Tiny noise on the U biases keeps the Frobenius normalization away from its
  // T = 0 singularity so the off-diagonal heads receive gradient from the start;
  // the off-diagonal magnitude stays pinned at sigmoid(-4) by the v-logits.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (auto& head : theta.contraction) {
    for (int i = 0; i < head.u_b.size(); ++i) head.u_b[i] = noise(rng);
    head.v_b = -4.0;
  }
  return theta;
}

ThetaParams zero_params(const ModelArch& arch) {
  ThetaParams t;
  t.feature_w = Vec::Zero(arch.hidden_dim);
  t.feature_b = Vec::Zero(arch.hidden_dim);
  t.softmax_w = Mat::Zero(arch.num_skills(), arch.hidden_dim);
  t.softmax_b = Vec::Zero(arch.num_skills());
  if (arch.variant == WeightVariant::full) {
    for (int m = 2; m <= arch.num_skills(); ++m) {
      ContractionHead head;
      const int entries = arch.step_rows(m) * arch.step_cols(m);
      head.u_w = Mat::Zero(entries, arch.hidden_dim);
      head.u_b = Vec::Zero(entries);
      head.v_w = Vec::Zero(arch.hidden_dim);
      head.v_b = 0.0;
      t.contraction.push_back(std::move(head));
    }
  }
  return t;
}

ThetaParams random_init(const ModelArch& arch, uint64_t seed) {
  arch.validate();
  ThetaParams t = zero_params(arch);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < t.feature_w.size(); ++i) t.feature_w[i] = 3.0 * gauss(rng);
  for (int i = 0; i < t.feature_b.size(); ++i) t.feature_b[i] = 1.5 * gauss(rng);
  for (int i = 0; i < t.softmax_w.rows(); ++i)
    for (int j = 0; j < t.softmax_w.cols(); ++j) t.softmax_w(i, j) = 0.1 * gauss(rng);
  for (auto& head : t.contraction) {
    for (int i = 0; i < head.u_w.rows(); ++i)
      for (int j = 0; j < head.u_w.cols(); ++j) head.u_w(i, j) = 0.1 * gauss(rng);
    for (int i = 0; i < head.u_b.size(); ++i) head.u_b[i] = 0.05 * gauss(rng);
    head.v_b = -2.0;
  }
  return t;
}

double lipschitz_bound(const ThetaParams& theta, const ModelArch& arch) {
  check_theta_shapes(theta, arch);
  const int K = arch.num_skills();
  const int H = arch.hidden_dim;
  const double a_norm = theta.feature_w.norm();  // bounds ||dh/ds||
  const double h_norm = std::sqrt(static_cast<double>(H));

  // Per-group softmax: Jacobian spectral norm <= 1/2.
  double sum_sq = 0.0;
  for (const auto& g : arch.groups) {
    Mat rows(g.size(), H);
    for (size_t i = 0; i < g.size(); ++i) rows.row(i) = theta.softmax_w.row(g[i]);
    const double op = rows.jacobiSvd().singularValues()(0);
    sum_sq += op * op;
  }
  const double L_w = 0.5 * a_norm * std::sqrt(sum_sq);  // ||dw/ds||_2

  int max_block = 1;
  for (int b : arch.blocks) max_block = std::max(max_block, b);
  double L = std::sqrt(static_cast<double>(max_block)) * L_w;  // diagonal part
  if (arch.variant != WeightVariant::full) return L;

  // Interval bounds used by the off-diagonal chain.
  double logit_span = 0.0;  // bound on max_k |logit_k|
  for (int k = 0; k < K; ++k)
    logit_span = std::max(logit_span,
                          theta.softmax_w.row(k).norm() * h_norm + std::abs(theta.softmax_b[k]));
  double max_group = 1.0;
  for (const auto& g : arch.groups) max_group = std::max(max_group, double(g.size()));
  const double w_floor = std::exp(-2.0 * logit_span) / max_group;
  const double n_total = arch.total_dim();

  double L_lead = L;            // Lipschitz bound of the assembled leading block
  double lam_floor = w_floor;   // lower bound on eigenvalues of the leading block
  for (int m = 2; m <= K; ++m) {
    const auto& head = theta.contraction[m - 2];
    const double u_op = head.u_w.jacobiSvd().singularValues()(0);
    const double v_span = head.v_w.norm() * h_norm + std::abs(head.v_b);
    const double v_max = sigmoid(v_span);

    // Floor on ||T(s)||_F over [0,1] from a fine grid refined by T's own
    // Lipschitz constant. Infinite bound when T can reach 0 (W then has a
    // non-differentiable point and no finite Lipschitz constant exists).
    const double L_T = u_op * a_norm;
    const int grid = 2048;
    double t_floor = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= grid; ++i) {
      const Vec h = features(theta, double(i) / grid).h;
      const Mat T = reshape_row_major(head.u_w * h + head.u_b, arch.step_rows(m),
                                      arch.step_cols(m))
                        .array()
                        .tanh();
      t_floor = std::min(t_floor, T.norm());
    }
    t_floor -= L_T / grid;
    if (!(t_floor > 0.0)) return std::numeric_limits<double>::infinity();

    const double dv = 0.25 * head.v_w.norm() * a_norm;
    const double dT = u_op * a_norm;
    const double dK = dv + v_max * 2.0 * dT / t_floor;
    const double R_op = std::sqrt(n_total);              // ||R||_2 <= sqrt(trace W)
    const double dR = L_lead / (2.0 * std::sqrt(lam_floor));
    const double dsqw = L_w / (2.0 * std::sqrt(w_floor));
    const double dX = dR * v_max + R_op * dK + R_op * v_max * dsqw;

    L_lead += std::sqrt(double(arch.blocks[m - 1])) * L_w + 2.0 * dX;
    lam_floor = std::min(lam_floor, w_floor) * (1.0 - v_max);
    if (!(lam_floor > 0.0)) return std::numeric_limits<double>::infinity();
  }
  return L_lead;
}

int param_count(const ModelArch& arch) {
  int c = 2 * arch.hidden_dim + arch.num_skills() * (arch.hidden_dim + 1);
  if (arch.variant == WeightVariant::full) {
    for (int m = 2; m <= arch.num_skills(); ++m) {
      const int entries = arch.step_rows(m) * arch.step_cols(m);
      c += entries * (arch.hidden_dim + 1) + arch.hidden_dim + 1;
    }
  }
  return c;
}

Vec to_flat(const ThetaParams& theta) {
  std::vector<double> out;
  auto push_vec = [&](const Vec& v) {
    for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  };
  push_vec(theta.feature_w);
  push_vec(theta.feature_b);
  push_vec(flatten_row_major(theta.softmax_w));
  push_vec(theta.softmax_b);
  for (const auto& head : theta.contraction) {
    push_vec(flatten_row_major(head.u_w));
    push_vec(head.u_b);
    push_vec(head.v_w);
    out.push_back(head.v_b);
  }
  return Eigen::Map<Vec>(out.data(), out.size());
}

ThetaParams from_flat(const ModelArch& arch, const Vec& flat) {
  if (flat.size() != param_count(arch))
    throw ConfigError("from_flat: expected " + std::to_string(param_count(arch)) +
                      " parameters, got " + std::to_string(flat.size()));
  ThetaParams t = zero_params(arch);
  int pos = 0;
  auto take_vec = [&](Vec& v) {
    for (int i = 0; i < v.size(); ++i) v[i] = flat[pos++];
  };
  auto take_mat = [&](Mat& m) {
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) m(i, j) = flat[pos++];
  };
  take_vec(t.feature_w);
  take_vec(t.feature_b);
  take_mat(t.softmax_w);
  take_vec(t.softmax_b);
  for (auto& head : t.contraction) {
    take_mat(head.u_w);
    take_vec(head.u_b);
    take_vec(head.v_w);
    head.v_b = flat[pos++];
  }
  return t;
}

}  // namespace qpblend
