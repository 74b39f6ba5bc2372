#pragma once

#include <cstdint>
#include <vector>

#include "qpblend/common.hpp"

namespace qpblend {

enum class WeightVariant { diagonal, full };

// Shape of the phase -> W(s) network: one hidden tanh layer on the scalar
// phase, a per-group softmax head for the diagonal scalars, and (full variant)
// one contraction head per recursion step m = 2..K.
struct ModelArch {
  WeightVariant variant = WeightVariant::diagonal;
  int hidden_dim = 32;
  std::vector<std::vector<int>> groups;  // softmax partition of skill indices
  std::vector<int> blocks;               // block dims n_k

  int num_skills() const { return static_cast<int>(blocks.size()); }
  int total_dim() const;
  int block_offset(int k) const;
  // Contraction step m (1-based skill index 2..K) couples the leading
  // sum(blocks[0..m-2]) rows with the blocks[m-1] columns of the new block.
  int step_rows(int m) const { return block_offset(m - 1); }
  int step_cols(int m) const { return blocks[m - 1]; }
  void validate() const;
};

struct ContractionHead {
  Mat u_w;   // (rows*cols) x hidden
  Vec u_b;   // rows*cols
  Vec v_w;   // hidden
  double v_b = 0.0;
};

// All learnable parameters theta. Doubles as the gradient container.
struct ThetaParams {
  Vec feature_w;  // hidden
  Vec feature_b;  // hidden
  Mat softmax_w;  // K x hidden
  Vec softmax_b;  // K
  std::vector<ContractionHead> contraction;  // K-1 heads for the full variant
};

struct WeightMatrix {
  Mat W;             // n x n symmetric PSD
  Vec diag_weights;  // the K softmax scalars w_k
  std::vector<int> blocks;
  bool phase_clamped = false;  // s fell outside [0,1] and was clamped
};

struct FeatureResult {
  Vec h;
  bool clamped = false;
};

// h = tanh(feature_w * s + feature_b); s outside [0,1] is clamped and flagged.
FeatureResult features(const ThetaParams& theta, double s);

// Block-diagonal weights: per-group softmax scalars times identity blocks.
WeightMatrix forward_diag(const ThetaParams& theta, double s, const ModelArch& arch);

// K = sigmoid(v_logit) * tanh(raw_u) / ||tanh(raw_u)||_F; zero matrix when
// tanh(raw_u) vanishes. Guarantees ||K||_2 <= ||K||_F < 1.
Mat contraction_matrix(const Mat& raw_u, double v_logit);

// Symmetric PSD square root by eigendecomposition, eigenvalues clamped at 0.
// Throws std::invalid_argument for asymmetry beyond 1e-9 or an eigenvalue
// below -1e-9.
Mat psd_sqrt(const Mat& m);

// Full weights: diagonal blocks as forward_diag, then for m = 2..K the new
// off-diagonal column X_m = Y^{1/2} K_m sqrt(w_m) with Y the already-assembled
// leading principal block. PSD by the contraction property.
WeightMatrix forward_full(const ThetaParams& theta, double s, const ModelArch& arch);

WeightMatrix forward(const ThetaParams& theta, double s, const ModelArch& arch);

// Exact reverse-mode gradient of <sym(grad_W), W(theta, s)> w.r.t. theta.
// grad_W is symmetrized on entry. The psd_sqrt adjoint solves the Lyapunov
// equation R G + G R = sym(G_R) in the eigenbasis of R with divisors floored
// at 1e-8. Throws NumericalError on non-finite intermediates.
ThetaParams backward(const ThetaParams& theta, double s, const ModelArch& arch,
                     const Mat& grad_W);

// Copies the feature layer and softmax head of a trained diagonal model and
// starts every contraction head near zero (v-logits at -4), so the full model
// initially reproduces the diagonal one up to sigmoid(-4) in off-diagonal
// Frobenius norm. Throws ConfigError on mismatched groups/blocks.
ThetaParams init_full_from_diag(const ThetaParams& theta_diag, const ModelArch& arch_full,
                                uint64_t seed = 0);

ThetaParams random_init(const ModelArch& arch, uint64_t seed);
ThetaParams zero_params(const ModelArch& arch);

// Conservative bound L with ||W(s+d) - W(s)||_F <= L d on [0,1], assembled
// from layer operator norms plus interval bounds on the softmax floor, the
// contraction magnitudes, and the tanh-direction norms.
double lipschitz_bound(const ThetaParams& theta, const ModelArch& arch);

// Flat parameter vector in declared order: feature_w, feature_b,
// softmax_w (row major), softmax_b, then per head u_w (row major), u_b, v_w, v_b.
int param_count(const ModelArch& arch);
Vec to_flat(const ThetaParams& theta);
ThetaParams from_flat(const ModelArch& arch, const Vec& flat);

}  // namespace qpblend
