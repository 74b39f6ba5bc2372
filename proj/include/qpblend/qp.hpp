#pragma once

#include <optional>

#include "qpblend/structure.hpp"

namespace qpblend {

// Explicit standard-form view of one blending instance:
//   min_z 1/2 z^T Q z + c^T z  s.t.  A z = b
// with Q = W, c = -W zhat, A = P, b = r. Inequality rows are permanently empty.
struct QPParams {
  Mat Q;
  Vec c;
  Mat A;
  Vec b;
};

QPParams assemble_qp(const Mat& W, const Vec& zhat, const BlendStructure& st);

struct QPSolution {
  Vec u_star;  // reduced optimal control (m-dim when a binding was supplied)
  Vec z_star;  // S^e u*, stacked optimal skill values
  Vec mu;      // equality multipliers, sign chosen so W(zhat - z*) + P^T mu ~ 0
  bool used_pinv = false;  // eigendecomposition fallback was taken
};

// Minimizes 1/2 (zhat - z)^T W (zhat - z) over z in range(S^e), where
// S^e = S * binding when a binding is given (e.g. the manipulator Jacobian
// path) and S otherwise. Solves the integrated reduced problem
//   u* = (S^e^T W S^e + eps I)^{-1} S^e^T W zhat.
// Throws std::invalid_argument on dimension mismatch or a non-symmetric W,
// NumericalError when the normal matrix is singular even after regularization.
QPSolution solve_blend(const Mat& W, const Vec& zhat, const BlendStructure& st,
                       const std::optional<Mat>& binding = std::nullopt,
                       double eps = kDefaultEps);

// The first-order residual W(zhat - z) + P^T mu. Zero (to solver tolerance)
// at a solve_blend output evaluated with its own inputs.
Vec kkt_stationarity(const Mat& W, const Vec& zhat, const Vec& z, const Vec& mu, const Mat& P);

struct AdjointResult {
  Mat grad_W;    // n x n, symmetric
  Vec grad_zhat; // n
};

// Implicit-function-theorem gradients of <gbar, u*> through the KKT system:
// with M = S^e^T W S^e + eps I and d = M^{-1} gbar,
//   grad_zhat = W S^e d,   grad_W = sym(S^e d (zhat - z*)^T).
// Throws std::invalid_argument when sol was not produced from these inputs.
AdjointResult solve_adjoint(const QPSolution& sol, const Mat& W, const Vec& zhat,
                            const BlendStructure& st, const std::optional<Mat>& binding,
                            double eps, const Vec& gbar);

}  // namespace qpblend
