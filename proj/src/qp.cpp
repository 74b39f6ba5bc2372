#include "qpblend/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace qpblend {

namespace {

void check_inputs(const Mat& W, const Vec& zhat, const BlendStructure& st,
                  const std::optional<Mat>& binding) {
  if (W.rows() != st.n || W.cols() != st.n)
    throw std::invalid_argument("solve_blend: W must be " + std::to_string(st.n) + " x " +
                                std::to_string(st.n));
  if (zhat.size() != st.n)
    throw std::invalid_argument("solve_blend: zhat has dim " + std::to_string(zhat.size()) +
                                ", expected " + std::to_string(st.n));
  if ((W - W.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, W.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("solve_blend: W is not symmetric");
  if (binding && binding->rows() != st.q)
    throw std::invalid_argument("solve_blend: binding must have " + std::to_string(st.q) +
                                " rows");
}

Mat effective_structure(const BlendStructure& st, const std::optional<Mat>& binding) {
  return binding ? Mat(st.S * (*binding)) : st.S;
}

// Apply-interface around the factorization of M = M0 + eps I so callers can
// reuse it for iterative refinement. Falls back to an eigendecomposition
// pseudo-inverse for ill-conditioned or indefinite M.
class SpdSolver {
 public:
  SpdSolver(const Mat& M, const char* who) : llt_(M) {
    if (llt_.info() == Eigen::Success && llt_.rcond() > 1e-12) return;
    eig_.compute(M);
    if (eig_.info() != Eigen::Success)
      throw NumericalError(std::string(who) + ": eigendecomposition of the normal matrix failed");
    const double lmax = eig_.eigenvalues().cwiseAbs().maxCoeff();
    if (!(lmax > 0.0))
      throw NumericalError(std::string(who) +
                           ": normal matrix is singular even after regularization");
    inv_ = eig_.eigenvalues();
    const double floor = lmax * 1e-14;
    for (int i = 0; i < inv_.size(); ++i) inv_[i] = inv_[i] > floor ? 1.0 / inv_[i] : 0.0;
    pinv_ = true;
  }

  bool used_pinv() const { return pinv_; }

  Vec solve(const Vec& rhs) const {
    if (!pinv_) return llt_.solve(rhs);
    return eig_.eigenvectors() * (inv_.asDiagonal() * (eig_.eigenvectors().transpose() * rhs));
  }

  // Solution of the *unregularized* system M0 x = rhs: one refinement step
  // cancels the O(eps) regularization bias (the residual of the regularized
  // solve is exactly eps x0).
  Vec solve_refined(const Vec& rhs, double eps) const {
    const Vec x0 = solve(rhs);
    return x0 + solve(eps * x0);
  }

 private:
  Eigen::LLT<Mat> llt_;
  Eigen::SelfAdjointEigenSolver<Mat> eig_;
  Vec inv_;
  bool pinv_ = false;
};

}  // namespace

QPParams assemble_qp(const Mat& W, const Vec& zhat, const BlendStructure& st) {
  check_inputs(W, zhat, st, std::nullopt);
  return {W, -W * zhat, st.P, st.r};
}

QPSolution solve_blend(const Mat& W, const Vec& zhat, const BlendStructure& st,
                       const std::optional<Mat>& binding, double eps) {
  check_inputs(W, zhat, st, binding);
  if (eps <= 0.0) throw std::invalid_argument("solve_blend: eps must be positive");

  const Mat Se = effective_structure(st, binding);
  const int m = static_cast<int>(Se.cols());
  const Mat M = Se.transpose() * W * Se + eps * Mat::Identity(m, m);

  QPSolution sol;
  const SpdSolver solver(M, "solve_blend");
  sol.used_pinv = solver.used_pinv();
  sol.u_star = solver.solve_refined(Se.transpose() * (W * zhat), eps);
  sol.z_star = Se * sol.u_star;

  // Least-squares multipliers making the paper-form residual W(zhat-z*)+P^T mu vanish.
  if (st.p() > 0) {
    const Vec rhs = -(st.P * (W * (zhat - sol.z_star)));
    Eigen::LLT<Mat> llt(st.P * st.P.transpose());
    if (llt.info() != Eigen::Success)
      throw NumericalError("solve_blend: degenerate constraint matrix");
    sol.mu = llt.solve(rhs);
  } else {
    sol.mu = Vec::Zero(0);
  }
  return sol;
}

Vec kkt_stationarity(const Mat& W, const Vec& zhat, const Vec& z, const Vec& mu, const Mat& P) {
  if (W.rows() != W.cols() || W.rows() != zhat.size() || z.size() != zhat.size())
    throw std::invalid_argument("kkt_stationarity: dimension mismatch");
  if (P.rows() != mu.size() || (P.rows() > 0 && P.cols() != zhat.size()))
    throw std::invalid_argument("kkt_stationarity: P/mu dimension mismatch");
  Vec res = W * (zhat - z);
  if (P.rows() > 0) res += P.transpose() * mu;
  return res;
}

AdjointResult solve_adjoint(const QPSolution& sol, const Mat& W, const Vec& zhat,
                            const BlendStructure& st, const std::optional<Mat>& binding,
                            double eps, const Vec& gbar) {
  check_inputs(W, zhat, st, binding);
  const Mat Se = effective_structure(st, binding);
  const int m = static_cast<int>(Se.cols());
  if (sol.u_star.size() != m)
    throw std::invalid_argument("solve_adjoint: stale solution (decision dim mismatch)");
  if (gbar.size() != m)
    throw std::invalid_argument("solve_adjoint: gbar has dim " + std::to_string(gbar.size()) +
                                ", expected " + std::to_string(m));

  const Mat M = Se.transpose() * W * Se + eps * Mat::Identity(m, m);
  // Stale-solution guard: sol must satisfy this instance's normal equations.
  // The refined solve legitimately leaves a residual of about eps * |u|.
  const Vec rhs = Se.transpose() * (W * zhat);
  const double slack = 1e-6 * std::max(1.0, rhs.norm()) + 8.0 * eps * sol.u_star.norm();
  if ((M * sol.u_star - rhs).norm() > slack)
    throw std::invalid_argument("solve_adjoint: stale solution (inputs differ from solve)");

  const SpdSolver solver(M, "solve_adjoint");
  const Vec d = solver.solve_refined(gbar, eps);
  AdjointResult out;
  out.grad_zhat = W * (Se * d);
  out.grad_W = symmetrize((Se * d) * (zhat - sol.z_star).transpose());
  return out;
}

}  // namespace qpblend
