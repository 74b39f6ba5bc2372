#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "support.hpp"

using namespace qpblend;
using namespace qpblend::testing;

namespace {

// Diagonal grouped-softmax weights: one softmax group per space, positive and
// summing to 1 within each group.
Mat grouped_diag_weights(std::mt19937_64& rng, const BlendStructure& st, Vec* scalars = nullptr) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Vec w(st.skills.size());
  for (const auto& g : st.groups) {
    double sum = 0.0;
    for (int k : g) {
      w[k] = u(rng);
      sum += w[k];
    }
    for (int k : g) w[k] /= sum;
  }
  Mat W = Mat::Zero(st.n, st.n);
  for (size_t k = 0; k < st.skills.size(); ++k) {
    const int off = st.block_offsets[k];
    W.block(off, off, st.skills[k].dim, st.skills[k].dim) =
        w[k] * Mat::Identity(st.skills[k].dim, st.skills[k].dim);
  }
  if (scalars) *scalars = w;
  return W;
}

}  // namespace

TEST_CASE("single skill, identity cost reproduces the desired value") {
  const auto st = build_structure({{"ee", 2}}, {{"only", "ee", 2}}, {{0}});
  Vec zhat(2);
  zhat << 0.3, -0.8;
  const auto sol = solve_blend(Mat::Identity(2, 2), zhat, st);
  CHECK((sol.z_star - zhat).norm() < 1e-7);
}

TEST_CASE("two 1-D skills sharing a space: convex combination") {
  const auto st =
      build_structure({{"g", 1}}, {{"a", "g", 1}, {"b", "g", 1}}, {{0, 1}});
  Mat W = Mat::Zero(2, 2);
  W(0, 0) = 0.3;
  W(1, 1) = 0.7;
  Vec zhat(2);
  zhat << 2.0, -1.0;
  const auto sol = solve_blend(W, zhat, st);
  CHECK(sol.u_star.size() == 1);
  CHECK(sol.u_star[0] == doctest::Approx(-0.1).epsilon(1e-7));
}

TEST_CASE("random instances match the dense KKT oracle") {
  auto rng = rng_for(42);
  for (int trial = 0; trial < 100; ++trial) {
    const auto st = random_structure(rng);
    const Mat W = random_spd(rng, st.n, 1.5, 4.0);
    const Vec zhat = random_vector(rng, st.n, -0.4, 0.4);
    const auto sol = solve_blend(W, zhat, st);
    const Vec z_oracle = dense_kkt_solve(W, zhat, st.P, st.r);
    CHECK(rel_err_vec(sol.z_star, z_oracle) < 1e-8);
    // Feasibility and stationarity.
    if (st.p() > 0) CHECK((st.P * sol.z_star - st.r).norm() <= 1e-10);
    CHECK(kkt_stationarity(W, zhat, sol.z_star, sol.mu, st.P).norm() <= 1e-8);
  }
}

TEST_CASE("kkt_stationarity degenerate and perturbed forms") {
  auto rng = rng_for(7);
  const auto st = reference_bundle().structure;
  const Mat W = random_spd(rng, st.n, 0.5, 2.0);
  const Vec zhat = random_vector(rng, st.n);
  const auto sol = solve_blend(W, zhat, st);

  SUBCASE("residual at the solver output is negligible") {
    CHECK(kkt_stationarity(W, zhat, sol.z_star, sol.mu, st.P).norm() <= 1e-8);
  }
  SUBCASE("W = 0 leaves only the constraint force") {
    const Vec res = kkt_stationarity(Mat::Zero(st.n, st.n), zhat, sol.z_star, sol.mu, st.P);
    CHECK((res - st.P.transpose() * sol.mu).norm() == 0.0);
  }
  SUBCASE("perturbing z shifts the residual by W(z* - z)") {
    const Vec delta = random_vector(rng, st.n, -0.1, 0.1);
    const Vec z = sol.z_star + delta;
    const Vec res = kkt_stationarity(W, zhat, z, sol.mu, st.P);
    const Vec base = kkt_stationarity(W, zhat, sol.z_star, sol.mu, st.P);
    CHECK((res - base - W * (sol.z_star - z)).norm() < 1e-12);
  }
  SUBCASE("dimension mismatch throws") {
    CHECK_THROWS_AS(kkt_stationarity(W, zhat, Vec::Zero(2), sol.mu, st.P),
                    std::invalid_argument);
  }
}

TEST_CASE("solver input validation") {
  const auto st = reference_bundle().structure;
  auto rng = rng_for(3);
  const Vec zhat = random_vector(rng, st.n);
  CHECK_THROWS_AS(solve_blend(Mat::Identity(3, 3), zhat, st), std::invalid_argument);
  Mat W = Mat::Identity(st.n, st.n);
  W(0, 1) = 0.5;  // asymmetric
  CHECK_THROWS_AS(solve_blend(W, zhat, st), std::invalid_argument);
  CHECK_THROWS_AS(solve_blend(Mat::Identity(st.n, st.n), Vec::Zero(2), st),
                  std::invalid_argument);
  CHECK_THROWS_AS(solve_blend(Mat::Identity(st.n, st.n), zhat, st, std::nullopt, 0.0),
                  std::invalid_argument);
}

TEST_CASE("convex-combination property of grouped diagonal weights") {
  auto rng = rng_for(11);
  for (int trial = 0; trial < 30; ++trial) {
    const auto st = random_structure(rng);
    Vec w;
    const Mat W = grouped_diag_weights(rng, st, &w);
    const Vec zhat = random_vector(rng, st.n, -1.0, 1.0);
    const auto sol = solve_blend(W, zhat, st);
    for (size_t c = 0; c < st.spaces.size(); ++c) {
      Vec expect = Vec::Zero(st.spaces[c].dim);
      for (size_t k = 0; k < st.skills.size(); ++k)
        if (st.skill_space[k] == static_cast<int>(c))
          expect += w[k] * zhat.segment(st.block_offsets[k], st.skills[k].dim);
      CHECK((sol.u_star.segment(st.space_offsets[c], st.spaces[c].dim) - expect).norm() <=
            1e-6);
    }
  }
}

TEST_CASE("scale covariance: scaling W and eps together leaves u* unchanged") {
  auto rng = rng_for(13);
  const auto st = reference_bundle().structure;
  const Mat W = random_spd(rng, st.n, 0.5, 2.0);
  const Vec zhat = random_vector(rng, st.n);
  const double alpha = 37.5;
  const auto base = solve_blend(W, zhat, st, std::nullopt, 1e-8);
  const auto scaled = solve_blend(alpha * W, zhat, st, std::nullopt, alpha * 1e-8);
  CHECK((base.u_star - scaled.u_star).norm() <= 1e-10);
}

TEST_CASE("binding through a wide matrix matches the lifted dense solve") {
  // Joint-space binding: ee velocity realized as J alpha_dot.
  auto rng = rng_for(17);
  const auto st = reference_bundle().structure;
  const int dofs = 4;
  Mat B = Mat::Zero(st.q, dofs + 1);
  B.block(0, 0, 2, dofs) = random_matrix(rng, 2, dofs);
  B(2, dofs) = 1.0;
  const Mat W = random_spd(rng, st.n, 0.5, 2.0);
  const Vec zhat = random_vector(rng, st.n);
  const auto sol = solve_blend(W, zhat, st, B);
  CHECK(sol.u_star.size() == dofs + 1);
  // Oracle: normal equations on the effective structure matrix, with the same
  // one-step refinement toward the unregularized system.
  const Mat Se = st.S * B;
  const Mat M = Se.transpose() * W * Se + kDefaultEps * Mat::Identity(dofs + 1, dofs + 1);
  const auto ldlt = M.ldlt();
  const Vec u0 = ldlt.solve(Se.transpose() * W * zhat);
  const Vec expect = u0 + ldlt.solve(kDefaultEps * u0);
  CHECK(rel_err_vec(sol.u_star, expect) < 1e-8);
  CHECK((sol.z_star - Se * sol.u_star).norm() == 0.0);
}

TEST_CASE("adjoint: zero upstream gradient gives zero gradients") {
  auto rng = rng_for(19);
  const auto st = reference_bundle().structure;
  const Mat W = random_spd(rng, st.n, 0.5, 2.0);
  const Vec zhat = random_vector(rng, st.n);
  const auto sol = solve_blend(W, zhat, st);
  const auto adj = solve_adjoint(sol, W, zhat, st, std::nullopt, kDefaultEps, Vec::Zero(st.q));
  CHECK(adj.grad_W.cwiseAbs().maxCoeff() == 0.0);
  CHECK(adj.grad_zhat.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adjoint: single skill with identity W is an identity layer") {
  const auto st = build_structure({{"ee", 2}}, {{"only", "ee", 2}}, {{0}});
  Vec zhat(2);
  zhat << 0.4, 0.9;
  const auto sol = solve_blend(Mat::Identity(2, 2), zhat, st);
  Vec gbar(2);
  gbar << 1.0, -2.0;
  const auto adj = solve_adjoint(sol, Mat::Identity(2, 2), zhat, st, std::nullopt, kDefaultEps,
                                 gbar);
  CHECK((adj.grad_zhat - gbar).norm() < 1e-6);
}

TEST_CASE("adjoint matches central finite differences") {
  auto rng = rng_for(23);
  for (int trial = 0; trial < 10; ++trial) {
    const auto st = random_structure(rng);
    const Mat W = random_spd(rng, st.n, 0.8, 3.0);
    const Vec zhat = random_vector(rng, st.n, -1.0, 1.0);
    const Vec gbar = random_vector(rng, st.q, -1.0, 1.0);
    const auto sol = solve_blend(W, zhat, st);
    const auto adj = solve_adjoint(sol, W, zhat, st, std::nullopt, kDefaultEps, gbar);

    const double h = 1e-5;
    auto objective = [&](const Mat& Wx, const Vec& zx) {
      return gbar.dot(solve_blend(Wx, zx, st).u_star);
    };
    // d/d zhat, entrywise.
    Vec fd_z(st.n);
    for (int i = 0; i < st.n; ++i) {
      Vec zp = zhat, zm = zhat;
      zp[i] += h;
      zm[i] -= h;
      fd_z[i] = (objective(W, zp) - objective(W, zm)) / (2 * h);
    }
    CHECK(rel_err_vec(adj.grad_zhat, fd_z) <= 1e-5);
    // d/d W along random symmetric directions.
    for (int dir = 0; dir < 5; ++dir) {
      const Mat D = symmetrize(random_matrix(rng, st.n, st.n));
      const double fd = (objective(W + h * D, zhat) - objective(W - h * D, zhat)) / (2 * h);
      const double got = adj.grad_W.cwiseProduct(D).sum();
      CHECK(rel_err(got, fd) <= 1e-5);
    }
  }
}

TEST_CASE("adjoint rejects stale solutions") {
  auto rng = rng_for(29);
  const auto st = reference_bundle().structure;
  const Mat W = random_spd(rng, st.n, 0.5, 2.0);
  const Vec zhat = random_vector(rng, st.n);
  const auto sol = solve_blend(W, zhat, st);
  const Mat W2 = random_spd(rng, st.n, 0.5, 2.0);
  CHECK_THROWS_AS(solve_adjoint(sol, W2, zhat, st, std::nullopt, kDefaultEps, Vec::Zero(st.q)),
                  std::invalid_argument);
}

TEST_CASE("assemble_qp exposes the standard-form view") {
  auto rng = rng_for(31);
  const auto st = reference_bundle().structure;
  const Mat W = random_spd(rng, st.n, 0.5, 2.0);
  const Vec zhat = random_vector(rng, st.n);
  const auto qp = assemble_qp(W, zhat, st);
  CHECK(qp.Q == W);
  CHECK((qp.c + W * zhat).norm() == 0.0);
  CHECK(qp.A == st.P);
  CHECK(qp.b == st.r);
}
