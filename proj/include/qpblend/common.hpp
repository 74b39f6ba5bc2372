#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>

namespace qpblend {

using Vec = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;
using Mat = Eigen::MatrixXd;

// Regularizer added to the reduced normal matrix S^T W S.
inline constexpr double kDefaultEps = 1e-8;

// Bad input, malformed file, incompatible configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical breakdown: divergence, singular systems, non-finite values. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Worker count: hardware concurrency capped by the QPBLEND_THREADS environment variable.
int worker_count();

// Runs fn(i) for i in [0, n). Falls back to a serial loop when n is small or
// only one worker is available. fn must be pure w.r.t. shared state; callers
// that need determinism reduce their per-index results in index order.
void parallel_for(int n, const std::function<void(int)>& fn, int min_grain = 64);

inline Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

}  // namespace qpblend
