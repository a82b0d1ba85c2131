#pragma once

// Error propagation of the fixed-point iteration X <- Sigma(X) Z + mu(X).
//
// With f(X) = X - Sigma(X) Z - mu(X), one sweep maps the error
// eps = X - X* to eps' ~= (I - J_f) eps = Gamma eps. Causality makes J_f
// identity on the diagonal blocks and zero above them, so Gamma is strictly
// block lower triangular and Gamma^T = 0. The iteration is therefore the
// diagonal Newton method X <- X - diag(J_f)^{-1} f(X) with diag(J_f) = I.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gsj/flow.hpp"
#include "gsj/samplers.hpp"
#include "gsj/tensor.hpp"

namespace gsj {

/// Largest T*C for which the dense (T*C)^2 Gamma is built.
inline constexpr std::size_t kMaxGammaSize = 256;
inline constexpr double kDefaultFdStep = 1e-5;

/// f_t = x_t - sigma_t(x) z_t - u_t(x).
Tensor3 residual_field(const FlowBlock& block, const Tensor3& x, const Tensor3& z);

/// Gamma = I - J_f at a point, (T*C) x (T*C) ordered timestep-major.
struct GammaMatrix {
  Matrix values;
  std::size_t seq = 0;
  std::size_t channels = 0;
  double fd_step = 0.0;
  std::string point_id;
  /// Largest |entry| found in the blocks forced to zero.
  double upper_noise = 0.0;
  double noise_floor = 0.0;

  /// Sub-block (t, i), C x C.
  Matrix block(std::size_t t, std::size_t i) const;
};

/// Central differences of residual_field for a single sample (B = 1). Blocks
/// (t, i) with i >= t are checked against the noise floor and then set to
/// zero; a larger entry raises CausalityError.
GammaMatrix gamma_matrix(const FlowBlock& block, const Tensor3& x, const Tensor3& z,
                         double fd_step = kDefaultFdStep, std::string point_id = {});

/// Gamma without the zeroing step, for step-size studies.
Matrix gamma_matrix_raw(const FlowBlock& block, const Tensor3& x, const Tensor3& z, double fd_step);

/// True iff Gamma^T has max |entry| <= tol.
bool nilpotency_check(const GammaMatrix& gamma, double tol = 1e-10);

Matrix matrix_power(const Matrix& m, std::size_t k);

struct ErrorRecursionPoint {
  double delta = 0.0;
  double eps0_norm = 0.0;
  double eps1_norm = 0.0;
  double remainder = 0.0;  // ||eps1 - Gamma eps0||
  double ratio = 0.0;      // remainder / ||eps0||^2, 0 when eps0 = 0
};

struct ErrorRecursionReport {
  std::vector<ErrorRecursionPoint> points;
  /// max ratio / min ratio over the nonzero ratios; 1 when all are zero.
  double spread = 1.0;
  bool stable = true;  // spread < 10
};

/// Perturbs the serial solution by delta along a fixed random unit direction
/// (position 0 untouched), runs one Jacobi sweep and compares the new error
/// with Gamma times the old one. B must be 1.
ErrorRecursionReport verify_error_recursion(const FlowBlock& block, const Tensor3& z,
                                            const std::vector<double>& deltas,
                                            std::uint64_t seed = 7,
                                            double fd_step = kDefaultFdStep);

/// Applies k measured single-sweep maps Gamma^{(j)}, each evaluated at the
/// j-th Jacobi iterate started from x0, to eps0 = x0 - X*.
std::vector<double> telescoped_error(const FlowBlock& block, const Tensor3& z, const Tensor3& x0,
                                     std::size_t k, double fd_step = kDefaultFdStep);

enum class TraceMode { Jacobi, GsJacobi };

struct DistanceTraceConfig {
  TraceMode mode = TraceMode::Jacobi;
  InitMode init = InitMode::FromZ;
  /// Jacobi sweep cap; 0 means T - 1.
  std::size_t max_iters = 0;
  std::size_t groups = 1;
  /// GS-Jacobi per-module budget; 0 means the module size.
  std::size_t j_budget = 0;
  double ebound = 0.0;
};

/// Runs the serial oracle, then the configured sampler with distances on.
ConvergenceTrace convergence_distance_trace(const FlowBlock& block, const Tensor3& z,
                                            const DistanceTraceConfig& config);

/// Sum over modules of the sweeps each module needed before its distance
/// first dropped to <= threshold; nullopt if some module never did. For a
/// Jacobi trace this is the sweep count to reach the threshold.
std::optional<std::size_t> su_evals_to_distance(const ConvergenceTrace& trace, double threshold);

std::string matrix_to_csv(const Matrix& m);

}  // namespace gsj
