#include "gsj/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>

#include "gsj/errors.hpp"

namespace gsj {

Tensor3 residual_field(const FlowBlock& block, const Tensor3& x, const Tensor3& z) {
  if (!x.same_shape(z)) throw DimensionError("residual_field: x and z shapes differ");
  const auto su = eval_su(block, x);
  Tensor3 f(x.batch(), x.seq(), x.channels());
  auto fd = f.data();
  auto xd = x.data();
  auto zd = z.data();
  auto sd = su.s.data();
  auto ud = su.u.data();
  for (std::size_t i = 0; i < fd.size(); ++i) fd[i] = xd[i] - std::exp(sd[i]) * zd[i] - ud[i];
  if (!all_finite(fd)) throw OverflowError("residual field is not finite", max_abs(fd));
  return f;
}

Matrix GammaMatrix::block(std::size_t t, std::size_t i) const {
  Matrix out(channels, channels);
  for (std::size_t r = 0; r < channels; ++r)
    for (std::size_t c = 0; c < channels; ++c) out(r, c) = values(t * channels + r, i * channels + c);
  return out;
}

namespace {

void check_gamma_input(const Tensor3& x, const Tensor3& z, double fd_step) {
  if (!x.same_shape(z)) throw DimensionError("gamma_matrix: x and z shapes differ");
  if (x.batch() != 1) throw DimensionError("gamma_matrix: needs a single sample (B = 1)");
  if (x.seq() * x.channels() > kMaxGammaSize)
    throw DimensionError("gamma_matrix: T*C = " + std::to_string(x.seq() * x.channels()) +
                         " exceeds " + std::to_string(kMaxGammaSize));
  if (!(fd_step > 0.0)) throw std::invalid_argument("gamma_matrix: fd_step must be > 0");
}

}  // namespace

Matrix gamma_matrix_raw(const FlowBlock& block, const Tensor3& x, const Tensor3& z, double fd_step) {
  check_gamma_input(x, z, fd_step);
  const std::size_t n = x.seq() * x.channels();
  Matrix g = Matrix::identity(n);
  Tensor3 xp = x;
  for (std::size_t j = 0; j < n; ++j) {
    const double orig = xp.data()[j];
    xp.data()[j] = orig + fd_step;
    const Tensor3 fp = residual_field(block, xp, z);
    xp.data()[j] = orig - fd_step;
    const Tensor3 fm = residual_field(block, xp, z);
    xp.data()[j] = orig;
    for (std::size_t r = 0; r < n; ++r)
      g(r, j) -= (fp.data()[r] - fm.data()[r]) / (2.0 * fd_step);
  }
  return g;
}

GammaMatrix gamma_matrix(const FlowBlock& block, const Tensor3& x, const Tensor3& z,
                         double fd_step, std::string point_id) {
  GammaMatrix out;
  out.values = gamma_matrix_raw(block, x, z, fd_step);
  out.seq = x.seq();
  out.channels = x.channels();
  out.fd_step = fd_step;
  out.point_id = std::move(point_id);
  // Truncation noise plus the cancellation error of (x+h) - (x-h) on the
  // diagonal blocks.
  const double scale = 1.0 + std::max(max_abs(x.data()), max_abs(z.data()));
  out.noise_floor =
      10.0 * fd_step * fd_step + 100.0 * std::numeric_limits<double>::epsilon() * scale / fd_step;
  const std::size_t C = out.channels;
  for (std::size_t r = 0; r < out.values.rows(); ++r) {
    for (std::size_t c = 0; c < out.values.cols(); ++c) {
      if (c / C < r / C) continue;
      out.upper_noise = std::max(out.upper_noise, std::abs(out.values(r, c)));
      out.values(r, c) = 0.0;
    }
  }
  if (!(out.upper_noise <= out.noise_floor)) {
    throw CausalityError("gamma_matrix: entry on or above the block diagonal is " +
                         std::to_string(out.upper_noise) + ", above noise floor " +
                         std::to_string(out.noise_floor));
  }
  return out;
}

Matrix matrix_power(const Matrix& m, std::size_t k) {
  if (m.rows() != m.cols()) throw DimensionError("matrix_power: matrix must be square");
  Matrix out = Matrix::identity(m.rows());
  for (std::size_t i = 0; i < k; ++i) out = out * m;
  return out;
}

bool nilpotency_check(const GammaMatrix& gamma, double tol) {
  return max_abs(matrix_power(gamma.values, gamma.seq).data()) <= tol;
}

namespace {

std::vector<double> mat_vec(const Matrix& m, std::span<const double> v) {
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) acc += m(r, c) * v[c];
    out[r] = acc;
  }
  return out;
}

double norm2(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

// One Jacobi sweep from x0.
Tensor3 one_sweep(const FlowBlock& block, const Tensor3& z, const Tensor3& x0) {
  return jacobi_sample_from(block, z, x0, 1, SamplerOptions{.ebound = 0.0}).x;
}

}  // namespace

ErrorRecursionReport verify_error_recursion(const FlowBlock& block, const Tensor3& z,
                                            const std::vector<double>& deltas, std::uint64_t seed,
                                            double fd_step) {
  const Tensor3 x_star = inverse_block_serial(block, z);
  const GammaMatrix gamma = gamma_matrix(block, x_star, z, fd_step, "serial-solution");

  Tensor3 dir = standard_normal(seed, 1, z.seq(), z.channels());
  std::ranges::fill(dir.row(0, 0), 0.0);
  const double n = norm2(dir.data());
  if (n > 0.0) dir *= 1.0 / n;

  ErrorRecursionReport rep;
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (double delta : deltas) {
    Tensor3 x0 = dir;
    x0 *= delta;
    x0 += x_star;
    const Tensor3 eps0 = x0 - x_star;
    const Tensor3 eps1 = one_sweep(block, z, x0) - x_star;
    const auto pred = mat_vec(gamma.values, eps0.data());
    std::vector<double> diff(pred.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = eps1.data()[i] - pred[i];
    ErrorRecursionPoint p;
    p.delta = delta;
    p.eps0_norm = norm2(eps0.data());
    p.eps1_norm = norm2(eps1.data());
    p.remainder = norm2(diff);
    p.ratio = p.eps0_norm > 0.0 ? p.remainder / (p.eps0_norm * p.eps0_norm) : 0.0;
    if (p.ratio > 0.0) {
      lo = std::min(lo, p.ratio);
      hi = std::max(hi, p.ratio);
    }
    rep.points.push_back(p);
  }
  rep.spread = hi > 0.0 ? hi / lo : 1.0;
  rep.stable = rep.spread < 10.0;
  return rep;
}

std::vector<double> telescoped_error(const FlowBlock& block, const Tensor3& z, const Tensor3& x0,
                                     std::size_t k, double fd_step) {
  const Tensor3 x_star = inverse_block_serial(block, z);
  const Tensor3 eps0 = x0 - x_star;
  std::vector<double> eps(eps0.data().begin(), eps0.data().end());
  Tensor3 xj = x0;
  for (std::size_t j = 0; j < k; ++j) {
    const GammaMatrix g = gamma_matrix(block, xj, z, fd_step, "iterate-" + std::to_string(j));
    eps = mat_vec(g.values, eps);
    xj = one_sweep(block, z, xj);
  }
  return eps;
}

ConvergenceTrace convergence_distance_trace(const FlowBlock& block, const Tensor3& z,
                                            const DistanceTraceConfig& config) {
  const Tensor3 oracle = inverse_block_serial(block, z);
  SamplerOptions opts;
  opts.ebound = config.ebound;
  opts.oracle = &oracle;
  const std::size_t T = z.seq();
  if (config.mode == TraceMode::Jacobi) {
    const std::size_t iters = config.max_iters ? config.max_iters : std::max<std::size_t>(T - 1, 1);
    return jacobi_sample(block, z, config.init, iters, opts).trace;
  }
  const Segmentation seg = Segmentation::equal(T, config.groups);
  const std::size_t budget = config.j_budget ? config.j_budget : seg.max_size();
  return gs_jacobi_sample(block, z, seg, budget, config.init, opts).trace;
}

std::optional<std::size_t> su_evals_to_distance(const ConvergenceTrace& trace, double threshold) {
  std::map<std::size_t, std::optional<std::size_t>> first;
  for (const auto& r : trace.records) {
    auto& f = first[r.module];
    if (!f && r.distance && *r.distance <= threshold) f = r.iter;
  }
  if (first.empty()) return std::nullopt;
  std::size_t total = 0;
  for (const auto& [module, iter] : first) {
    if (!iter) return std::nullopt;
    total += *iter;
  }
  return total;
}

std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      if (c) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace gsj
