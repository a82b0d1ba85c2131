#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsj/flow.hpp"
#include "gsj/strategy.hpp"
#include "gsj/tensor.hpp"

namespace gsj {

/// Initial iterate: the block input Z itself, or Z_0 = [z_1, 0, ..., 0].
enum class InitMode { FromZ, FromZ0 };

std::string_view to_string(InitMode m);
Tensor3 initial_guess(const Tensor3& z, InitMode mode);

/// Contiguous partition of positions [0, T) into G non-empty modules.
class Segmentation {
 public:
  /// boundaries = {0, e_1, ..., T}, strictly increasing.
  explicit Segmentation(std::vector<std::size_t> boundaries);

  /// G modules of length T // G; the last module absorbs the remainder.
  static Segmentation equal(std::size_t seq_len, std::size_t groups);

  std::size_t groups() const { return bounds_.size() - 1; }
  std::size_t begin(std::size_t g) const { return bounds_[g]; }
  std::size_t end(std::size_t g) const { return bounds_[g + 1]; }
  std::size_t size(std::size_t g) const { return end(g) - begin(g); }
  std::size_t max_size() const;
  std::size_t seq_len() const { return bounds_.back(); }
  const std::vector<std::size_t>& boundaries() const { return bounds_; }

 private:
  std::vector<std::size_t> bounds_;
};

struct TraceRecord {
  std::size_t block = 0;
  std::size_t module = 0;
  std::size_t iter = 0;             // 1-based sweep index within the module
  std::optional<double> distance;   // only with an oracle
  double residual = 0.0;            // sum of squared updates / (B*T*C)
  std::int64_t wall_ns = 0;         // since the start of the block
  std::size_t su_evals = 0;         // cumulative within the block
};

struct ConvergenceTrace {
  std::vector<TraceRecord> records;
  std::size_t su_evals = 0;
  std::size_t clamp_events = 0;

  /// Number of sweeps spent in module g.
  std::size_t sweeps(std::size_t module) const;
  void append(const ConvergenceTrace& other);
};

inline constexpr double kDefaultEbound = 1e-8;

struct SamplerOptions {
  double ebound = kDefaultEbound;
  /// Clamp s to [-kSClamp, kSClamp] before exponentiating.
  bool clamp_s = false;
  /// Serial solution of this block; when set, traces carry distances.
  const Tensor3* oracle = nullptr;
  /// Block index written into trace records.
  std::size_t block_index = 0;
};

struct SampleResult {
  Tensor3 x;
  ConvergenceTrace trace;
};

/// Spectral norm of the batch mean of (x - target) over rows [begin, end).
double batch_mean_distance(const Tensor3& x, const Tensor3& target, std::size_t begin,
                           std::size_t end);

/// Parallel fixed-point iteration X <- Sigma(X) Z + mu(X).
SampleResult jacobi_sample(const FlowBlock& block, const Tensor3& z, InitMode init,
                           std::size_t max_iters, const SamplerOptions& opts = {});
/// Same, from an explicit starting iterate (position 0 is reset to z_0).
SampleResult jacobi_sample_from(const FlowBlock& block, const Tensor3& z, Tensor3 x0,
                                std::size_t max_iters, const SamplerOptions& opts = {});

/// Jacobi inside each module, modules solved in order with earlier ones frozen.
SampleResult gs_jacobi_sample(const FlowBlock& block, const Tensor3& z, const Segmentation& seg,
                              std::size_t j_budget, InitMode init,
                              const SamplerOptions& opts = {});

/// The serial loop wrapped with cost accounting (T-1 evaluations).
SampleResult serial_sample(const FlowBlock& block, const Tensor3& z,
                           const SamplerOptions& opts = {});

struct ModelSampleOptions {
  double ebound = kDefaultEbound;
  bool clamp_s = false;
  /// Compute each block's serial solution and record distances.
  bool track_distance = false;
};

struct ModelSampleResult {
  Tensor3 x;
  /// Indexed by block.
  std::vector<ConvergenceTrace> traces;
  std::size_t su_evals = 0;
};

/// Inverts the model from the last block to the first. Stacked blocks use
/// GS-Jacobi with their (GS, J) pair; the rest use Jacobi with the Else budget.
/// inits holds one InitMode per block.
ModelSampleResult sample_model(const FlowModel& model, const Tensor3& z, const Strategy& strategy,
                               std::span<const InitMode> inits,
                               const ModelSampleOptions& opts = {});

/// inverse_model_serial with the same bookkeeping; su_evals = L * (T - 1).
ModelSampleResult sample_model_serial(const FlowModel& model, const Tensor3& z);

/// Writes the header block,module,iter,distance,residual,wall_ns,su_evals.
std::string trace_to_csv(std::span<const ConvergenceTrace> traces);

}  // namespace gsj
