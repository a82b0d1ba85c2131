#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gsj/flow.hpp"
#include "gsj/samplers.hpp"
#include "gsj/tensor.hpp"

namespace gsj {

/// IGM values above this mark an initialization as unusable.
inline constexpr double kIgmPathological = 1e4;
inline constexpr double kDefaultDominanceRatio = 3.0;
inline constexpr std::size_t kDefaultMetricBatch = 128;

struct IgmResult {
  /// Norm of the batch-meaned first-sweep residual; +inf when sigma overflowed.
  double value = 0.0;
  bool pathological = false;
  bool overflow = false;
  /// Largest finite |entry| of the first iterate, the collapse diagnostic.
  double max_abs = 0.0;
};

/// || Sigma(X0) Z + mu(X0) - X* || on the batch mean, X0 chosen by init.
IgmResult compute_igm(const FlowBlock& block, const Tensor3& x_star, const Tensor3& z,
                      InitMode init, NormKind kind = NormKind::Spectral);
/// Same with an explicit X0.
IgmResult compute_igm_from(const FlowBlock& block, const Tensor3& x_star, const Tensor3& z,
                           const Tensor3& x0, NormKind kind = NormKind::Spectral);

struct CrmComponents {
  double nvp = 0.0;  // ||Sigma^{-1}(X) X|| on the batch mean
  double ws = 0.0;   // ||W_s||
  double wu = 0.0;   // ||W_u||
};

struct CrmResult {
  double crm = 0.0;
  CrmComponents parts;
};

/// crm = nvp * ws + wu.
CrmResult compute_crm(const FlowBlock& block, const Tensor3& x_star,
                      NormKind kind = NormKind::Spectral);

struct StackSelection {
  /// In selection order.
  std::vector<std::size_t> blocks;
  double dominance_ratio = kDefaultDominanceRatio;
};

/// Greedy: while max(remaining) >= ratio * median(remaining), move the
/// largest (lowest index on ties) to the stack.
StackSelection select_stack(std::span<const double> crms, double dominance_ratio);

struct NormVariantValues {
  double igm_z = 0.0;
  double igm_z0 = 0.0;
  double crm = 0.0;
};

struct BlockMetrics {
  IgmResult igm_z;
  IgmResult igm_z0;
  InitMode chosen_init = InitMode::FromZ;
  double crm = 0.0;
  CrmComponents parts;
  double crm_percent = 0.0;
  /// Indexed by NormKind.
  std::array<NormVariantValues, 3> variants{};
};

struct MetricReport {
  NormKind norm = NormKind::Spectral;
  std::vector<BlockMetrics> blocks;
  StackSelection stack;

  std::vector<InitMode> inits() const;
  std::vector<double> crms() const;
  /// Whether the CRM ordering under `kind` matches the primary norm's.
  bool crm_rank_agrees(NormKind kind) const;
};

struct MetricOptions {
  NormKind norm = NormKind::Spectral;
  double dominance_ratio = kDefaultDominanceRatio;
};

/// One forward pass capturing each block's (X*, Z) in the block's own
/// sequence order, then IGM (both inits), CRM and all norm variants.
MetricReport metric_pass(const FlowModel& model, const Tensor3& x_star_batch,
                         const MetricOptions& opts = {});

/// Data-space samples for a synthetic model: serial inverse of seeded N(0,1) noise.
Tensor3 synthetic_data_batch(const FlowModel& model, std::uint64_t seed, std::size_t batch);

std::string metric_report_to_json(const MetricReport& report);
MetricReport metric_report_from_json(const std::string& text);

ModelSampleResult sample_model(const FlowModel& model, const Tensor3& z, const Strategy& strategy,
                               const MetricReport& metrics, const ModelSampleOptions& opts = {});

}  // namespace gsj
