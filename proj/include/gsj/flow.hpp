#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gsj/tensor.hpp"

namespace gsj {

/// Pre-layer-norm transformer layer: single-head causal softmax attention
/// followed by a two-layer GELU MLP, both with residual connections. Weights
/// act on row vectors (y = x W), so mlp_w1 is (C x H) and mlp_w2 is (H x C).
struct AttentionLayer {
  Matrix wq, wk, wv, wo;
  Matrix mlp_w1, mlp_w2;
  std::vector<double> ln1_gain, ln1_bias;
  std::vector<double> ln2_gain, ln2_bias;

  bool operator==(const AttentionLayer&) const = default;
};

/// One autoregressive affine block. s(x_{<t}) = attn(x)_{t-1} W_s + b_s and
/// likewise for u; position 0 has s = u = 0.
struct FlowBlock {
  std::vector<AttentionLayer> layers;
  Matrix w_s, w_u;
  std::vector<double> b_s, b_u;
  bool flip = false;

  std::size_t channels() const { return w_s.rows(); }
  std::size_t hidden() const { return layers.empty() ? 0 : layers.front().mlp_w1.cols(); }

  /// Throws DimensionError if the weight shapes are inconsistent.
  void validate() const;

  bool operator==(const FlowBlock&) const = default;
};

/// Mirrors the bracket notation [patch-C-L-D-N(0, noise^2)], plus the desk
/// scale knobs (sequence length, MLP width, per-block project-out gains).
struct ModelConfig {
  std::size_t patch_size = 1;
  std::size_t channels = 4;
  std::size_t blocks = 4;
  std::size_t depth = 2;
  double noise_std = 0.05;
  std::size_t seq_len = 16;
  std::size_t mlp_hidden = 16;
  /// Multiplies the project-out weight scale of each block; empty means all 1.
  std::vector<double> block_gain;
  /// When true, blocks alternate sequence reversal starting with block 0 unflipped.
  bool alternate_flip = true;

  std::string bracket() const;
  void validate() const;
  double gain(std::size_t block) const;

  bool operator==(const ModelConfig&) const = default;
};

struct FlowModel {
  ModelConfig config;
  std::vector<FlowBlock> blocks;

  std::size_t channels() const { return config.channels; }
  void validate() const;

  bool operator==(const FlowModel&) const = default;
};

struct AffineParams {
  Tensor3 s;
  Tensor3 u;
};

/// Key/value state of the attention stack for a committed prefix of positions.
///
/// evaluate() computes s_t, u_t for t in [committed, end) using the cached
/// state for positions below committed and treating x rows in [committed, end-1)
/// as tentative. commit() appends positions to the cache. Every evaluation mode
/// (full parallel pass, prefix pass, one-step serial) runs through the same
/// per-row kernels, so their results agree bit for bit on equal inputs.
class CausalCache {
 public:
  CausalCache(const FlowBlock& block, std::size_t batch, std::size_t capacity);

  std::size_t committed() const { return committed_; }
  std::size_t capacity() const { return capacity_; }

  /// Writes s and u rows [committed(), end). s and u must be (B, >= end, C).
  void evaluate(const Tensor3& x, std::size_t end, Tensor3& s, Tensor3& u) const;

  /// Appends positions [committed(), end) of x to the cache.
  void commit(const Tensor3& x, std::size_t end);

 private:
  struct Rows;
  void run_rows(const Tensor3& x, std::size_t end, Rows& rows) const;

  const FlowBlock* block_;
  std::size_t batch_;
  std::size_t capacity_;
  std::size_t channels_;
  std::size_t committed_ = 0;
  // [layer][b] -> capacity x C
  std::vector<std::vector<std::vector<double>>> keys_, values_;
  // [b] -> capacity x C, output of the layer stack
  std::vector<std::vector<double>> hidden_;
};

/// s and u for every position in one parallel pass.
AffineParams eval_su(const FlowBlock& block, const Tensor3& x);

inline constexpr double kSClamp = 8.0;

/// z_t = exp(-s_t) * (x_t - u_t).
Tensor3 forward_block(const FlowBlock& block, const Tensor3& x);

/// Exact inverse by T-1 sequential steps over a growing attention cache.
Tensor3 inverse_block_serial(const FlowBlock& block, const Tensor3& z);

/// log |det dz/dx| per batch item, equal to -sum of s.
std::vector<double> forward_log_det(const FlowBlock& block, const Tensor3& x);

/// Applies the block in its own sequence order: reverses x first when the
/// block is flipped and reverses the result back.
Tensor3 forward_block_in_model(const FlowBlock& block, const Tensor3& x);

Tensor3 forward_model(const FlowModel& model, const Tensor3& x);
/// Inverts blocks from last to first with the serial loop.
Tensor3 inverse_model_serial(const FlowModel& model, const Tensor3& z);

/// Deterministic pseudo-random model. Layer weights are N(0, scale^2); the
/// project-out weights and biases of block l are N(0, (scale * gain_l)^2);
/// layer norms start at unit gain and zero bias. scale == 0 gives a
/// zero-weight model whose forward pass is the identity.
FlowModel gen_synthetic_model(std::uint64_t seed, const ModelConfig& config,
                              double weight_scale);

/// Default weight scale 0.02 / sqrt(depth).
double default_weight_scale(std::size_t depth);

/// Standard-normal tensor from a seed.
Tensor3 standard_normal(std::uint64_t seed, std::size_t batch, std::size_t seq,
                        std::size_t channels, double stddev = 1.0);

}  // namespace gsj
