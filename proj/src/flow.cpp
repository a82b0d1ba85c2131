#include "gsj/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "gsj/errors.hpp"

namespace gsj {

namespace {

constexpr double kLayerNormEps = 1e-5;

void check_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << " is " << m.rows() << "x" << m.cols() << ", expected " << rows << "x" << cols;
    throw DimensionError(os.str());
  }
}

void check_len(const std::vector<double>& v, std::size_t n, const char* name) {
  if (v.size() != n) {
    throw DimensionError(std::string(name) + " has length " + std::to_string(v.size()) +
                         ", expected " + std::to_string(n));
  }
}

// out = in W (row vector times matrix).
inline void vec_mat(const double* in, const Matrix& w, double* out) {
  const std::size_t n_in = w.rows();
  const std::size_t n_out = w.cols();
  std::fill(out, out + n_out, 0.0);
  for (std::size_t i = 0; i < n_in; ++i) {
    const double a = in[i];
    const double* wrow = w.row(i).data();
    for (std::size_t j = 0; j < n_out; ++j) out[j] += a * wrow[j];
  }
}

inline void layer_norm(const double* in, const std::vector<double>& gain,
                       const std::vector<double>& bias, double* out, std::size_t n) {
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += in[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += (in[i] - mean) * (in[i] - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < n; ++i) out[i] = (in[i] - mean) * inv * gain[i] + bias[i];
}

inline double gelu(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

// Softmax attention of query q over keys/values split into a cached part
// (n_cached rows) followed by a tentative part (n_tent rows).
void attend(const double* q, const double* k_cached, const double* v_cached,
            std::size_t n_cached, const double* k_tent, const double* v_tent,
            std::size_t n_tent, std::size_t C, double* scores, double* out) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(C));
  const std::size_t n = n_cached + n_tent;
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    const double* k = j < n_cached ? k_cached + j * C : k_tent + (j - n_cached) * C;
    double dot = 0.0;
    for (std::size_t c = 0; c < C; ++c) dot += q[c] * k[c];
    scores[j] = dot * scale;
    mx = std::max(mx, scores[j]);
  }
  double denom = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    scores[j] = std::exp(scores[j] - mx);
    denom += scores[j];
  }
  std::fill(out, out + C, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double* v = j < n_cached ? v_cached + j * C : v_tent + (j - n_cached) * C;
    const double w = scores[j] / denom;
    for (std::size_t c = 0; c < C; ++c) out[c] += w * v[c];
  }
}

}  // namespace

void FlowBlock::validate() const {
  const std::size_t C = w_s.rows();
  if (C == 0) throw DimensionError("block has zero channels");
  if (layers.empty()) throw DimensionError("block has no attention layers");
  check_shape(w_s, C, C, "w_s");
  check_shape(w_u, C, C, "w_u");
  check_len(b_s, C, "b_s");
  check_len(b_u, C, "b_u");
  const std::size_t H = layers.front().mlp_w1.cols();
  if (H < C) throw DimensionError("MLP width must be at least the channel count");
  for (const auto& l : layers) {
    check_shape(l.wq, C, C, "wq");
    check_shape(l.wk, C, C, "wk");
    check_shape(l.wv, C, C, "wv");
    check_shape(l.wo, C, C, "wo");
    check_shape(l.mlp_w1, C, H, "mlp_w1");
    check_shape(l.mlp_w2, H, C, "mlp_w2");
    check_len(l.ln1_gain, C, "ln1_gain");
    check_len(l.ln1_bias, C, "ln1_bias");
    check_len(l.ln2_gain, C, "ln2_gain");
    check_len(l.ln2_bias, C, "ln2_bias");
  }
}

std::string ModelConfig::bracket() const {
  std::ostringstream os;
  os << "[" << patch_size << "-" << channels << "-" << blocks << "-" << depth << "-N(0,"
     << noise_std << "^2)]";
  return os.str();
}

void ModelConfig::validate() const {
  if (channels == 0 || blocks == 0 || depth == 0 || seq_len == 0 || patch_size == 0)
    throw DimensionError("model config: all sizes must be >= 1");
  if (mlp_hidden < channels) throw DimensionError("model config: mlp_hidden must be >= channels");
  if (!block_gain.empty() && block_gain.size() != blocks)
    throw DimensionError("model config: block_gain must have one entry per block");
  if (!(noise_std >= 0.0)) throw DimensionError("model config: noise_std must be >= 0");
}

double ModelConfig::gain(std::size_t block) const {
  return block_gain.empty() ? 1.0 : block_gain.at(block);
}

void FlowModel::validate() const {
  config.validate();
  if (blocks.size() != config.blocks)
    throw DimensionError("model has " + std::to_string(blocks.size()) + " blocks, config says " +
                         std::to_string(config.blocks));
  for (const auto& b : blocks) {
    b.validate();
    if (b.channels() != config.channels)
      throw DimensionError("block channel count differs from config");
    if (b.layers.size() != config.depth)
      throw DimensionError("block depth differs from config");
    if (b.hidden() != config.mlp_hidden)
      throw DimensionError("block MLP width differs from config");
  }
}

// ---------------------------------------------------------------------------
// CausalCache

struct CausalCache::Rows {
  // [b] -> count x C residual stream, the stack output once run_rows returns
  std::vector<std::vector<double>> resid;
  // [layer][b] -> count x C
  std::vector<std::vector<std::vector<double>>> keys, values;
};

CausalCache::CausalCache(const FlowBlock& block, std::size_t batch, std::size_t capacity)
    : block_(&block), batch_(batch), capacity_(capacity), channels_(block.channels()) {
  const std::size_t per = capacity * channels_;
  keys_.assign(block.layers.size(),
               std::vector<std::vector<double>>(batch, std::vector<double>(per)));
  values_ = keys_;
  hidden_.assign(batch, std::vector<double>(per));
}

void CausalCache::run_rows(const Tensor3& x, std::size_t end, Rows& rows) const {
  const std::size_t C = channels_;
  const std::size_t c0 = committed_;
  const std::size_t n = end > c0 ? end - c0 : 0;
  const std::size_t B = batch_;
  const std::size_t L = block_->layers.size();
  const std::size_t H = block_->hidden();

  rows.resid.assign(B, std::vector<double>(n * C));
  rows.keys.assign(L, std::vector<std::vector<double>>(B, std::vector<double>(n * C)));
  rows.values = rows.keys;
  if (n == 0) return;

  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < n; ++i)
      std::ranges::copy(x.row(b, c0 + i), rows.resid[b].begin() + static_cast<std::ptrdiff_t>(i * C));

  std::vector<std::vector<double>> queries(B, std::vector<double>(n * C));
  const auto items = static_cast<std::ptrdiff_t>(B * n);

  for (std::size_t l = 0; l < L; ++l) {
    const AttentionLayer& layer = block_->layers[l];

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t it = 0; it < items; ++it) {
      const std::size_t b = static_cast<std::size_t>(it) / n;
      const std::size_t i = static_cast<std::size_t>(it) % n;
      std::vector<double> a(C);
      layer_norm(&rows.resid[b][i * C], layer.ln1_gain, layer.ln1_bias, a.data(), C);
      vec_mat(a.data(), layer.wq, &queries[b][i * C]);
      vec_mat(a.data(), layer.wk, &rows.keys[l][b][i * C]);
      vec_mat(a.data(), layer.wv, &rows.values[l][b][i * C]);
    }

#pragma omp parallel for schedule(dynamic, 8)
    for (std::ptrdiff_t it = 0; it < items; ++it) {
      const std::size_t b = static_cast<std::size_t>(it) / n;
      const std::size_t i = static_cast<std::size_t>(it) % n;
      thread_local std::vector<double> scores;
      scores.resize(c0 + i + 1);
      std::vector<double> att(C), proj(C), a(C), hid(H), mlp(C);
      attend(&queries[b][i * C], keys_[l][b].data(), values_[l][b].data(), c0,
             rows.keys[l][b].data(), rows.values[l][b].data(), i + 1, C, scores.data(),
             att.data());
      double* r = &rows.resid[b][i * C];
      vec_mat(att.data(), layer.wo, proj.data());
      for (std::size_t c = 0; c < C; ++c) r[c] += proj[c];
      layer_norm(r, layer.ln2_gain, layer.ln2_bias, a.data(), C);
      vec_mat(a.data(), layer.mlp_w1, hid.data());
      for (double& h : hid) h = gelu(h);
      vec_mat(hid.data(), layer.mlp_w2, mlp.data());
      for (std::size_t c = 0; c < C; ++c) r[c] += mlp[c];
    }
  }
}

void CausalCache::evaluate(const Tensor3& x, std::size_t end, Tensor3& s, Tensor3& u) const {
  if (end > capacity_ || end > x.seq() || end > s.seq() || end > u.seq())
    throw DimensionError("CausalCache::evaluate: end beyond tensor or cache length");
  if (x.batch() != batch_ || x.channels() != channels_ || !s.same_shape(u) ||
      s.batch() != batch_ || s.channels() != channels_)
    throw DimensionError("CausalCache::evaluate: shape mismatch");
  const std::size_t C = channels_;
  const std::size_t c0 = committed_;
  if (end <= c0) return;

  // s_t needs the stack output at t-1, so tentative rows run up to end-2.
  Rows rows;
  run_rows(x, end - 1, rows);

  const FlowBlock& blk = *block_;
  const std::size_t span = end - c0;
  const auto items = static_cast<std::ptrdiff_t>(batch_ * span);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t it = 0; it < items; ++it) {
    const std::size_t b = static_cast<std::size_t>(it) / span;
    const std::size_t t = c0 + static_cast<std::size_t>(it) % span;
    auto srow = s.row(b, t);
    auto urow = u.row(b, t);
    if (t == 0) {
      std::ranges::fill(srow, 0.0);
      std::ranges::fill(urow, 0.0);
      continue;
    }
    const double* h =
        t - 1 < c0 ? &hidden_[b][(t - 1) * C] : &rows.resid[b][(t - 1 - c0) * C];
    vec_mat(h, blk.w_s, srow.data());
    vec_mat(h, blk.w_u, urow.data());
    for (std::size_t c = 0; c < C; ++c) {
      srow[c] += blk.b_s[c];
      urow[c] += blk.b_u[c];
    }
  }
}

void CausalCache::commit(const Tensor3& x, std::size_t end) {
  if (end > capacity_ || end > x.seq())
    throw DimensionError("CausalCache::commit: end beyond capacity");
  if (x.batch() != batch_ || x.channels() != channels_)
    throw DimensionError("CausalCache::commit: shape mismatch");
  if (end <= committed_) return;
  Rows rows;
  run_rows(x, end, rows);
  const auto off = static_cast<std::ptrdiff_t>(committed_ * channels_);
  for (std::size_t l = 0; l < keys_.size(); ++l) {
    for (std::size_t b = 0; b < batch_; ++b) {
      std::ranges::copy(rows.keys[l][b], keys_[l][b].begin() + off);
      std::ranges::copy(rows.values[l][b], values_[l][b].begin() + off);
    }
  }
  for (std::size_t b = 0; b < batch_; ++b)
    std::ranges::copy(rows.resid[b], hidden_[b].begin() + off);
  committed_ = end;
}

// ---------------------------------------------------------------------------

namespace {

void require_finite(const Tensor3& t, const char* what) {
  if (!all_finite(t.data()))
    throw OverflowError(std::string(what) + " is not finite", max_abs(t.data()));
}

void require_channels(const FlowBlock& block, const Tensor3& x) {
  if (x.channels() != block.channels())
    throw DimensionError("input has " + std::to_string(x.channels()) +
                         " channels, block expects " + std::to_string(block.channels()));
  if (x.seq() == 0) throw DimensionError("sequence length must be >= 1");
}

}  // namespace

AffineParams eval_su(const FlowBlock& block, const Tensor3& x) {
  require_channels(block, x);
  AffineParams p{Tensor3(x.batch(), x.seq(), x.channels()),
                 Tensor3(x.batch(), x.seq(), x.channels())};
  CausalCache cache(block, x.batch(), x.seq());
  cache.evaluate(x, x.seq(), p.s, p.u);
  require_finite(p.s, "s");
  require_finite(p.u, "u");
  return p;
}

Tensor3 forward_block(const FlowBlock& block, const Tensor3& x) {
  const auto [s, u] = eval_su(block, x);
  Tensor3 z(x.batch(), x.seq(), x.channels());
  auto zd = z.data();
  auto xd = x.data();
  auto sd = s.data();
  auto ud = u.data();
  for (std::size_t i = 0; i < zd.size(); ++i) zd[i] = std::exp(-sd[i]) * (xd[i] - ud[i]);
  require_finite(z, "forward output");
  return z;
}

Tensor3 inverse_block_serial(const FlowBlock& block, const Tensor3& z) {
  require_channels(block, z);
  const std::size_t B = z.batch();
  const std::size_t T = z.seq();
  const std::size_t C = z.channels();
  Tensor3 x(B, T, C);
  Tensor3 s(B, T, C), u(B, T, C);
  CausalCache cache(block, B, T);
  for (std::size_t b = 0; b < B; ++b) std::ranges::copy(z.row(b, 0), x.row(b, 0).begin());
  if (T > 1) cache.commit(x, 1);
  for (std::size_t t = 1; t < T; ++t) {
    cache.evaluate(x, t + 1, s, u);
    for (std::size_t b = 0; b < B; ++b) {
      auto xr = x.row(b, t);
      auto zr = z.row(b, t);
      auto sr = s.row(b, t);
      auto ur = u.row(b, t);
      for (std::size_t c = 0; c < C; ++c) xr[c] = std::exp(sr[c]) * zr[c] + ur[c];
      if (!all_finite(xr))
        throw OverflowError("serial inverse overflow at position " + std::to_string(t),
                            max_abs(xr), t);
    }
    if (t + 1 < T) cache.commit(x, t + 1);
  }
  return x;
}

std::vector<double> forward_log_det(const FlowBlock& block, const Tensor3& x) {
  const auto p = eval_su(block, x);
  std::vector<double> out(x.batch());
  std::vector<double> vals;
  for (std::size_t b = 0; b < x.batch(); ++b) {
    vals.clear();
    for (std::size_t t = 0; t < x.seq(); ++t)
      for (double v : p.s.row(b, t)) vals.push_back(-v);
    out[b] = stable_sum(vals);
  }
  return out;
}

Tensor3 forward_block_in_model(const FlowBlock& block, const Tensor3& x) {
  if (!block.flip) return forward_block(block, x);
  return reverse_sequence(forward_block(block, reverse_sequence(x)));
}

Tensor3 forward_model(const FlowModel& model, const Tensor3& x) {
  Tensor3 cur = x;
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    try {
      cur = forward_block_in_model(model.blocks[l], cur);
    } catch (const OverflowError& e) {
      throw e.with_block(l);
    }
  }
  return cur;
}

Tensor3 inverse_model_serial(const FlowModel& model, const Tensor3& z) {
  Tensor3 cur = z;
  for (std::size_t i = model.blocks.size(); i-- > 0;) {
    const FlowBlock& blk = model.blocks[i];
    try {
      cur = blk.flip ? reverse_sequence(inverse_block_serial(blk, reverse_sequence(cur)))
                     : inverse_block_serial(blk, cur);
    } catch (const OverflowError& e) {
      throw e.with_block(i);
    }
  }
  return cur;
}

// ---------------------------------------------------------------------------

double default_weight_scale(std::size_t depth) {
  return 0.02 / std::sqrt(static_cast<double>(std::max<std::size_t>(depth, 1)));
}

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
  Matrix m(rows, cols);
  if (stddev == 0.0) return m;
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double stddev) {
  std::vector<double> v(n, 0.0);
  if (stddev == 0.0) return v;
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace

FlowModel gen_synthetic_model(std::uint64_t seed, const ModelConfig& config, double weight_scale) {
  config.validate();
  if (!(weight_scale >= 0.0) || !std::isfinite(weight_scale))
    throw std::invalid_argument("weight scale must be finite and non-negative");
  std::mt19937_64 rng(seed);
  const std::size_t C = config.channels;
  const std::size_t H = config.mlp_hidden;
  FlowModel model;
  model.config = config;
  for (std::size_t l = 0; l < config.blocks; ++l) {
    FlowBlock blk;
    for (std::size_t d = 0; d < config.depth; ++d) {
      AttentionLayer layer;
      layer.wq = random_matrix(rng, C, C, weight_scale);
      layer.wk = random_matrix(rng, C, C, weight_scale);
      layer.wv = random_matrix(rng, C, C, weight_scale);
      layer.wo = random_matrix(rng, C, C, weight_scale);
      layer.mlp_w1 = random_matrix(rng, C, H, weight_scale);
      layer.mlp_w2 = random_matrix(rng, H, C, weight_scale);
      layer.ln1_gain.assign(C, 1.0);
      layer.ln1_bias.assign(C, 0.0);
      layer.ln2_gain.assign(C, 1.0);
      layer.ln2_bias.assign(C, 0.0);
      blk.layers.push_back(std::move(layer));
    }
    const double out_scale = weight_scale * config.gain(l);
    blk.w_s = random_matrix(rng, C, C, out_scale);
    blk.w_u = random_matrix(rng, C, C, out_scale);
    blk.b_s = random_vector(rng, C, out_scale);
    blk.b_u = random_vector(rng, C, out_scale);
    blk.flip = config.alternate_flip && (l % 2 == 1);
    model.blocks.push_back(std::move(blk));
  }
  return model;
}

Tensor3 standard_normal(std::uint64_t seed, std::size_t batch, std::size_t seq,
                        std::size_t channels, double stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor3 t(batch, seq, channels);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace gsj
