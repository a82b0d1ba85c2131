#include "gsj/samplers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "gsj/errors.hpp"

namespace gsj {

std::string_view to_string(InitMode m) { return m == InitMode::FromZ ? "Z" : "Z0"; }

Tensor3 initial_guess(const Tensor3& z, InitMode mode) {
  if (mode == InitMode::FromZ) return z;
  Tensor3 x(z.batch(), z.seq(), z.channels());
  for (std::size_t b = 0; b < z.batch(); ++b) std::ranges::copy(z.row(b, 0), x.row(b, 0).begin());
  return x;
}

Segmentation::Segmentation(std::vector<std::size_t> boundaries) : bounds_(std::move(boundaries)) {
  if (bounds_.size() < 2 || bounds_.front() != 0)
    throw DimensionError("segmentation must start at 0 and contain at least one module");
  for (std::size_t i = 1; i < bounds_.size(); ++i)
    if (bounds_[i] <= bounds_[i - 1]) throw DimensionError("segmentation modules must be non-empty and ordered");
}

Segmentation Segmentation::equal(std::size_t seq_len, std::size_t groups) {
  if (groups == 0 || seq_len / groups == 0)
    throw DimensionError("cannot split " + std::to_string(seq_len) + " positions into " +
                         std::to_string(groups) + " modules");
  const std::size_t len = seq_len / groups;
  std::vector<std::size_t> b(groups + 1);
  for (std::size_t g = 0; g < groups; ++g) b[g] = g * len;
  b[groups] = seq_len;
  return Segmentation(std::move(b));
}

std::size_t Segmentation::max_size() const {
  std::size_t m = 0;
  for (std::size_t g = 0; g < groups(); ++g) m = std::max(m, size(g));
  return m;
}

std::size_t ConvergenceTrace::sweeps(std::size_t module) const {
  return static_cast<std::size_t>(
      std::ranges::count_if(records, [&](const TraceRecord& r) { return r.module == module; }));
}

void ConvergenceTrace::append(const ConvergenceTrace& other) {
  records.insert(records.end(), other.records.begin(), other.records.end());
  su_evals += other.su_evals;
  clamp_events += other.clamp_events;
}

double batch_mean_distance(const Tensor3& x, const Tensor3& target, std::size_t begin,
                           std::size_t end) {
  return spectral_norm(row_slice(batch_mean(x - target), begin, end));
}

namespace {

using Clock = std::chrono::steady_clock;

void check_inputs(const FlowBlock& block, const Tensor3& z, const SamplerOptions& opts) {
  if (z.channels() != block.channels()) throw DimensionError("noise channels differ from block");
  if (z.seq() == 0 || z.batch() == 0) throw DimensionError("empty noise tensor");
  if (!(opts.ebound >= 0.0)) throw std::invalid_argument("ebound must be >= 0");
  if (opts.oracle && !opts.oracle->same_shape(z)) throw DimensionError("oracle shape differs from z");
}

// Updates rows [begin, end) of x with sigma * z + u, returning the summed
// squared change. Throws OverflowError on a non-finite result.
double affine_update(Tensor3& x, const Tensor3& z, const Tensor3& s, const Tensor3& u,
                     std::size_t begin, std::size_t end, bool clamp, std::size_t& clamp_events,
                     std::size_t iter, std::size_t module) {
  const std::size_t C = x.channels();
  std::vector<double> sq;
  sq.reserve(x.batch() * (end - begin) * C);
  double worst = 0.0;
  bool finite = true;
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t t = begin; t < end; ++t) {
      auto xr = x.row(b, t);
      auto zr = z.row(b, t);
      auto sr = s.row(b, t);
      auto ur = u.row(b, t);
      for (std::size_t c = 0; c < C; ++c) {
        double sv = sr[c];
        if (clamp && std::abs(sv) > kSClamp) {
          sv = std::clamp(sv, -kSClamp, kSClamp);
          ++clamp_events;
        }
        const double next = std::exp(sv) * zr[c] + ur[c];
        if (!std::isfinite(next)) {
          finite = false;
          worst = std::isnan(next) ? next : std::numeric_limits<double>::infinity();
        } else if (finite) {
          worst = std::max(worst, std::abs(next));
        }
        const double d = next - xr[c];
        sq.push_back(d * d);
        xr[c] = next;
      }
    }
  }
  if (!finite) {
    throw OverflowError("iterate overflow at module " + std::to_string(module) + ", sweep " +
                            std::to_string(iter),
                        worst, iter, module);
  }
  return stable_sum(sq);
}

}  // namespace

SampleResult jacobi_sample_from(const FlowBlock& block, const Tensor3& z, Tensor3 x0,
                                std::size_t max_iters, const SamplerOptions& opts) {
  check_inputs(block, z, opts);
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!x0.same_shape(z)) throw DimensionError("initial iterate shape differs from z");
  const std::size_t B = z.batch(), T = z.seq(), C = z.channels();
  SampleResult res{std::move(x0), {}};
  Tensor3& x = res.x;
  for (std::size_t b = 0; b < B; ++b) std::ranges::copy(z.row(b, 0), x.row(b, 0).begin());

  Tensor3 s(B, T, C), u(B, T, C);
  const CausalCache cache(block, B, T);
  const double denom = static_cast<double>(B * T * C);
  const auto start = Clock::now();
  for (std::size_t k = 1; k <= max_iters; ++k) {
    // All positions read the previous iterate: evaluate first, then update.
    cache.evaluate(x, T, s, u);
    const double e =
        affine_update(x, z, s, u, 0, T, opts.clamp_s, res.trace.clamp_events, k, 0) / denom;
    ++res.trace.su_evals;
    TraceRecord rec;
    rec.block = opts.block_index;
    rec.module = 0;
    rec.iter = k;
    rec.residual = e;
    rec.su_evals = res.trace.su_evals;
    if (opts.oracle) rec.distance = batch_mean_distance(x, *opts.oracle, 0, T);
    rec.wall_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
    res.trace.records.push_back(rec);
    if (e <= opts.ebound) break;
  }
  return res;
}

SampleResult jacobi_sample(const FlowBlock& block, const Tensor3& z, InitMode init,
                           std::size_t max_iters, const SamplerOptions& opts) {
  return jacobi_sample_from(block, z, initial_guess(z, init), max_iters, opts);
}

SampleResult gs_jacobi_sample(const FlowBlock& block, const Tensor3& z, const Segmentation& seg,
                              std::size_t j_budget, InitMode init, const SamplerOptions& opts) {
  check_inputs(block, z, opts);
  if (j_budget < 1) throw std::invalid_argument("j_budget must be >= 1");
  const std::size_t B = z.batch(), T = z.seq(), C = z.channels();
  if (seg.seq_len() != T)
    throw DimensionError("segmentation covers " + std::to_string(seg.seq_len()) +
                         " positions, sequence has " + std::to_string(T));

  SampleResult res{initial_guess(z, init), {}};
  Tensor3& x = res.x;
  Tensor3 s(B, T, C), u(B, T, C);
  CausalCache cache(block, B, T);
  const double denom = static_cast<double>(B * T * C);
  const auto start = Clock::now();
  for (std::size_t g = 0; g < seg.groups(); ++g) {
    const std::size_t lo = seg.begin(g), hi = seg.end(g);
    cache.commit(x, lo);  // modules before g are final
    for (std::size_t k = 1; k <= j_budget; ++k) {
      cache.evaluate(x, hi, s, u);
      const double e =
          affine_update(x, z, s, u, lo, hi, opts.clamp_s, res.trace.clamp_events, k, g) / denom;
      ++res.trace.su_evals;
      TraceRecord rec;
      rec.block = opts.block_index;
      rec.module = g;
      rec.iter = k;
      rec.residual = e;
      rec.su_evals = res.trace.su_evals;
      if (opts.oracle) rec.distance = batch_mean_distance(x, *opts.oracle, lo, hi);
      rec.wall_ns =
          std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
      res.trace.records.push_back(rec);
      if (e <= opts.ebound) break;
    }
  }
  return res;
}

SampleResult serial_sample(const FlowBlock& block, const Tensor3& z, const SamplerOptions& opts) {
  check_inputs(block, z, opts);
  SampleResult res{inverse_block_serial(block, z), {}};
  res.trace.su_evals = z.seq() - 1;
  return res;
}

ModelSampleResult sample_model(const FlowModel& model, const Tensor3& z, const Strategy& strategy,
                               std::span<const InitMode> inits, const ModelSampleOptions& opts) {
  const std::size_t L = model.blocks.size();
  strategy.validate(L, z.seq());
  if (inits.size() != L)
    throw DimensionError("need one init mode per block (" + std::to_string(L) + "), got " +
                         std::to_string(inits.size()));
  ModelSampleResult out;
  out.traces.resize(L);
  Tensor3 cur = z;
  for (std::size_t i = L; i-- > 0;) {
    const FlowBlock& blk = model.blocks[i];
    const Tensor3 zb = blk.flip ? reverse_sequence(cur) : cur;
    std::optional<Tensor3> oracle;
    SamplerOptions so;
    so.ebound = opts.ebound;
    so.clamp_s = opts.clamp_s;
    so.block_index = i;
    try {
      if (opts.track_distance) {
        oracle = inverse_block_serial(blk, zb);
        so.oracle = &*oracle;
      }
      const std::size_t pos = strategy.find(i);
      SampleResult r =
          pos < strategy.stack.size()
              ? gs_jacobi_sample(blk, zb, Segmentation::equal(zb.seq(), strategy.gs[pos]),
                                 strategy.j[pos], inits[i], so)
              : jacobi_sample(blk, zb, inits[i], strategy.else_j, so);
      out.su_evals += r.trace.su_evals;
      out.traces[i] = std::move(r.trace);
      cur = blk.flip ? reverse_sequence(r.x) : std::move(r.x);
    } catch (const OverflowError& e) {
      throw e.with_block(i);
    }
  }
  out.x = std::move(cur);
  return out;
}

ModelSampleResult sample_model_serial(const FlowModel& model, const Tensor3& z) {
  ModelSampleResult out;
  out.x = inverse_model_serial(model, z);
  out.traces.resize(model.blocks.size());
  for (auto& t : out.traces) t.su_evals = z.seq() - 1;
  out.su_evals = model.blocks.size() * (z.seq() - 1);
  return out;
}

std::string trace_to_csv(std::span<const ConvergenceTrace> traces) {
  std::string out = "block,module,iter,distance,residual,wall_ns,su_evals\n";
  char buf[256];
  for (const auto& tr : traces) {
    for (const auto& r : tr.records) {
      std::string dist = "\"\"";
      if (r.distance) {
        std::snprintf(buf, sizeof buf, "%.17g", *r.distance);
        dist = buf;
      }
      std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%s,%.17g,%lld,%zu\n", r.block, r.module, r.iter,
                    dist.c_str(), r.residual, static_cast<long long>(r.wall_ns), r.su_evals);
      out += buf;
    }
  }
  return out;
}

}  // namespace gsj
