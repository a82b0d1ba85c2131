#include "gsj/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "gsj/analysis.hpp"
#include "gsj/errors.hpp"
#include "gsj/metrics.hpp"
#include "gsj/samplers.hpp"
#include "gsj/strategy.hpp"
#include "gsj/tensor.hpp"

namespace gsj {

namespace {

constexpr std::size_t kVerifySeq = 16;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

class Collector {
 public:
  explicit Collector(std::string suite) : suite_(std::move(suite)) {}

  void check(const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    CheckResult r{suite_, name, false, {}};
    try {
      std::tie(r.pass, r.detail) = fn();
    } catch (const std::exception& e) {
      r.detail = std::string("threw: ") + e.what();
    }
    out_.push_back(std::move(r));
  }

  std::vector<CheckResult> take() { return std::move(out_); }

 private:
  std::string suite_;
  std::vector<CheckResult> out_;
};

std::pair<bool, std::string> within(double value, double tol) {
  return {value <= tol, "max err " + num(value) + " (tol " + num(tol) + ")"};
}

std::size_t verify_seq(const FlowModel& m) { return std::min(m.config.seq_len, kVerifySeq); }

std::vector<CheckResult> suite_tensor(std::uint64_t seed) {
  Collector c("tensor");
  const Tensor3 x = standard_normal(seed, 3, 5, 4);
  c.check("reverse_sequence is an involution", [&] {
    return std::pair{reverse_sequence(reverse_sequence(x)) == x, std::string()};
  });
  c.check("patchify/unpatchify roundtrip", [&] {
    return std::pair{patchify(unpatchify(x), 4) == x, std::string()};
  });
  c.check("spectral norm between frobenius/sqrt(rank) and frobenius", [&] {
    const Matrix m = batch_mean(x);
    double fro = 0.0;
    for (double v : m.data()) fro += v * v;
    fro = std::sqrt(fro);
    const double s = spectral_norm(m);
    const double r = static_cast<double>(std::min(m.rows(), m.cols()));
    return std::pair{s <= fro * (1 + 1e-12) && s >= fro / std::sqrt(r) * (1 - 1e-12),
                     "spectral " + num(s) + ", frobenius " + num(fro)};
  });
  c.check("identity has unit spectral norm", [&] {
    return within(std::abs(spectral_norm(Matrix::identity(7)) - 1.0), 1e-12);
  });
  c.check("stable_sum cancels large terms", [&] {
    const std::vector<double> v{1e16, 1.0, -1e16, 1.0};
    return within(std::abs(stable_sum(v) - 2.0), 0.0);
  });
  return c.take();
}

std::vector<CheckResult> suite_flow(const FlowModel& model, std::uint64_t seed) {
  Collector c("flow");
  const std::size_t T = verify_seq(model), C = model.channels();
  const Tensor3 x = standard_normal(seed, 2, T, C);
  c.check("model roundtrip forward then serial inverse", [&] {
    return within(max_abs_diff(inverse_model_serial(model, forward_model(model, x)), x), 1e-9);
  });
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    const FlowBlock& blk = model.blocks[l];
    const std::string tag = "block " + std::to_string(l);
    c.check(tag + ": position 0 passes through", [&] {
      const Tensor3 z = forward_block(blk, x);
      double e = 0.0;
      for (std::size_t b = 0; b < x.batch(); ++b)
        for (std::size_t ch = 0; ch < C; ++ch) e = std::max(e, std::abs(z(b, 0, ch) - x(b, 0, ch)));
      return within(e, 0.0);
    });
    c.check(tag + ": causality of s and u", [&] {
      const auto base = eval_su(blk, x);
      const std::size_t t = T / 2;
      Tensor3 xp = x;
      for (std::size_t ch = 0; ch < C; ++ch) xp(0, t, ch) += 0.5;
      const auto pert = eval_su(blk, xp);
      double leak = 0.0;
      for (std::size_t r = 0; r <= t; ++r)
        for (std::size_t ch = 0; ch < C; ++ch) {
          leak = std::max(leak, std::abs(pert.s(0, r, ch) - base.s(0, r, ch)));
          leak = std::max(leak, std::abs(pert.u(0, r, ch) - base.u(0, r, ch)));
        }
      return within(leak, 0.0);
    });
    c.check(tag + ": log-det equals -sum(s)", [&] {
      const auto ld = forward_log_det(blk, x);
      const auto su = eval_su(blk, x);
      double e = 0.0;
      for (std::size_t b = 0; b < x.batch(); ++b) {
        double acc = 0.0;
        for (std::size_t t = 0; t < T; ++t)
          for (double v : su.s.row(b, t)) acc -= v;
        e = std::max(e, std::abs(acc - ld[b]));
      }
      return within(e, 1e-12);
    });
  }
  return c.take();
}

std::vector<CheckResult> suite_samplers(const FlowModel& model, std::uint64_t seed) {
  Collector c("samplers");
  const std::size_t T = verify_seq(model), C = model.channels();
  const Tensor3 z = standard_normal(seed + 11, 2, T, C);
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    const FlowBlock& blk = model.blocks[l];
    const std::string tag = "block " + std::to_string(l);
    const Tensor3 serial = inverse_block_serial(blk, z);
    SamplerOptions no_stop;
    no_stop.ebound = 0.0;
    c.check(tag + ": Jacobi after T-1 sweeps equals serial", [&] {
      const auto r = jacobi_sample(blk, z, InitMode::FromZ, std::max<std::size_t>(T - 1, 1), no_stop);
      return within(max_abs_diff(r.x, serial), 1e-10);
    });
    for (std::size_t g : {std::size_t{1}, std::size_t{2}, T}) {
      if (T / g == 0) continue;
      c.check(tag + ": GS-Jacobi G=" + std::to_string(g) + " equals serial", [&] {
        const Segmentation seg = Segmentation::equal(T, g);
        const auto r = gs_jacobi_sample(blk, z, seg, seg.max_size(), InitMode::FromZ0, no_stop);
        return within(max_abs_diff(r.x, serial), 1e-10);
      });
    }
    c.check(tag + ": serial solution is a fixed point", [&] {
      const auto r = jacobi_sample_from(blk, z, serial, 1, no_stop);
      return within(max_abs_diff(r.x, serial), 1e-12);
    });
  }
  c.check("model sampling counts su-evals", [&] {
    Strategy all_serial;
    for (std::size_t l = 0; l < model.blocks.size(); ++l) all_serial.stack.push_back(l);
    all_serial.gs.assign(all_serial.stack.size(), T);
    all_serial.j.assign(all_serial.stack.size(), 1);
    const std::vector<InitMode> inits(model.blocks.size(), InitMode::FromZ);
    const auto r = sample_model(model, z, all_serial, inits, {});
    const auto s = sample_model_serial(model, z);
    const bool ok = r.su_evals == model.blocks.size() * T && s.su_evals == model.blocks.size() * (T - 1);
    return std::pair{ok && max_abs_diff(r.x, s.x) <= 1e-10,
                     "G=T su_evals " + std::to_string(r.su_evals) + ", serial " +
                         std::to_string(s.su_evals)};
  });
  return c.take();
}

std::vector<CheckResult> suite_metrics(const FlowModel& model, std::uint64_t seed) {
  Collector c("metrics");
  const std::size_t T = verify_seq(model), C = model.channels();
  const Tensor3 z = standard_normal(seed + 21, 8, T, C);
  const FlowBlock& blk = model.blocks.back();
  const Tensor3 xs = inverse_block_serial(blk, z);
  c.check("IGM is zero at the fixed point", [&] {
    return within(compute_igm_from(blk, xs, z, xs).value, 0.0);
  });
  c.check("CRM = nvp * ws + wu", [&] {
    const auto r = compute_crm(blk, xs);
    return within(std::abs(r.crm - (r.parts.nvp * r.parts.ws + r.parts.wu)), 1e-12);
  });
  c.check("scaling w_u by a adds (a-1) * wu", [&] {
    const double a = 2.5;
    FlowBlock scaled = blk;
    scaled.w_u *= a;
    const auto r0 = compute_crm(blk, xs);
    const auto r1 = compute_crm(scaled, xs);
    return within(std::abs(r1.crm - r0.crm - (a - 1.0) * r0.parts.wu), 1e-12 * std::max(1.0, r1.crm));
  });
  c.check("stack selection is scale invariant", [&] {
    const std::vector<double> crm{141.22, 9.25, 1.36, 1.82, 7.68, 5.08, 3.08, 19.81};
    std::vector<double> scaled = crm;
    for (double& v : scaled) v *= 0.37;
    return std::pair{select_stack(crm, 3.0).blocks == select_stack(scaled, 3.0).blocks,
                     std::string()};
  });
  c.check("metric pass fills every block", [&] {
    const auto rep = metric_pass(model, synthetic_data_batch(model, seed + 1, 8));
    bool ok = rep.blocks.size() == model.blocks.size();
    for (const auto& b : rep.blocks)
      ok = ok && std::abs(b.crm - (b.parts.nvp * b.parts.ws + b.parts.wu)) <= 1e-12 * std::max(1.0, b.crm);
    return std::pair{ok, std::to_string(rep.stack.blocks.size()) + " stacked"};
  });
  return c.take();
}

std::vector<CheckResult> suite_analysis(const FlowModel& model, std::uint64_t seed) {
  Collector c("analysis");
  const std::size_t C = model.channels();
  const std::size_t T = std::min<std::size_t>({verify_seq(model), 6, kMaxGammaSize / C});
  const Tensor3 z = standard_normal(seed + 31, 1, T, C);
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    const FlowBlock& blk = model.blocks[l];
    const std::string tag = "block " + std::to_string(l);
    const Tensor3 xs = inverse_block_serial(blk, z);
    c.check(tag + ": residual vanishes at the serial solution", [&] {
      return within(max_abs(residual_field(blk, xs, z).data()), 1e-12);
    });
    c.check(tag + ": Gamma is strictly block lower triangular and nilpotent", [&] {
      const GammaMatrix g = gamma_matrix(blk, xs, z);
      return std::pair{nilpotency_check(g), "upper noise " + num(g.upper_noise) + " <= floor " +
                                                num(g.noise_floor)};
    });
    c.check(tag + ": first-order error map", [&] {
      const auto rep = verify_error_recursion(blk, z, {1e-2, 1e-3, 1e-4}, seed + 7);
      return std::pair{rep.stable, "ratio spread " + num(rep.spread)};
    });
  }
  return c.take();
}

std::vector<CheckResult> suite_cli(const FlowModel& model) {
  Collector c("cli");
  c.check("strategy [6-8-32-10]", [] {
    return std::pair{parse_strategy("[6-8-32-10]") == Strategy{{6}, {8}, {32}, 10}, std::string()};
  });
  c.check("strategy [0/7-16/8-10/13-6]", [] {
    return std::pair{parse_strategy("[0/7-16/8-10/13-6]") == Strategy{{0, 7}, {16, 8}, {10, 13}, 6},
                     std::string()};
  });
  c.check("strategy [0/6-1024-1-10] broadcasts", [] {
    return std::pair{
        parse_strategy("[0/6-1024-1-10]") == Strategy{{0, 6}, {1024, 1024}, {1, 1}, 10},
        std::string()};
  });
  c.check("format then parse is the identity", [&] {
    Strategy s;
    for (std::size_t l = 0; l < model.blocks.size(); ++l) {
      s.stack.push_back(model.blocks.size() - 1 - l);
      s.gs.push_back(l + 1);
      s.j.push_back(2 * l + 3);
    }
    s.else_j = 4;
    return std::pair{parse_strategy(format_strategy(s)) == s, format_strategy(s)};
  });
  c.check("malformed strategies are rejected", [] {
    for (const char* bad : {"", "[]", "[1-2-3]", "6-8-32-10", "[a-8-32-10]", "[1/1-2-3-4]",
                            "[1-0-3-4]", "[1/2-2/3/4-3-4]"}) {
      try {
        parse_strategy(bad);
        return std::pair{false, std::string("accepted '") + bad + "'"};
      } catch (const ParseError&) {
      }
    }
    return std::pair{true, std::string()};
  });
  return c.take();
}

}  // namespace

std::vector<std::string> verify_suite_names() {
  return {"tensor", "flow", "samplers", "metrics", "analysis", "cli", "all"};
}

std::vector<CheckResult> run_verify(const FlowModel& model, const std::string& suite,
                                    std::uint64_t seed) {
  model.validate();
  const auto names = verify_suite_names();
  if (std::ranges::find(names, suite) == names.end())
    throw ParseError("unknown verify suite '" + suite + "'");
  std::vector<CheckResult> out;
  auto add = [&](std::vector<CheckResult> v) { out.insert(out.end(), v.begin(), v.end()); };
  const bool all = suite == "all";
  if (all || suite == "tensor") add(suite_tensor(seed));
  if (all || suite == "flow") add(suite_flow(model, seed));
  if (all || suite == "samplers") add(suite_samplers(model, seed));
  if (all || suite == "metrics") add(suite_metrics(model, seed));
  if (all || suite == "analysis") add(suite_analysis(model, seed));
  if (all || suite == "cli") add(suite_cli(model));
  return out;
}

}  // namespace gsj
