#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gsj/errors.hpp"
#include "gsj/samplers.hpp"
#include "gsj/strategy.hpp"
#include "oracles.hpp"

using namespace gsj;

namespace {

FlowBlock block_for(std::uint64_t seed, std::size_t T, std::size_t C, double gain = 1.0) {
  auto cfg = oracle::small_config(T, C);
  cfg.block_gain = {gain};
  return gen_synthetic_model(seed, cfg, 0.05).blocks[0];
}

SamplerOptions exhaustive() {
  SamplerOptions o;
  o.ebound = 0.0;
  return o;
}

}  // namespace

TEST_CASE("Jacobi converges to the serial solution in T-1 sweeps") {
  for (std::size_t T : {2, 5, 9, 16}) {
    const FlowBlock blk = block_for(T, T, 3, 2.0);
    const Tensor3 z = standard_normal(T + 1, 2, T, 3);
    const Tensor3 ref = oracle::serial_inverse(blk, z);
    for (InitMode init : {InitMode::FromZ, InitMode::FromZ0}) {
      const auto r = jacobi_sample(blk, z, init, T - 1, exhaustive());
      CHECK(max_abs_diff(r.x, ref) <= 1e-10);
      CHECK(r.trace.su_evals == T - 1);
      CHECK(r.trace.records.size() == T - 1);
    }
  }
}

TEST_CASE("k Jacobi sweeps fix the first k+1 positions exactly") {
  const std::size_t T = 10;
  const FlowBlock blk = block_for(3, T, 2, 3.0);
  const Tensor3 z = standard_normal(4, 1, T, 2);
  const Tensor3 ref = inverse_block_serial(blk, z);
  for (std::size_t k = 1; k < T; ++k) {
    const auto r = jacobi_sample(blk, z, InitMode::FromZ0, k, exhaustive());
    double err = 0.0;
    for (std::size_t t = 0; t <= k; ++t)
      for (std::size_t c = 0; c < 2; ++c) err = std::max(err, std::abs(r.x(0, t, c) - ref(0, t, c)));
    CHECK(err == 0.0);
  }
}

TEST_CASE("GS-Jacobi with full module budgets equals serial") {
  const std::size_t T = 13;
  const FlowBlock blk = block_for(8, T, 3, 2.0);
  const Tensor3 z = standard_normal(9, 3, T, 3);
  const Tensor3 ref = inverse_block_serial(blk, z);
  for (std::size_t G : {1, 2, 3, 4, 13}) {
    const Segmentation seg = Segmentation::equal(T, G);
    const auto r = gs_jacobi_sample(blk, z, seg, seg.max_size(), InitMode::FromZ, exhaustive());
    CHECK(max_abs_diff(r.x, ref) <= 1e-10);
  }
}

TEST_CASE("GS-Jacobi with G = T reproduces serial bit for bit") {
  const std::size_t T = 12;
  const FlowBlock blk = block_for(1, T, 4, 2.0);
  const Tensor3 z = standard_normal(2, 2, T, 4);
  const auto r = gs_jacobi_sample(blk, z, Segmentation::equal(T, T), 1, InitMode::FromZ0, exhaustive());
  CHECK(r.x == inverse_block_serial(blk, z));
  CHECK(r.trace.su_evals == T);
}

TEST_CASE("equal segmentation puts the remainder in the last module") {
  const Segmentation s = Segmentation::equal(10, 3);
  CHECK(s.groups() == 3);
  CHECK(s.boundaries() == std::vector<std::size_t>{0, 3, 6, 10});
  CHECK(s.max_size() == 4);
  CHECK_THROWS_AS(Segmentation::equal(3, 4), DimensionError);
  CHECK_THROWS_AS(Segmentation({0, 2, 2, 5}), DimensionError);
}

TEST_CASE("early stop on ebound") {
  const std::size_t T = 32;
  const FlowBlock blk = block_for(5, T, 3);
  const Tensor3 z = standard_normal(6, 4, T, 3);
  SamplerOptions o;
  o.ebound = 1e-8;
  const auto r = jacobi_sample(blk, z, InitMode::FromZ, T - 1, o);
  REQUIRE_FALSE(r.trace.records.empty());
  CHECK(r.trace.records.size() < T - 1);
  CHECK(r.trace.records.back().residual <= 1e-8);
  for (std::size_t i = 0; i + 1 < r.trace.records.size(); ++i) CHECK(r.trace.records[i].residual > 1e-8);
  // Residual is the mean squared update of the last sweep.
  const auto prev = jacobi_sample(blk, z, InitMode::FromZ, r.trace.records.size() - 1, exhaustive());
  Tensor3 d = r.x - prev.x;
  double sq = 0.0;
  for (double v : d.data()) sq += v * v;
  CHECK(r.trace.records.back().residual == doctest::Approx(sq / static_cast<double>(d.size())).epsilon(1e-12));
}

TEST_CASE("distances are recorded against an oracle") {
  const std::size_t T = 8;
  const FlowBlock blk = block_for(2, T, 2);
  const Tensor3 z = standard_normal(3, 2, T, 2);
  const Tensor3 ref = inverse_block_serial(blk, z);
  SamplerOptions o = exhaustive();
  o.oracle = &ref;
  const auto r = jacobi_sample(blk, z, InitMode::FromZ, T - 1, o);
  for (const auto& rec : r.trace.records) REQUIRE(rec.distance.has_value());
  CHECK(*r.trace.records.back().distance <= 1e-10);
  const auto started = jacobi_sample_from(blk, z, ref, 3, o);
  for (const auto& rec : started.trace.records) CHECK(*rec.distance == 0.0);
}

TEST_CASE("model sampling follows the strategy") {
  auto cfg = oracle::small_config(16, 3, 3);
  const FlowModel m = gen_synthetic_model(5, cfg, 0.1);
  const Tensor3 z = standard_normal(7, 2, 16, 3);
  const Tensor3 ref = inverse_model_serial(m, z);
  const std::vector<InitMode> inits{InitMode::FromZ, InitMode::FromZ0, InitMode::FromZ};
  ModelSampleOptions o;
  o.ebound = 0.0;
  const auto r = sample_model(m, z, parse_strategy("[1-4-4-15]"), inits, o);
  CHECK(max_abs_diff(r.x, ref) <= 1e-10);
  CHECK(r.su_evals == 15 + 16 + 15);
  CHECK(r.traces[1].records.back().module == 3);
  const auto s = sample_model_serial(m, z);
  CHECK(s.x == ref);
  CHECK(s.su_evals == 3 * 15);
  CHECK_THROWS_AS(sample_model(m, z, parse_strategy("[3-4-4-15]"), inits, o), ParseError);
  CHECK_THROWS_AS(sample_model(m, z, parse_strategy("[1-4-4-15]"), std::vector<InitMode>(2), o),
                  DimensionError);
}

TEST_CASE("clamping s keeps iterates finite and counts events") {
  auto cfg = oracle::small_config(24, 4);
  cfg.block_gain = {40.0};
  const FlowBlock blk = gen_synthetic_model(0, cfg, default_weight_scale(2)).blocks[0];
  const Tensor3 z = standard_normal(1, 2, 24, 4);
  SamplerOptions o = exhaustive();
  CHECK_THROWS_AS(jacobi_sample(blk, z, InitMode::FromZ, 23, o), OverflowError);
  o.clamp_s = true;
  const auto r = jacobi_sample(blk, z, InitMode::FromZ, 3, o);
  CHECK(r.trace.clamp_events > 0);
  CHECK(all_finite(r.x.data()));
}

TEST_CASE("overflow reports sweep and module") {
  auto cfg = oracle::small_config(24, 4);
  cfg.block_gain = {40.0};
  const FlowBlock blk = gen_synthetic_model(0, cfg, default_weight_scale(2)).blocks[0];
  const Tensor3 z = standard_normal(1, 2, 24, 4);
  try {
    (void)gs_jacobi_sample(blk, z, Segmentation::equal(24, 2), 12, InitMode::FromZ, exhaustive());
    FAIL("expected overflow");
  } catch (const OverflowError& e) {
    CHECK(e.iteration().has_value());
    CHECK(e.module().has_value());
  }
}

TEST_CASE("trace CSV layout") {
  ConvergenceTrace t;
  TraceRecord r;
  r.block = 2;
  r.module = 1;
  r.iter = 3;
  r.residual = 0.5;
  r.wall_ns = 10;
  r.su_evals = 7;
  t.records.push_back(r);
  r.distance = 0.25;
  t.records.push_back(r);
  const std::string csv = trace_to_csv(std::span(&t, 1));
  CHECK(csv ==
        "block,module,iter,distance,residual,wall_ns,su_evals\n"
        "2,1,3,\"\",0.5,10,7\n"
        "2,1,3,0.25,0.5,10,7\n");
}
