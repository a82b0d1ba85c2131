#include "gsj/commands.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <future>
#include <ostream>
#include <sstream>
#include <system_error>

#include "CLI11.hpp"
#include "json.hpp"

#include "gsj/errors.hpp"
#include "gsj/model_io.hpp"
#include "gsj/samplers.hpp"
#include "gsj/strategy.hpp"
#include "gsj/verify.hpp"

namespace gsj::cli {

namespace fs = std::filesystem;

namespace {

void apply_threads(const GlobalOptions& g) {
  if (g.threads > 0) omp_set_num_threads(g.threads);
}

MetricReport metrics_for(const FlowModel& model, const GlobalOptions& g,
                         const std::optional<fs::path>& path, std::size_t batch) {
  if (path) return metric_report_from_json(read_text_file(*path));
  MetricOptions mo;
  mo.norm = g.norm;
  return metric_pass(model, synthetic_data_batch(model, g.seed + 1, batch), mo);
}

Tensor3 noise_for(const FlowModel& model, std::uint64_t seed, std::size_t count) {
  return standard_normal(seed, count, model.config.seq_len, model.config.channels);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename Fn>
int guarded(std::ostream& log, Fn&& fn) {
  try {
    return fn();
  } catch (const OverflowError& e) {
    log << "error: numerical overflow: " << e.what() << " (max |entry| " << e.max_abs() << ")\n";
    return kOverflow;
  } catch (const ParseError& e) {
    log << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const MalformedFileError& e) {
    log << "error: malformed file: " << e.what() << "\n";
    return kIo;
  } catch (const VersionError& e) {
    log << "error: unsupported file version: " << e.what() << "\n";
    return kIo;
  } catch (const std::system_error& e) {
    log << "error: I/O: " << e.what() << "\n";
    return kIo;
  } catch (const DimensionError& e) {
    log << "error: dimension mismatch: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace

int cmd_gen_model(const GlobalOptions& g, const GenModelArgs& a, std::ostream& log) {
  return guarded(log, [&] {
    const double scale = a.weight_scale.value_or(default_weight_scale(a.config.depth));
    const FlowModel model = gen_synthetic_model(g.seed, a.config, scale);
    save_model(model, a.out);
    log << "wrote " << a.out.string() << " " << model.config.bracket() << " T=" << model.config.seq_len
        << " weight_scale=" << scale << "\n";
    return int{kOk};
  });
}

int cmd_metrics(const GlobalOptions& g, const MetricsArgs& a, std::ostream& log) {
  return guarded(log, [&] {
    apply_threads(g);
    const FlowModel model = load_model(a.model);
    MetricOptions mo;
    mo.norm = g.norm;
    mo.dominance_ratio = a.dominance_ratio;
    const MetricReport rep =
        metric_pass(model, synthetic_data_batch(model, g.seed + 1, a.batch), mo);
    if (g.format == OutputFormat::Csv) {
      std::string csv = "block,igm_z,igm_z0,init,crm,nvp,ws,wu,percent\n";
      for (std::size_t l = 0; l < rep.blocks.size(); ++l) {
        const auto& b = rep.blocks[l];
        csv += std::to_string(l) + "," + fmt_double(b.igm_z.value) + "," + fmt_double(b.igm_z0.value) +
               "," + std::string(to_string(b.chosen_init)) + "," + fmt_double(b.crm) + "," +
               fmt_double(b.parts.nvp) + "," + fmt_double(b.parts.ws) + "," + fmt_double(b.parts.wu) +
               "," + fmt_double(b.crm_percent) + "\n";
      }
      write_text_file(a.out, csv);
    } else {
      write_text_file(a.out, metric_report_to_json(rep));
    }
    log << "stack:";
    for (std::size_t b : rep.stack.blocks) log << " " << b;
    log << "\nwrote " << a.out.string() << "\n";
    return int{kOk};
  });
}

int cmd_sample(const GlobalOptions& g, const SampleArgs& a, std::ostream& log) {
  return guarded(log, [&] {
    apply_threads(g);
    const FlowModel model = load_model(a.model);
    const Strategy strategy = parse_strategy(a.strategy);
    strategy.validate(model.blocks.size(), model.config.seq_len);
    const MetricReport metrics = metrics_for(model, g, a.metrics, a.metric_batch);
    const Tensor3 z = noise_for(model, g.seed, a.count);
    ModelSampleOptions so;
    so.ebound = g.ebound;
    so.clamp_s = a.clamp_s;
    so.track_distance = a.track_distance;
    const auto res = sample_model(model, z, strategy, metrics, so);
    if (a.out) save_tensor(res.x, *a.out);
    if (a.trace_dir) {
      fs::create_directories(*a.trace_dir);
      for (std::size_t l = 0; l < res.traces.size(); ++l) {
        write_text_file(*a.trace_dir / ("block_" + std::to_string(l) + ".csv"),
                        trace_to_csv(std::span(&res.traces[l], 1)));
      }
      write_text_file(*a.trace_dir / "trace.csv", trace_to_csv(res.traces));
    }
    log << "strategy " << format_strategy(strategy) << " su_evals=" << res.su_evals
        << " (serial " << model.blocks.size() * (model.config.seq_len - 1) << ")\n";
    return int{kOk};
  });
}

std::vector<BenchRecord> run_bench(const FlowModel& model, const MetricReport& metrics,
                                   const GlobalOptions& g, const BenchArgs& a) {
  if (a.repeats < 1) throw std::invalid_argument("bench: repeats must be >= 1");
  std::vector<Strategy> strategies;
  for (const auto& s : a.strategies) {
    strategies.push_back(parse_strategy(s));
    strategies.back().validate(model.blocks.size(), model.config.seq_len);
  }
  const Tensor3 z = noise_for(model, g.seed, a.count);
  const auto inits = metrics.inits();
  using Clock = std::chrono::steady_clock;

  auto median_ns = [](std::vector<std::int64_t> v) {
    std::ranges::sort(v);
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
  };

  std::vector<BenchRecord> rows;
  // Serial baseline.
  ModelSampleResult serial;
  {
    std::vector<std::int64_t> times;
    for (std::size_t r = 0; r < a.repeats; ++r) {
      const auto t0 = Clock::now();
      serial = sample_model_serial(model, z);
      times.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count());
    }
    BenchRecord rec;
    rec.strategy = "serial";
    rec.wall_ns = median_ns(times);
    rec.su_evals = serial.su_evals;
    if (a.verify) rec.deviation = 0.0;
    rows.push_back(rec);
  }

  ModelSampleOptions so;
  so.ebound = g.ebound;

  auto run_one = [&](const Strategy& st) {
    std::vector<std::int64_t> times;
    ModelSampleResult res;
    for (std::size_t r = 0; r < a.repeats; ++r) {
      const auto t0 = Clock::now();
      res = sample_model(model, z, st, inits, so);
      times.push_back(std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count());
    }
    BenchRecord rec;
    rec.strategy = format_strategy(st);
    rec.wall_ns = median_ns(times);
    rec.su_evals = res.su_evals;
    if (a.verify) rec.deviation = max_abs_diff(res.x, serial.x);
    if (a.trace_dir) {
      fs::create_directories(*a.trace_dir);
      std::string name = rec.strategy;
      std::ranges::replace(name, '/', '_');
      const fs::path p = *a.trace_dir / ("trace_" + name + ".csv");
      write_text_file(p, trace_to_csv(res.traces));
      rec.trace_files.push_back(p);
    }
    return rec;
  };

  if (a.parallel) {
    std::vector<std::future<BenchRecord>> futs;
    for (const auto& st : strategies) futs.push_back(std::async(std::launch::async, run_one, st));
    for (auto& f : futs) rows.push_back(f.get());
  } else {
    for (const auto& st : strategies) rows.push_back(run_one(st));
  }
  for (auto& r : rows)
    r.speedup = r.wall_ns > 0 ? static_cast<double>(rows.front().wall_ns) / static_cast<double>(r.wall_ns)
                              : 0.0;
  return rows;
}

std::string bench_to_csv(const std::vector<BenchRecord>& rows) {
  std::string out = "strategy,wall_ns,su_evals,deviation,speedup,timing,trace_files\n";
  for (const auto& r : rows) {
    std::string traces;
    for (std::size_t i = 0; i < r.trace_files.size(); ++i) {
      if (i) traces += ';';
      traces += r.trace_files[i].string();
    }
    out += r.strategy + "," + std::to_string(r.wall_ns) + "," + std::to_string(r.su_evals) + "," +
           (r.deviation ? fmt_double(*r.deviation) : std::string("\"\"")) + "," +
           fmt_double(r.speedup) + ",cpu-desk-scale," + traces + "\n";
  }
  return out;
}

std::string bench_to_json(const std::vector<BenchRecord>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json traces = nlohmann::json::array();
    for (const auto& p : r.trace_files) traces.push_back(p.string());
    arr.push_back({{"strategy", r.strategy},
                   {"wall_ns", r.wall_ns},
                   {"su_evals", r.su_evals},
                   {"deviation", r.deviation ? nlohmann::json(*r.deviation) : nlohmann::json(nullptr)},
                   {"speedup", r.speedup},
                   {"timing", "cpu-desk-scale"},
                   {"trace_files", traces}});
  }
  return arr.dump(2);
}

int cmd_bench(const GlobalOptions& g, const BenchArgs& a, std::ostream& log) {
  return guarded(log, [&] {
    apply_threads(g);
    const FlowModel model = load_model(a.model);
    const MetricReport metrics = metrics_for(model, g, a.metrics, a.metric_batch);
    const auto rows = run_bench(model, metrics, g, a);
    write_text_file(a.out, g.format == OutputFormat::Json ? bench_to_json(rows) : bench_to_csv(rows));
    log << "timings are desk-scale CPU measurements, not comparable to accelerator runs\n";
    for (const auto& r : rows) {
      log << r.strategy << " wall_ns=" << r.wall_ns << " su_evals=" << r.su_evals;
      if (r.deviation) log << " deviation=" << *r.deviation;
      log << " speedup=" << r.speedup << "\n";
    }
    return int{kOk};
  });
}

int cmd_verify(const GlobalOptions& g, const fs::path& model_path, const std::string& suite,
               std::ostream& log) {
  return guarded(log, [&] {
    apply_threads(g);
    const auto names = verify_suite_names();
    if (std::ranges::find(names, suite) == names.end())
      throw ParseError("unknown verify suite '" + suite + "'");
    const FlowModel model = load_model(model_path);
    const auto results = run_verify(model, suite, g.seed);
    std::size_t failed = 0;
    for (const auto& r : results) {
      log << (r.pass ? "[PASS] " : "[FAIL] ") << r.suite << "/" << r.name;
      if (!r.detail.empty()) log << "  " << r.detail;
      log << "\n";
      failed += r.pass ? 0 : 1;
    }
    log << results.size() - failed << "/" << results.size() << " checks passed\n";
    return failed ? int{kVerifyFailed} : int{kOk};
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Jacobi and Gauss-Seidel-Jacobi inversion of autoregressive affine flows"};
  app.require_subcommand(1);

  GlobalOptions g;
  std::string norm = "spectral";
  bool as_json = false, as_csv = false;
  app.add_option("--seed", g.seed, "Seed for models, noise and metric batches");
  app.add_option("--threads", g.threads, "Worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
  app.add_option("--ebound", g.ebound, "Early-stop bound on the mean-square update")->check(CLI::NonNegativeNumber);
  app.add_option("--norm", norm, "Metric norm")->check(CLI::IsMember({"spectral", "frobenius", "one"}));
  auto* jf = app.add_flag("--json", as_json, "JSON output where supported");
  app.add_flag("--csv", as_csv, "CSV output where supported")->excludes(jf);

  GenModelArgs gen;
  double weight_scale = -1.0;
  bool no_flip = false;
  auto* c_gen = app.add_subcommand("gen-model", "Write a seeded synthetic model");
  c_gen->add_option("--out", gen.out, "Output model file")->required();
  c_gen->add_option("--channels", gen.config.channels);
  c_gen->add_option("--blocks", gen.config.blocks);
  c_gen->add_option("--depth", gen.config.depth);
  c_gen->add_option("--seq-len", gen.config.seq_len);
  c_gen->add_option("--mlp-hidden", gen.config.mlp_hidden);
  c_gen->add_option("--patch-size", gen.config.patch_size);
  c_gen->add_option("--noise-std", gen.config.noise_std);
  c_gen->add_option("--weight-scale", weight_scale, "Default 0.02/sqrt(depth)");
  c_gen->add_option("--block-gain", gen.config.block_gain, "Per-block project-out gains")->delimiter(',');
  c_gen->add_flag("--no-flip", no_flip, "Do not alternate sequence reversal");

  MetricsArgs met;
  auto* c_met = app.add_subcommand("metrics", "Compute IGM/CRM and the stack selection");
  c_met->add_option("--model", met.model)->required();
  c_met->add_option("--batch", met.batch)->check(CLI::PositiveNumber);
  c_met->add_option("--ratio", met.dominance_ratio, "Dominance ratio (> 1)");
  c_met->add_option("--out", met.out)->required();

  SampleArgs smp;
  std::string smp_metrics, smp_traces, smp_out;
  auto* c_smp = app.add_subcommand("sample", "Invert seeded noise with a strategy");
  c_smp->add_option("--model", smp.model)->required();
  c_smp->add_option("--strategy", smp.strategy, "e.g. [6-8-32-10]")->required();
  c_smp->add_option("--count", smp.count)->check(CLI::PositiveNumber);
  c_smp->add_option("--metrics", smp_metrics, "Metric report JSON; computed when omitted");
  c_smp->add_option("--metric-batch", smp.metric_batch)->check(CLI::PositiveNumber);
  c_smp->add_option("--trace-dir", smp_traces);
  c_smp->add_option("--out", smp_out, "Write samples as a tensor JSON file");
  c_smp->add_flag("--clamp", smp.clamp_s, "Clamp s to [-8, 8] while sampling");
  c_smp->add_flag("--track-distance", smp.track_distance, "Record distances to the serial solution");

  BenchArgs bench;
  std::string bench_metrics, bench_traces;
  bool no_verify = false;
  auto* c_bench = app.add_subcommand("bench", "Time strategies against the serial baseline");
  c_bench->add_option("--model", bench.model)->required();
  c_bench->add_option("--strategy", bench.strategies, "Repeatable")->required()->allow_extra_args(false);
  c_bench->add_option("--repeats", bench.repeats)->check(CLI::PositiveNumber);
  c_bench->add_option("--count", bench.count)->check(CLI::PositiveNumber);
  c_bench->add_option("--metrics", bench_metrics);
  c_bench->add_option("--metric-batch", bench.metric_batch)->check(CLI::PositiveNumber);
  c_bench->add_option("--trace-dir", bench_traces);
  c_bench->add_option("--out", bench.out)->required();
  c_bench->add_flag("--no-verify", no_verify, "Skip deviation against the serial output");
  c_bench->add_flag("--parallel", bench.parallel, "Run strategies concurrently (not for timing)");

  std::string verify_model, verify_suite = "all";
  auto* c_ver = app.add_subcommand("verify", "Run invariant suites against a model");
  c_ver->add_option("--model", verify_model)->required();
  c_ver->add_option("--suite", verify_suite)->check(CLI::IsMember(verify_suite_names()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  g.norm = parse_norm_kind(norm);
  g.format = as_json ? OutputFormat::Json : as_csv ? OutputFormat::Csv : OutputFormat::Default;

  if (*c_gen) {
    if (weight_scale >= 0.0) gen.weight_scale = weight_scale;
    gen.config.alternate_flip = !no_flip;
    return cmd_gen_model(g, gen, err);
  }
  if (*c_met) return cmd_metrics(g, met, err);
  if (*c_smp) {
    if (!smp_metrics.empty()) smp.metrics = smp_metrics;
    if (!smp_traces.empty()) smp.trace_dir = smp_traces;
    if (!smp_out.empty()) smp.out = smp_out;
    return cmd_sample(g, smp, err);
  }
  if (*c_bench) {
    if (!bench_metrics.empty()) bench.metrics = bench_metrics;
    if (!bench_traces.empty()) bench.trace_dir = bench_traces;
    bench.verify = !no_verify;
    return cmd_bench(g, bench, err);
  }
  if (*c_ver) return cmd_verify(g, verify_model, verify_suite, out);
  return kUsage;
}

}  // namespace gsj::cli
