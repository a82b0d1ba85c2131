#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gsj/flow.hpp"
#include "gsj/metrics.hpp"
#include "gsj/tensor.hpp"

namespace gsj::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kVerifyFailed = 3, kOverflow = 4 };

enum class OutputFormat { Default, Json, Csv };

struct GlobalOptions {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 leaves the OpenMP default
  double ebound = kDefaultEbound;
  NormKind norm = NormKind::Spectral;
  OutputFormat format = OutputFormat::Default;
};

struct GenModelArgs {
  ModelConfig config;
  std::optional<double> weight_scale;  // default_weight_scale(depth) when unset
  std::filesystem::path out;
};

struct MetricsArgs {
  std::filesystem::path model;
  std::size_t batch = kDefaultMetricBatch;
  double dominance_ratio = kDefaultDominanceRatio;
  std::filesystem::path out;
};

struct SampleArgs {
  std::filesystem::path model;
  std::string strategy;
  std::size_t count = 1;
  std::optional<std::filesystem::path> metrics;  // computed on the fly when unset
  std::size_t metric_batch = 16;
  std::optional<std::filesystem::path> trace_dir;
  std::optional<std::filesystem::path> out;
  bool clamp_s = false;
  bool track_distance = false;
};

struct BenchArgs {
  std::filesystem::path model;
  std::vector<std::string> strategies;
  std::size_t repeats = 5;
  std::size_t count = 1;
  std::size_t metric_batch = 16;
  std::optional<std::filesystem::path> metrics;
  std::optional<std::filesystem::path> trace_dir;
  std::filesystem::path out;
  bool verify = true;
  bool parallel = false;
};

/// One bench row; row 0 is always the serial baseline.
struct BenchRecord {
  std::string strategy;
  std::int64_t wall_ns = 0;  // median over repeats
  std::size_t su_evals = 0;
  std::optional<double> deviation;  // max |x - serial|, verification mode only
  double speedup = 1.0;             // baseline wall / this wall
  std::vector<std::filesystem::path> trace_files;
};

int cmd_gen_model(const GlobalOptions& g, const GenModelArgs& a, std::ostream& log);
int cmd_metrics(const GlobalOptions& g, const MetricsArgs& a, std::ostream& log);
int cmd_sample(const GlobalOptions& g, const SampleArgs& a, std::ostream& log);
int cmd_bench(const GlobalOptions& g, const BenchArgs& a, std::ostream& log);
int cmd_verify(const GlobalOptions& g, const std::filesystem::path& model, const std::string& suite,
               std::ostream& log);

/// Bench core, without file output.
std::vector<BenchRecord> run_bench(const FlowModel& model, const MetricReport& metrics,
                                   const GlobalOptions& g, const BenchArgs& a);
std::string bench_to_csv(const std::vector<BenchRecord>& rows);
std::string bench_to_json(const std::vector<BenchRecord>& rows);

/// Full command line entry point (argv[0] is the program name).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gsj::cli
