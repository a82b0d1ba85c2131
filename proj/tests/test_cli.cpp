#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <random>
#include <sstream>

#include "json.hpp"

#include "gsj/commands.hpp"
#include "gsj/errors.hpp"
#include "gsj/model_io.hpp"
#include "gsj/strategy.hpp"
#include "oracles.hpp"

using namespace gsj;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run gsjf(std::vector<std::string> args) {
  args.insert(args.begin(), "gsjf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "gsj_cli_test";
  fs::create_directories(d);
  return d / name;
}

}  // namespace

TEST_CASE("published strategy strings") {
  CHECK(parse_strategy("[6-8-32-10]") == Strategy{{6}, {8}, {32}, 10});
  CHECK(parse_strategy("[0/7-16/8-10/13-6]") == Strategy{{0, 7}, {16, 8}, {10, 13}, 6});
  CHECK(parse_strategy("[0/6-1024-1-10]") == Strategy{{0, 6}, {1024, 1024}, {1, 1}, 10});
}

TEST_CASE("format then parse is the identity on canonical strategies") {
  for (const char* s : {"[6-8-32-10]", "[0/7-16/8-10/13-6]", "[0/6-1024-1-10]", "[3/1/2-4-2/5/9-1]"}) {
    const Strategy st = parse_strategy(s);
    CHECK(format_strategy(st) == s);
    CHECK(parse_strategy(format_strategy(st)) == st);
  }
}

TEST_CASE("malformed strategies") {
  for (const char* s : {"", "[", "]", "[]", "6-8-32-10", "[6-8-32]", "[6-8-32-10-1]", "[6--32-10]",
                        "[6-8-32-]", "[-8-32-10]", "[6/-8-32-10]", "[6-8-32-10", "[x-8-32-10]",
                        "[6-8-0-10]", "[6-0-3-10]", "[6-8-3-0]", "[6/6-8-3-1]", "[1/2-3/4/5-1-1]",
                        "[ 6-8-32-10]", "[6-8-32-+10]", "[6-8-32-99999999999999999999999]"}) {
    CAPTURE(s);
    CHECK_THROWS_AS(parse_strategy(s), ParseError);
  }
}

TEST_CASE("random garbage never crashes the parser") {
  std::mt19937_64 rng(17);
  const std::string alphabet = "[]-/0123456789 x";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const std::size_t n = rng() % 16;
    for (std::size_t k = 0; k < n; ++k) s += alphabet[rng() % alphabet.size()];
    try {
      const Strategy st = parse_strategy(s);
      CHECK(parse_strategy(format_strategy(st)) == st);
    } catch (const ParseError&) {
    }
  }
}

TEST_CASE("strategy validation against a model") {
  const Strategy s = parse_strategy("[3-8-4-2]");
  CHECK_NOTHROW(s.validate(4, 16));
  CHECK_THROWS_AS(s.validate(3, 16), ParseError);
  CHECK_THROWS_AS(s.validate(4, 7), ParseError);
}

TEST_CASE("gen-model, metrics, sample and verify end to end") {
  const fs::path model = scratch("m.json"), rep = scratch("rep.json"), out = scratch("x.json");
  const fs::path traces = scratch("traces");
  fs::remove_all(traces);
  Run r = gsjf({"--seed", "5", "gen-model", "--out", model.string(), "--seq-len", "12", "--channels", "3",
                "--blocks", "3", "--block-gain", "1,4,1"});
  REQUIRE(r.code == 0);
  const FlowModel m = load_model(model);
  CHECK(m.config.seq_len == 12);
  CHECK(m.blocks.size() == 3);

  r = gsjf({"metrics", "--model", model.string(), "--batch", "8", "--out", rep.string()});
  REQUIRE(r.code == 0);
  const auto doc = nlohmann::json::parse(read_text_file(rep));
  CHECK(doc.at("blocks").size() == 3);
  CHECK(doc.at("norm") == "spectral");

  r = gsjf({"--ebound", "0", "sample", "--model", model.string(), "--strategy", "[1-3-4-11]", "--metrics",
            rep.string(), "--count", "2", "--out", out.string(), "--trace-dir", traces.string(),
            "--track-distance"});
  REQUIRE(r.code == 0);
  const Tensor3 x = load_tensor(out);
  CHECK(max_abs_diff(x, inverse_model_serial(m, standard_normal(0, 2, 12, 3))) <= 1e-10);
  CHECK(fs::exists(traces / "trace.csv"));
  CHECK(read_text_file(traces / "block_1.csv").rfind("block,module,iter,distance", 0) == 0);

  r = gsjf({"verify", "--model", model.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("[FAIL]") == std::string::npos);
  r = gsjf({"verify", "--model", model.string(), "--suite", "cli"});
  CHECK(r.code == 0);
}

TEST_CASE("metrics CSV output and norm choice") {
  const fs::path model = scratch("m2.json"), rep = scratch("rep2.csv");
  REQUIRE(gsjf({"gen-model", "--out", model.string(), "--seq-len", "8"}).code == 0);
  const Run r = gsjf({"--csv", "--norm", "one", "metrics", "--model", model.string(), "--batch", "4",
                      "--out", rep.string()});
  REQUIRE(r.code == 0);
  CHECK(read_text_file(rep).rfind("block,igm_z,igm_z0,init,crm", 0) == 0);
}

TEST_CASE("bench on a zero-weight model") {
  const fs::path model = scratch("zero.json"), csv = scratch("bench.csv");
  REQUIRE(gsjf({"gen-model", "--out", model.string(), "--seq-len", "16", "--weight-scale", "0"}).code == 0);
  const Run r = gsjf({"bench", "--model", model.string(), "--strategy", "[0-4-4-3]", "--strategy",
                      "[0/1/2/3-16-1-1]", "--repeats", "3", "--out", csv.string()});
  REQUIRE(r.code == 0);
  std::istringstream lines(read_text_file(csv));
  std::string line;
  std::getline(lines, line);
  CHECK(line == "strategy,wall_ns,su_evals,deviation,speedup,timing,trace_files");
  std::getline(lines, line);
  CHECK(line.rfind("serial,", 0) == 0);
  CHECK(line.find(",60,0,") != std::string::npos);
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    CHECK(line.find(",0,") != std::string::npos);
  }
  CHECK(rows == 2);
}

TEST_CASE("bench rows: serial baseline, deviation and speedup") {
  auto cfg = oracle::small_config(16, 3, 2);
  const FlowModel m = gen_synthetic_model(3, cfg, 0.1);
  const auto rep = metric_pass(m, synthetic_data_batch(m, 1, 4));
  cli::GlobalOptions g;
  g.ebound = 0.0;
  cli::BenchArgs a;
  a.strategies = {"[0/1-16-1-1]", "[0-4-4-15]"};
  a.repeats = 3;
  const auto rows = cli::run_bench(m, rep, g, a);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].strategy == "serial");
  CHECK(rows[0].su_evals == 2 * 15);
  CHECK(rows[0].speedup == 1.0);
  for (const auto& r : rows) {
    REQUIRE(r.deviation.has_value());
    CHECK(*r.deviation <= 1e-9);
    CHECK(r.speedup == doctest::Approx(static_cast<double>(rows[0].wall_ns) / r.wall_ns));
  }
  CHECK(rows[1].su_evals == 32);
  const auto j = nlohmann::json::parse(cli::bench_to_json(rows));
  CHECK(j.size() == 3);
  CHECK(j[0].at("timing") == "cpu-desk-scale");
}

TEST_CASE("bench on a long model reports fewer su-evals than serial") {
  ModelConfig cfg;
  cfg.seq_len = 256;
  const FlowModel m = gen_synthetic_model(0, cfg, default_weight_scale(cfg.depth));
  const auto rep = metric_pass(m, synthetic_data_batch(m, 1, 8));
  cli::GlobalOptions g;
  cli::BenchArgs a;
  a.strategies = {"[0-8-16-10]"};
  a.repeats = 1;
  const auto rows = cli::run_bench(m, rep, g, a);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].su_evals == 4 * 255);
  CHECK(rows[1].su_evals < rows[0].su_evals);
  CHECK(rows[1].deviation.has_value());
}

TEST_CASE("exit codes") {
  const fs::path model = scratch("m3.json");
  REQUIRE(gsjf({"gen-model", "--out", model.string(), "--seq-len", "8"}).code == 0);
  CHECK(gsjf({}).code == 1);
  CHECK(gsjf({"frobnicate"}).code == 1);
  CHECK(gsjf({"--norm", "max", "metrics", "--model", model.string(), "--out", "x"}).code == 1);
  CHECK(gsjf({"sample", "--model", model.string(), "--strategy", "[1-2"}).code == 1);
  CHECK(gsjf({"sample", "--model", model.string(), "--strategy", "[9-2-2-2]"}).code == 1);
  CHECK(gsjf({"sample", "--model", (scratch("missing.json")).string(), "--strategy", "[0-2-2-2]"}).code == 2);
  write_text_file(scratch("bad.json"), "{\"format\":\"other\"}");
  CHECK(gsjf({"verify", "--model", scratch("bad.json").string()}).code == 2);
  write_text_file(scratch("junk.json"), "not json");
  CHECK(gsjf({"metrics", "--model", scratch("junk.json").string(), "--out", scratch("o.json").string()}).code == 2);
  CHECK(gsjf({"--help"}).code == 0);

  const fs::path hot = scratch("hot.json");
  REQUIRE(gsjf({"gen-model", "--out", hot.string(), "--seq-len", "64", "--block-gain", "1,80,1,1"}).code == 0);
  const Run o = gsjf({"metrics", "--model", hot.string(), "--batch", "4", "--out", scratch("h.json").string()});
  CHECK(o.code == 4);
  CHECK(o.err.find("overflow") != std::string::npos);
  const Run v = gsjf({"verify", "--model", hot.string(), "--suite", "metrics"});
  CHECK(v.code == 3);
}
