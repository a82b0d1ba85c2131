#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <system_error>

#include "json.hpp"

#include "gsj/errors.hpp"
#include "gsj/model_io.hpp"
#include "oracles.hpp"

using namespace gsj;
using nlohmann::json;

namespace {

FlowModel sample_model() {
  auto cfg = oracle::small_config(8, 3, 2);
  cfg.block_gain = {1.0, 3.5};
  return gen_synthetic_model(42, cfg, 0.07);
}

}  // namespace

TEST_CASE("model JSON roundtrip is bit exact") {
  const FlowModel m = sample_model();
  const std::string text = model_to_json(m);
  CHECK(model_from_json(text) == m);
  CHECK(json::parse(text).at("format") == "gsjf-1");
}

TEST_CASE("model file roundtrip") {
  const auto path = std::filesystem::temp_directory_path() / "gsj_test_model.json";
  const FlowModel m = sample_model();
  save_model(m, path);
  CHECK(load_model(path) == m);
  std::filesystem::remove(path);
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(model_from_json("{not json"), MalformedFileError);
  CHECK_THROWS_AS(model_from_json("{\"format\":\"gsjf-1\"}"), MalformedFileError);
  json doc = json::parse(model_to_json(sample_model()));
  doc["format"] = "gsjf-2";
  CHECK_THROWS_AS(model_from_json(doc.dump()), VersionError);
}

TEST_CASE("ragged or inconsistent weights are dimension errors") {
  json doc = json::parse(model_to_json(sample_model()));
  json ragged = doc;
  ragged["blocks"][0]["w_s"][1].push_back(0.5);
  CHECK_THROWS_AS(model_from_json(ragged.dump()), DimensionError);
  json short_bias = doc;
  short_bias["blocks"][1]["b_u"].erase(0);
  CHECK_THROWS_AS(model_from_json(short_bias.dump()), DimensionError);
  json missing_block = doc;
  missing_block["blocks"].erase(1);
  CHECK_THROWS_AS(model_from_json(missing_block.dump()), DimensionError);
}

TEST_CASE("tensor JSON roundtrip") {
  const Tensor3 t = standard_normal(3, 2, 3, 4);
  CHECK(tensor_from_json(tensor_to_json(t)) == t);
  CHECK_THROWS_AS(tensor_from_json("{\"dims\":[1,2,2],\"data\":[1,2,3]}"), DimensionError);
  CHECK_THROWS_AS(tensor_from_json("[]"), MalformedFileError);
}

TEST_CASE("missing files raise system errors") {
  CHECK_THROWS_AS(load_model("/nonexistent/dir/model.json"), std::system_error);
  CHECK_THROWS_AS(write_text_file("/nonexistent/dir/out.txt", "x"), std::system_error);
}
