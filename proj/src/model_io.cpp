#include "gsj/model_io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include "json.hpp"

#include "gsj/errors.hpp"

namespace gsj {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Matrix matrix_from(const json& j, const char* name) {
  if (!j.is_array()) throw MalformedFileError(std::string(name) + ": expected array of rows");
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  std::vector<double> data;
  for (std::size_t r = 0; r < rows; ++r) {
    const json& row = j[r];
    if (!row.is_array()) throw MalformedFileError(std::string(name) + ": row is not an array");
    if (r == 0) cols = row.size();
    if (row.size() != cols) throw DimensionError(std::string(name) + ": ragged rows");
    for (const json& v : row) {
      if (!v.is_number()) throw MalformedFileError(std::string(name) + ": non-numeric entry");
      data.push_back(v.get<double>());
    }
  }
  return Matrix(rows, cols, std::move(data));
}

std::vector<double> vector_from(const json& j, const char* name) {
  if (!j.is_array()) throw MalformedFileError(std::string(name) + ": expected array");
  std::vector<double> v;
  for (const json& e : j) {
    if (!e.is_number()) throw MalformedFileError(std::string(name) + ": non-numeric entry");
    v.push_back(e.get<double>());
  }
  return v;
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw MalformedFileError(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T scalar(const json& j, const char* key) {
  const json& v = field(j, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw MalformedFileError(std::string("field '") + key + "' has the wrong type");
  }
}

}  // namespace

std::string model_to_json(const FlowModel& model) {
  const ModelConfig& c = model.config;
  json doc;
  doc["format"] = kModelFormat;
  doc["config"] = {{"patch_size", c.patch_size}, {"channels", c.channels},
                   {"blocks", c.blocks},         {"depth", c.depth},
                   {"noise_std", c.noise_std},   {"seq_len", c.seq_len},
                   {"mlp_hidden", c.mlp_hidden}, {"block_gain", c.block_gain},
                   {"alternate_flip", c.alternate_flip}};
  json blocks = json::array();
  for (const FlowBlock& b : model.blocks) {
    json layers = json::array();
    for (const AttentionLayer& l : b.layers) {
      layers.push_back({{"wq", matrix_json(l.wq)},
                        {"wk", matrix_json(l.wk)},
                        {"wv", matrix_json(l.wv)},
                        {"wo", matrix_json(l.wo)},
                        {"mlp_w1", matrix_json(l.mlp_w1)},
                        {"mlp_w2", matrix_json(l.mlp_w2)},
                        {"ln1_gain", l.ln1_gain},
                        {"ln1_bias", l.ln1_bias},
                        {"ln2_gain", l.ln2_gain},
                        {"ln2_bias", l.ln2_bias}});
    }
    blocks.push_back({{"flip", b.flip},
                      {"layers", std::move(layers)},
                      {"w_s", matrix_json(b.w_s)},
                      {"b_s", b.b_s},
                      {"w_u", matrix_json(b.w_u)},
                      {"b_u", b.b_u}});
  }
  doc["blocks"] = std::move(blocks);
  return doc.dump();
}

FlowModel model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedFileError(std::string("model file is not valid JSON: ") + e.what());
  }
  const auto format = scalar<std::string>(doc, "format");
  if (format != kModelFormat)
    throw VersionError("model format '" + format + "' is not " + kModelFormat);

  const json& jc = field(doc, "config");
  FlowModel model;
  ModelConfig& c = model.config;
  c.patch_size = scalar<std::size_t>(jc, "patch_size");
  c.channels = scalar<std::size_t>(jc, "channels");
  c.blocks = scalar<std::size_t>(jc, "blocks");
  c.depth = scalar<std::size_t>(jc, "depth");
  c.noise_std = scalar<double>(jc, "noise_std");
  c.seq_len = scalar<std::size_t>(jc, "seq_len");
  c.mlp_hidden = scalar<std::size_t>(jc, "mlp_hidden");
  c.block_gain = vector_from(field(jc, "block_gain"), "block_gain");
  c.alternate_flip = scalar<bool>(jc, "alternate_flip");

  const json& jb = field(doc, "blocks");
  if (!jb.is_array()) throw MalformedFileError("'blocks' must be an array");
  for (const json& b : jb) {
    FlowBlock blk;
    blk.flip = scalar<bool>(b, "flip");
    const json& jl = field(b, "layers");
    if (!jl.is_array()) throw MalformedFileError("'layers' must be an array");
    for (const json& l : jl) {
      AttentionLayer layer;
      layer.wq = matrix_from(field(l, "wq"), "wq");
      layer.wk = matrix_from(field(l, "wk"), "wk");
      layer.wv = matrix_from(field(l, "wv"), "wv");
      layer.wo = matrix_from(field(l, "wo"), "wo");
      layer.mlp_w1 = matrix_from(field(l, "mlp_w1"), "mlp_w1");
      layer.mlp_w2 = matrix_from(field(l, "mlp_w2"), "mlp_w2");
      layer.ln1_gain = vector_from(field(l, "ln1_gain"), "ln1_gain");
      layer.ln1_bias = vector_from(field(l, "ln1_bias"), "ln1_bias");
      layer.ln2_gain = vector_from(field(l, "ln2_gain"), "ln2_gain");
      layer.ln2_bias = vector_from(field(l, "ln2_bias"), "ln2_bias");
      blk.layers.push_back(std::move(layer));
    }
    blk.w_s = matrix_from(field(b, "w_s"), "w_s");
    blk.b_s = vector_from(field(b, "b_s"), "b_s");
    blk.w_u = matrix_from(field(b, "w_u"), "w_u");
    blk.b_u = vector_from(field(b, "b_u"), "b_u");
    model.blocks.push_back(std::move(blk));
  }
  model.validate();
  return model;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::system_error(errno, std::generic_category(), "cannot write " + path.string());
  out << text;
  if (!out) throw std::system_error(errno, std::generic_category(), "write failed for " + path.string());
}

void save_model(const FlowModel& model, const std::filesystem::path& path) {
  write_text_file(path, model_to_json(model));
}

FlowModel load_model(const std::filesystem::path& path) {
  return model_from_json(read_text_file(path));
}

std::string tensor_to_json(const Tensor3& t) {
  json doc;
  doc["dims"] = {t.batch(), t.seq(), t.channels()};
  doc["data"] = std::vector<double>(t.data().begin(), t.data().end());
  return doc.dump();
}

Tensor3 tensor_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedFileError(std::string("tensor file is not valid JSON: ") + e.what());
  }
  const json& dims = field(doc, "dims");
  if (!dims.is_array() || dims.size() != 3) throw MalformedFileError("'dims' must have 3 entries");
  const auto B = dims[0].get<std::size_t>();
  const auto T = dims[1].get<std::size_t>();
  const auto C = dims[2].get<std::size_t>();
  return Tensor3(B, T, C, vector_from(field(doc, "data"), "data"));
}

void save_tensor(const Tensor3& t, const std::filesystem::path& path) {
  write_text_file(path, tensor_to_json(t));
}

Tensor3 load_tensor(const std::filesystem::path& path) {
  return tensor_from_json(read_text_file(path));
}

}  // namespace gsj
