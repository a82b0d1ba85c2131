#pragma once

#include <filesystem>
#include <string>

#include "gsj/flow.hpp"

namespace gsj {

inline constexpr const char* kModelFormat = "gsjf-1";

/// Serializes to the gsjf-1 JSON document. Doubles are written in shortest
/// round-trip form, so load(save(m)) == m bit for bit.
std::string model_to_json(const FlowModel& model);
/// Throws MalformedFileError, VersionError or DimensionError.
FlowModel model_from_json(const std::string& text);

void save_model(const FlowModel& model, const std::filesystem::path& path);
FlowModel load_model(const std::filesystem::path& path);

/// {"dims":[B,T,C],"data":[...]}
std::string tensor_to_json(const Tensor3& t);
Tensor3 tensor_from_json(const std::string& text);

void save_tensor(const Tensor3& t, const std::filesystem::path& path);
Tensor3 load_tensor(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace gsj
