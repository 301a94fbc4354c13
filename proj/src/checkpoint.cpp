#include <algorithm>

#include "pta/model.hpp"
#include "pta/world_io.hpp"

namespace pta {

using nlohmann::json;

json checkpoint_to_json(const PTAModel& model, const json& metadata) {
  json params = json::object();
  for (const auto& [name, t] : model.named_parameters()) {
    const Matrix& v = t.value();
    json data = json::array();
    for (Index i = 0; i < v.size(); ++i) data.push_back(v.data()[i]);
    params[name] = {{"shape", {v.rows(), v.cols()}}, {"data", std::move(data)}};
  }
  const auto& p = model.params();
  json heads = json::array();
  if (p.low_w.defined()) heads.push_back("low");
  if (p.state_w.defined()) heads.push_back("high");
  return {{"format_version", kCheckpointFormatVersion},
          {"config", model.config().to_json()},
          {"heads", heads},
          {"parameters", params},
          {"metadata", metadata.is_null() ? json::object() : metadata}};
}

PTAModel model_from_checkpoint(const json& j, json* metadata) {
  if (!j.is_object() || !j.contains("format_version") || !j["format_version"].is_number_integer()) {
    throw DataError("checkpoint: missing format_version");
  }
  if (j["format_version"].get<int>() != kCheckpointFormatVersion) {
    throw DataError("checkpoint: unsupported format_version " + j["format_version"].dump());
  }
  if (!j.contains("config") || !j.contains("parameters")) throw DataError("checkpoint: missing config or parameters");
  ModelConfig config;
  try {
    config = ModelConfig::from_json(j["config"]);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint $.config: ") + e.what());
  }
  PTAModel model(config, 0);
  const json& params = j["parameters"];
  auto named = model.named_parameters();
  if (params.size() != named.size()) {
    throw DataError("checkpoint: expected " + std::to_string(named.size()) + " parameters, found " +
                    std::to_string(params.size()));
  }
  for (auto& [name, t] : named) {
    const std::string path = "$.parameters." + name;
    auto it = params.find(name);
    if (it == params.end()) throw DataError(path + ": missing parameter");
    const json& shape = (*it).at("shape");
    const json& data = (*it).at("data");
    if (!shape.is_array() || shape.size() != 2 || shape[0].get<Index>() != t.rows() ||
        shape[1].get<Index>() != t.cols()) {
      throw DataError(path + ".shape: expected [" + std::to_string(t.rows()) + ", " +
                      std::to_string(t.cols()) + "]");
    }
    if (!data.is_array() || static_cast<Index>(data.size()) != t.rows() * t.cols()) {
      throw DataError(path + ".data: wrong element count");
    }
    Matrix& v = t.mutable_value();
    for (Index i = 0; i < v.size(); ++i) {
      if (!data[static_cast<std::size_t>(i)].is_number()) {
        throw DataError(path + ".data[" + std::to_string(i) + "]: expected a number");
      }
      v.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
    }
  }
  if (metadata) *metadata = j.value("metadata", json::object());
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const PTAModel& model, const json& metadata) {
  write_json_file(path, checkpoint_to_json(model, metadata));
}

PTAModel load_checkpoint(const std::filesystem::path& path, json* metadata) {
  return model_from_checkpoint(read_json_file(path), metadata);
}

}  // namespace pta
