#pragma once

// Run configuration: JSON (de)serialization of every config block. Parsing
// is strict: unknown keys and ill-typed values are InvalidConfig errors.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "asmflow/data.hpp"
#include "asmflow/flowmatch.hpp"
#include "asmflow/model.hpp"
#include "asmflow/sampler.hpp"
#include "json.hpp"

namespace asmflow::app {

using nlohmann::json;

struct DataConfig {
  std::string root = "data";
  std::string family = "composite";
  std::size_t n_pieces = 2;
  std::size_t train_count = 500;
  std::size_t test_count = 50;
  data::SyntheticParams synthetic{2000, 260, 2000, 200};  // sized for the default model
  double grid_cell = 0.0;  // applied to every piece at load time; 0 disables

  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  equinet::ModelConfig model;
  flowmatch::TrainConfig train;
  sampler::SamplerConfig sampler;
  DataConfig data;
  std::string out = "out";
  std::string checkpoint;  // defaults to <out>/checkpoint.bin
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig.
  void validate() const;
  std::filesystem::path checkpoint_path() const;
};

json to_json(const equinet::ModelConfig& c);
json to_json(const flowmatch::TrainConfig& c);
json to_json(const sampler::SamplerConfig& c);
json to_json(const DataConfig& c);
json to_json(const RunConfig& c);

/// Each reader starts from `base` and overrides the keys present in `j`.
equinet::ModelConfig model_from_json(const json& j, equinet::ModelConfig base = {});
flowmatch::TrainConfig train_from_json(const json& j, flowmatch::TrainConfig base = {});
sampler::SamplerConfig sampler_from_json(const json& j, sampler::SamplerConfig base = {});
DataConfig data_from_json(const json& j, DataConfig base = {});
RunConfig run_from_json(const json& j, RunConfig base = {});

/// Reads a JSON config file; throws IoError / ParseError / InvalidConfig.
RunConfig load_config(const std::filesystem::path& path);

}  // namespace asmflow::app
