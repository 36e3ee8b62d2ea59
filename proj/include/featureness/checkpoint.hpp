#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "featureness/model.hpp"

namespace featureness {

struct checkpoint_corrupt_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct checkpoint_version_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct checkpoint_shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr uint32_t kCheckpointVersion = 1;

/// Generic parameter container shared by all checkpoint kinds.
///
/// Layout (little-endian throughout):
///   magic "PIXR" | u32 version | u32 stage_len + stage | u64 config_len +
///   config JSON | u32 n_params | per param: u32 name_len + name, u8 ndim,
///   u32 dims[ndim], float32 data[prod(dims)]
struct ParamFile {
  std::string stage;
  nlohmann::json config;
  struct Block {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
  };
  std::vector<Block> blocks;
};

void write_param_file(const std::string& path, const ParamFile& file);
ParamFile read_param_file(const std::string& path);

/// FNV-1a 64 over the file bytes, as a lowercase hex string. Used to pin an
/// uncertainty-head checkpoint to the exact detector it was distilled from.
std::string file_content_hash(const std::string& path);

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Full-model checkpoint. load rebuilds the architecture from the embedded
/// config and verifies every block's name and shape.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace featureness
