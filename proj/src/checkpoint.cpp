#include "featureness/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace featureness {

namespace {

constexpr char kMagic[4] = {'P', 'I', 'X', 'R'};

void write_u32(std::ostream& out, uint32_t v) {
  uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = uint8_t(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

uint32_t read_u32(std::istream& in, const char* what) {
  uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw checkpoint_corrupt_error(std::string("corrupt checkpoint: truncated ") + what);
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
}

uint64_t read_u64(std::istream& in, const char* what) {
  uint8_t b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw checkpoint_corrupt_error(std::string("corrupt checkpoint: truncated ") + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

std::string read_bytes(std::istream& in, size_t n, const char* what) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw checkpoint_corrupt_error(std::string("corrupt checkpoint: truncated ") + what);
  return s;
}

}  // namespace

void write_param_file(const std::string& path, const ParamFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);

  out.write(kMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<uint32_t>(file.stage.size()));
  out.write(file.stage.data(), static_cast<std::streamsize>(file.stage.size()));
  const std::string config = file.config.dump();
  write_u64(out, config.size());
  out.write(config.data(), static_cast<std::streamsize>(config.size()));

  write_u32(out, static_cast<uint32_t>(file.blocks.size()));
  for (const auto& block : file.blocks) {
    write_u32(out, static_cast<uint32_t>(block.name.size()));
    out.write(block.name.data(), static_cast<std::streamsize>(block.name.size()));
    out.put(static_cast<char>(block.shape.size()));
    size_t count = 1;
    for (const int d : block.shape) {
      write_u32(out, static_cast<uint32_t>(d));
      count *= static_cast<size_t>(d);
    }
    if (count != block.data.size()) {
      throw checkpoint_shape_error("checkpoint block " + block.name +
                                   ": shape does not match data length");
    }
    for (const float v : block.data) write_f32(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

ParamFile read_param_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint for reading: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw checkpoint_corrupt_error("corrupt checkpoint: bad magic bytes in " + path);
  }
  const uint32_t version = read_u32(in, "version");
  if (version != kCheckpointVersion) {
    throw checkpoint_version_error("unknown checkpoint format version " +
                                   std::to_string(version) + " in " + path);
  }

  ParamFile file;
  file.stage = read_bytes(in, read_u32(in, "stage tag"), "stage tag");
  const std::string config_text = read_bytes(in, read_u64(in, "config block"), "config block");
  try {
    file.config = nlohmann::json::parse(config_text);
  } catch (const nlohmann::json::exception&) {
    throw checkpoint_corrupt_error("corrupt checkpoint: invalid config JSON in " + path);
  }

  const uint32_t n_blocks = read_u32(in, "parameter count");
  for (uint32_t i = 0; i < n_blocks; ++i) {
    ParamFile::Block block;
    block.name = read_bytes(in, read_u32(in, "parameter name"), "parameter name");
    const int ndim = in.get();
    if (ndim < 0 || ndim > 8) throw checkpoint_corrupt_error("corrupt checkpoint: bad rank");
    size_t count = 1;
    for (int d = 0; d < ndim; ++d) {
      const uint32_t dim = read_u32(in, "parameter shape");
      block.shape.push_back(static_cast<int>(dim));
      count *= dim;
    }
    block.data.resize(count);
    for (size_t j = 0; j < count; ++j) {
      const uint32_t bits = read_u32(in, "parameter data");
      float v;
      std::memcpy(&v, &bits, 4);
      block.data[j] = v;
    }
    file.blocks.push_back(std::move(block));
  }
  return file;
}

std::string file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<uint8_t>(buf[i]);
      h *= 1099511628211ull;
    }
    if (!in) break;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

nlohmann::json model_config_to_json(const ModelConfig& config) {
  return nlohmann::json{{"in_channels", config.in_channels},
                        {"backbone_kernel", config.backbone_kernel},
                        {"backbone_channels", config.backbone_channels},
                        {"kp_hidden", config.kp_hidden},
                        {"desc_dim", config.desc_dim},
                        {"dropout_rate", config.dropout_rate},
                        {"init_seed", config.init_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig config;
  config.in_channels = j.at("in_channels").get<int>();
  config.backbone_kernel = j.at("backbone_kernel").get<int>();
  config.backbone_channels = j.at("backbone_channels").get<std::vector<int>>();
  config.kp_hidden = j.at("kp_hidden").get<int>();
  config.desc_dim = j.at("desc_dim").get<int>();
  config.dropout_rate = j.at("dropout_rate").get<double>();
  config.init_seed = j.at("init_seed").get<uint64_t>();
  return config;
}

void save_checkpoint(const Model& model, const std::string& path) {
  ParamFile file;
  file.stage = model.stage;
  file.config = nlohmann::json{{"kind", "detector"},
                               {"model", model_config_to_json(model.config)},
                               {"dropout_active", model.dropout_active}};
  for (const auto& p : model.params()) {
    file.blocks.push_back({p.name, p.shape, *p.values});
  }
  write_param_file(path, file);
}

Model load_checkpoint(const std::string& path) {
  const ParamFile file = read_param_file(path);
  if (!file.config.contains("model")) {
    throw checkpoint_corrupt_error("checkpoint has no model config: " + path);
  }
  Model model = Model::build(model_config_from_json(file.config.at("model")));
  model.stage = file.stage;
  model.dropout_active = file.config.value("dropout_active", false);

  auto params = model.params();
  if (params.size() != file.blocks.size()) {
    throw checkpoint_shape_error("checkpoint parameter count mismatch in " + path + ": model has " +
                                 std::to_string(params.size()) + " blocks, file has " +
                                 std::to_string(file.blocks.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& block = file.blocks[i];
    if (block.name != params[i].name) {
      throw checkpoint_shape_error("checkpoint block name mismatch: expected " + params[i].name +
                                   ", found " + block.name);
    }
    if (block.shape != params[i].shape || block.data.size() != params[i].values->size()) {
      throw checkpoint_shape_error("checkpoint shape mismatch for " + block.name);
    }
    *params[i].values = block.data;
  }
  return model;
}

}  // namespace featureness
