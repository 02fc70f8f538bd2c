// SPDX-License-Identifier: Apache-2.0
#include "acmp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace acmp {

namespace {

constexpr char kMagic[4] = {'A', 'C', 'M', 'P'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

nlohmann::json layer_to_json(const LayerSpec& spec) {
  nlohmann::json j;
  j["type"] = layer_type_name(spec);
  if (const auto* f = std::get_if<FullBlockSpec>(&spec)) {
    j["dim"] = f->dim;
  } else if (const auto* s = std::get_if<SmallBlockSpec>(&spec)) {
    j["dim"] = s->dim;
  } else if (const auto* c = std::get_if<CompressSpec>(&spec)) {
    j["in_dim"] = c->in_dim;
    j["out_dim"] = c->out_dim;
  } else if (const auto* e = std::get_if<ExpandSpec>(&spec)) {
    j["in_dim"] = e->in_dim;
    j["out_dim"] = e->out_dim;
  }
  return j;
}

LayerSpec layer_from_json(const nlohmann::json& j) {
  std::string type = j.at("type").get<std::string>();
  if (type == "full") return FullBlockSpec{j.at("dim").get<int64_t>()};
  if (type == "small") return SmallBlockSpec{j.at("dim").get<int64_t>()};
  if (type == "compress")
    return CompressSpec{j.at("in_dim").get<int64_t>(),
                        j.at("out_dim").get<int64_t>()};
  if (type == "expand")
    return ExpandSpec{j.at("in_dim").get<int64_t>(),
                      j.at("out_dim").get<int64_t>()};
  throw std::invalid_argument("unknown layer type '" + type + "'");
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& config) {
  nlohmann::json j;
  j["vocab_size"] = config.vocab_size;
  j["context_length"] = config.context_length;
  j["d_model"] = config.d_model;
  j["n_heads"] = config.n_heads;
  j["tie_lm_head"] = config.tie_lm_head;
  j["seed"] = config.seed;
  nlohmann::json plan = nlohmann::json::array();
  for (const auto& spec : config.plan) plan.push_back(layer_to_json(spec));
  j["layer_plan"] = plan;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.context_length = j.at("context_length").get<int64_t>();
  c.d_model = j.at("d_model").get<int64_t>();
  c.n_heads = j.at("n_heads").get<int64_t>();
  c.tie_lm_head = j.at("tie_lm_head").get<bool>();
  c.seed = j.value("seed", uint64_t{0});
  for (const auto& lj : j.at("layer_plan")) c.plan.push_back(layer_from_json(lj));
  c.validate();
  return c;
}

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  std::string cfg = config_to_json(model.config()).dump();
  write_u64(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (const auto& p : model.parameters()) {
    write_u32(os, static_cast<uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_u32(os, static_cast<uint32_t>(p.tensor.rank()));
    for (int64_t d : p.tensor.shape()) write_u64(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(p.tensor.data().data()),
             static_cast<std::streamsize>(p.tensor.data().size() *
                                          sizeof(double)));
  }
  if (!os) throw std::runtime_error("write to '" + path + "' failed");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  is.seekg(0, std::ios::end);
  uint64_t file_size = static_cast<uint64_t>(is.tellg());
  is.seekg(0);

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("'" + path + "' is not an ACMP checkpoint");
  uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  uint64_t cfg_len = read_u64(is);
  if (16 + cfg_len > file_size)
    throw std::runtime_error("truncated checkpoint '" + path + "'");
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
  ModelConfig config = config_from_json(nlohmann::json::parse(cfg));

  Model model = Model::build(config);

  // Validate the total size against the config-implied layout before
  // reading any tensor payloads.
  uint64_t expected = 16 + cfg_len;
  for (const auto& p : model.parameters()) {
    expected += 4 + p.name.size() + 4 + 8 * static_cast<uint64_t>(p.tensor.rank()) +
                sizeof(double) * static_cast<uint64_t>(p.tensor.size());
  }
  if (expected != file_size) {
    throw std::runtime_error("checkpoint '" + path + "' has size " +
                             std::to_string(file_size) + ", expected " +
                             std::to_string(expected) + " from its config");
  }

  for (const auto& p : model.parameters()) {
    uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (name != p.name)
      throw std::runtime_error("checkpoint tensor '" + name +
                               "' does not match expected '" + p.name + "'");
    uint32_t rank = read_u32(is);
    if (rank != static_cast<uint32_t>(p.tensor.rank()))
      throw std::runtime_error("rank mismatch for tensor '" + name + "'");
    for (int i = 0; i < static_cast<int>(rank); ++i) {
      uint64_t dim = read_u64(is);
      if (dim != static_cast<uint64_t>(p.tensor.dim(i)))
        throw std::runtime_error("shape mismatch for tensor '" + name + "'");
    }
    // Tensor handles share storage, so writing through the copy fills the
    // model's parameter in place.
    Tensor t = p.tensor;
    is.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!is) throw std::runtime_error("truncated checkpoint '" + path + "'");
  return model;
}

}  // namespace acmp
