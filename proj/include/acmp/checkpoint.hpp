// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "acmp/model.hpp"

namespace acmp {

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

// Binary checkpoint: "ACMP" magic, u32 format version, length-prefixed
// config JSON, then every parameter tensor in plan order as
// (name length + name, rank, dims as u64, raw little-endian f64 data).
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace acmp
