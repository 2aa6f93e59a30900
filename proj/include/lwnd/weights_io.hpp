#pragma once

#include <filesystem>
#include <string>

#include "lwnd/model.hpp"

namespace lwnd {

/// Weight file: "NDW1", u32 little-endian header length, JSON header (layer
/// list with shapes, model config, stage, step sizes, payload checksum),
/// then every tensor as little-endian float32 in header order.
void save_checkpoint(const std::filesystem::path& path, const ModelF& model);
ModelF load_checkpoint(const std::filesystem::path& path);

std::string config_to_json(const ModelConfig& cfg);

}  // namespace lwnd
