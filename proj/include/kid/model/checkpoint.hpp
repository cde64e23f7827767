// SPDX-License-Identifier: Apache-2.0
//
// Container: "KIDCKPT1", u64 little-endian header length, ASCII JSON header
// {config, manifest: [{name, shape}], seed, metadata}, then every parameter
// as little-endian float64 in manifest order.

#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "kid/model/model.hpp"

namespace kid::model {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string checkpoint_bytes(const DualHeadModel& model, std::uint64_t seed,
                             const nlohmann::ordered_json& metadata);
void save_checkpoint(const std::filesystem::path& path, const DualHeadModel& model, std::uint64_t seed,
                     const nlohmann::ordered_json& metadata = nlohmann::ordered_json::object());

struct LoadedCheckpoint {
  DualHeadModel model;
  std::uint64_t seed = 0;
  nlohmann::ordered_json metadata;
};

LoadedCheckpoint parse_checkpoint(const std::string& bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameter values from `src` into `dst` (same architecture).
void copy_weights(const DualHeadModel& src, DualHeadModel& dst);

}  // namespace kid::model
