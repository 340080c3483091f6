#pragma once

// JSON forms of ChannelConfig and TrainConfig. Missing keys keep their
// defaults; unknown keys and wrongly typed values raise channel::ConfigError.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "uwer/channel.hpp"
#include "uwer/trainer.hpp"

namespace uwer::config {

using Json = nlohmann::ordered_json;

Json to_json(const channel::ChannelConfig& cfg);
Json to_json(const train::TrainConfig& cfg);

/// Overlays `j` onto `base`. `prefix` is prepended to field names in errors.
channel::ChannelConfig channel_from_json(const Json& j, channel::ChannelConfig base = {}, const std::string& prefix = "");
train::TrainConfig train_from_json(const Json& j, train::TrainConfig base = {}, const std::string& prefix = "");

/// Parses a file; a parse failure is reported as ConfigError("<path>", ...).
Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

/// FNV-1a 64 of the compact dump.
std::uint64_t json_hash(const Json& j);
std::string hex64(std::uint64_t v);

}  // namespace uwer::config
