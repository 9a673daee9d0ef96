#pragma once

#include "chainfit/imaging.hpp"
#include "chainfit/nma.hpp"
#include "chainfit/rigid.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace chainfit {

using Json = nlohmann::json;

Json to_json(const GlobalPose& pose);
GlobalPose pose_from_json(const Json& j);

/// {"chains": [{"chain", "alpha", "v1", "v2", "t"}], "whole_alpha", "pose"}.
Json to_json(const LatentState& state);
LatentState latent_from_json(const Json& j);

Json to_json(const ImagingConfig& config);
/// Missing keys keep their defaults; `null` clears optional fields.
ImagingConfig imaging_from_json(const Json& j, ImagingConfig base = {});

Json to_json(const EnmConfig& config);
EnmConfig enm_from_json(const Json& j, EnmConfig base = {});

Json read_json_file(const std::filesystem::path& path);
/// Writes `j.dump(2)` plus a newline.
void write_json_file(const std::filesystem::path& path, const Json& j);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace chainfit
