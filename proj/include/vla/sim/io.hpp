#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <vector>

#include "vla/sim/demo.hpp"

namespace vla::sim {

nlohmann::json world_to_json(const WorldState& w);
WorldState world_from_json(const nlohmann::json& doc);
nlohmann::json task_to_json(const Task& t);
Task task_from_json(const nlohmann::json& doc);

/// Sidecar image blob: 8-byte magic "VLAIMG01", u32 height, u32 width,
/// u64 frame count, then one u64 byte offset per frame, then the frames as
/// 8-bit row-major HWC data. Integers are little-endian.
void write_image_blob(const std::vector<const WorkspaceImage*>& images, const std::filesystem::path& path);
std::vector<WorkspaceImage> read_image_blob(const std::filesystem::path& path);

// The blob that accompanies a JSONL file: "<file>.img".
std::filesystem::path sidecar_path(const std::filesystem::path& jsonl);

/// One JSON object per line: {task, scene, contact_frame, station_frames,
/// frames: [{q, image_ref}]}; image_ref indexes the sidecar blob.
void save_demonstrations(const std::vector<Demonstration>& demos, const std::filesystem::path& path);
std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path);

}  // namespace vla::sim
