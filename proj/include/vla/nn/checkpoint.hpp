#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "vla/nn/network.hpp"

namespace vla::nn {

inline constexpr int kCheckpointVersion = 1;

// Topology descriptors plus flat per-layer weights in declaration order.
// Doubles are written with 17 significant digits, so a round trip is exact.
nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& doc);

void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

// Shared helpers for documents that embed networks.
void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace vla::nn
