#include "vla/nn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "vla/errors.hpp"

namespace vla::nn {

using nlohmann::json;

namespace {

std::vector<double> read_values(const json& arr, std::size_t expected, const std::string& what) {
  if (!arr.is_array()) throw CheckpointError(what + " is not an array");
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) throw CheckpointError(what + " contains a non-numeric entry");
    out.push_back(v.get<double>());
  }
  if (out.size() != expected) {
    throw CheckpointError(what + " has " + std::to_string(out.size()) + " values, expected " +
                          std::to_string(expected));
  }
  return out;
}

}  // namespace

json network_to_json(const Network& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) {
    json entry{{"kind", to_string(l.kind)}};
    if (l.has_parameters()) {
      entry["in"] = l.in;
      entry["out"] = l.out;
      entry["weight"] = std::vector<double>(l.weight.values().begin(), l.weight.values().end());
      entry["bias"] = std::vector<double>(l.bias.values().begin(), l.bias.values().end());
    }
    layers.push_back(std::move(entry));
  }
  return json{{"format", "vla-network"}, {"format_version", kCheckpointVersion}, {"layers", std::move(layers)}};
}

Network network_from_json(const json& doc) {
  try {
    if (!doc.is_object() || doc.value("format", "") != "vla-network") {
      throw CheckpointError("not a network checkpoint");
    }
    const int version = doc.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported network checkpoint version " + std::to_string(version));
    }
    std::vector<Layer> layers;
    for (const auto& entry : doc.at("layers")) {
      const auto kind = layer_kind_from_string(entry.at("kind").get<std::string>());
      Layer l;
      switch (kind) {
        case LayerKind::Dense: l = dense(entry.at("in").get<std::size_t>(), entry.at("out").get<std::size_t>()); break;
        case LayerKind::Conv2D:
          l = conv2d(entry.at("in").get<std::size_t>(), entry.at("out").get<std::size_t>());
          break;
        case LayerKind::MaxPool2x2: l = max_pool(); break;
        case LayerKind::ReLU: l = relu(); break;
        case LayerKind::Tanh: l = tanh_layer(); break;
        case LayerKind::Flatten: l = flatten(); break;
      }
      if (l.has_parameters()) {
        const std::string label = "layer " + std::to_string(layers.size());
        l.weight = Tensor(l.weight.shape(), read_values(entry.at("weight"), l.weight.size(), label + " weight"));
        l.bias = Tensor(l.bias.shape(), read_values(entry.at("bias"), l.bias.size(), label + " bias"));
      }
      layers.push_back(std::move(l));
    }
    if (layers.empty()) throw CheckpointError("network checkpoint has no layers");
    return Network(std::move(layers));
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("malformed network checkpoint: ") + e.what());
  }
}

void write_json_file(const json& doc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << doc.dump() << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw CheckpointError("'" + path.string() + "' is truncated or corrupt: " + e.what());
  }
}

void save_network(const Network& net, const std::filesystem::path& path) { write_json_file(network_to_json(net), path); }

Network load_network(const std::filesystem::path& path) { return network_from_json(read_json_file(path)); }

}  // namespace vla::nn
