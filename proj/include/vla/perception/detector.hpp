#pragma once

#include <filesystem>
#include <random>
#include <vector>

#include "vla/nn/network.hpp"
#include "vla/sim/world.hpp"

namespace vla::perception {

struct Detection {
  int class_id = 0;
  sim::Vec2 pos;
  double confidence = 0.0;
  friend bool operator==(const Detection&, const Detection&) = default;
};

struct NoiseConfig {
  double sigma_pos = 0.0;  // metres
  double p_mis = 0.0;      // probability of reporting a uniformly chosen other class
};

/// Ground-truth detections, optionally corrupted. Confidence is always 1.
std::vector<Detection> oracle_detect(const sim::WorldState& world, const NoiseConfig& noise, std::size_t num_classes,
                                     std::mt19937_64& rng);

struct Label {
  int class_id = 0;
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Label&, const Label&) = default;
};

struct LabeledImage {
  sim::WorkspaceImage image;
  std::vector<Label> objects;
};

struct DetectorConfig {
  std::size_t grid = 6;
  std::size_t num_classes = 5;
  std::size_t epochs = 60;
  std::size_t batch_size = 16;
  double learning_rate = 3e-3;
  double objectness_weight = 1.0;
  double class_weight = 1.0;
  double offset_weight = 5.0;
  std::uint64_t seed = 0;
};

struct DetectorMetrics {
  double class_accuracy = 0.0;       // top detection has the labelled class
  double mean_position_error = 0.0;  // metres, top detection vs label
  std::size_t evaluated = 0;
  friend bool operator==(const DetectorMetrics&, const DetectorMetrics&) = default;
};

/// Single-anchor grid detector. The network maps a [B,3,48,48] image to
/// [B, 1+|C|+2, G, G]: objectness logit, class logits, in-cell offset logits.
class GridDetector {
 public:
  GridDetector() = default;
  GridDetector(nn::Network net, std::size_t grid, std::size_t num_classes);

  static nn::Network make_network(std::size_t num_classes);

  /// Per class, the cell maximising objectness * class probability; classes
  /// whose best score is below `threshold` are dropped.
  std::vector<Detection> detect(const sim::WorkspaceImage& image, double threshold = kDefaultThreshold) const;

  const nn::Network& network() const noexcept { return net_; }
  nn::Network& network() noexcept { return net_; }
  std::size_t grid() const noexcept { return grid_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  DetectorMetrics validation;

  static constexpr double kDefaultThreshold = 0.3;

 private:
  nn::Network net_;
  std::size_t grid_ = 6;
  std::size_t num_classes_ = 0;
};

// Channels-first copy of an HWC image batch: [B, 3, H, W].
nn::Tensor images_to_tensor(const std::vector<const sim::WorkspaceImage*>& images);

/// Trains from Glorot-initialised weights. Throws ConfigError on an empty
/// dataset or a label outside [0, num_classes).
GridDetector train_detector(const std::vector<LabeledImage>& train, const std::vector<LabeledImage>& validation,
                            const DetectorConfig& config);

DetectorMetrics evaluate_detector(const GridDetector& det, const std::vector<LabeledImage>& data);

/// Renders of single objects at uniform positions with random arm poses,
/// cycling through `classes`.
std::vector<LabeledImage> generate_detector_dataset(std::mt19937_64& rng, std::size_t count,
                                                    const std::vector<int>& classes);

// JSONL label lines {objects: [{class_id, x, y}], image_ref} plus the image sidecar.
void save_detector_dataset(const std::vector<LabeledImage>& data, const std::filesystem::path& path);
std::vector<LabeledImage> load_detector_dataset(const std::filesystem::path& path);

void save_detector(const GridDetector& det, const std::filesystem::path& path);
GridDetector load_detector(const std::filesystem::path& path);

}  // namespace vla::perception
