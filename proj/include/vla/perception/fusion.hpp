#pragma once

#include <random>
#include <string>
#include <vector>

#include "vla/nn/network.hpp"
#include "vla/perception/detector.hpp"
#include "vla/sim/world.hpp"

namespace vla::perception {

enum class Strategy { EndToEnd, LocalizationOnly, Structured, Oracle };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);  // throws ConfigError

inline constexpr std::size_t kEndToEndFeatures = 32;
inline constexpr std::size_t kLocalizationFeatures = 16;

// Width of the CNN feature head (0 for detector-based strategies).
std::size_t encoder_features(Strategy s);
bool uses_image_encoder(Strategy s);

/// Fused vector length: m + 32 (EndToEnd), m + 16 + |C| (LocalizationOnly),
/// m + |C| + 2 (Structured, Oracle).
std::size_t fused_size(Strategy s, std::size_t dof, std::size_t num_classes);

/// Conv(3->8)-ReLU-Pool-Conv(8->16)-ReLU-Pool-Flatten-Dense(2304->features).
nn::Network make_image_encoder(std::size_t features);

std::vector<double> one_hot(int class_id, std::size_t num_classes);

/// Image-derived portion of the fused state: f, g ⊕ c, or c ⊕ [x, y].
/// Computed once from an episode's first frame and held fixed.
struct VisualContext {
  Strategy strategy = Strategy::Oracle;
  std::vector<double> features;
};

struct FusedState {
  Strategy strategy = Strategy::Oracle;
  std::vector<double> vector;  // s_joint first, then the visual features
};

struct PerceptionContext {
  Strategy strategy = Strategy::Oracle;
  std::size_t num_classes = 0;
  int goal_class = 0;                      // declared target; ground truth for LocalizationOnly
  const GridDetector* detector = nullptr;  // Structured
  const nn::Network* encoder = nullptr;    // EndToEnd, LocalizationOnly
  NoiseConfig noise;                       // Oracle
};

// The detection for the goal class, else the most confident one. Throws
// PerceptionError when there are no detections.
Detection select_detection(const std::vector<Detection>& dets, int goal_class);

/// Runs the strategy's visual pipeline on `image` (Oracle reads `world`
/// instead, drawing noise from `rng`). Throws PerceptionError when the
/// Structured detector finds nothing and ConfigError when a required
/// network is missing.
VisualContext perceive(const PerceptionContext& ctx, const sim::WorkspaceImage& image, const sim::WorldState& world,
                       std::mt19937_64& rng);

FusedState fuse_state(const sim::JointState& joints, const VisualContext& visual);

}  // namespace vla::perception
