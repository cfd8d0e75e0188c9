#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "vla/nn/network.hpp"
#include "vla/perception/fusion.hpp"
#include "vla/sim/demo.hpp"

namespace vla::cae {

using perception::FusedState;
using perception::Strategy;

struct TrainConfig {
  std::size_t epochs = 400;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double sigma = 0.01;  // state augmentation noise
  std::size_t window = 5;
  std::uint64_t seed = 0;
  // Upper bound on optimiser steps (0 = epochs only). Epochs are cut short
  // once the budget is spent.
  std::size_t max_steps = 3000;
  // CNN strategies draw each batch from this many demonstrations so only a
  // few distinct images pass through the image encoder per step.
  std::size_t demos_per_batch = 4;
};

/// Image-derived context of one demonstration: its first frame (for the
/// jointly trained CNN) and the fixed visual features (c for
/// LocalizationOnly, c ⊕ [x, y] for Structured/Oracle, empty for EndToEnd).
struct DemoContext {
  sim::WorkspaceImage image;
  std::vector<double> fixed;
};

struct TrainingPair {
  sim::JointState joints;  // frame i
  sim::JointAction action;  // (q_j - q_i) / (j - i), clamped
  std::size_t demo = 0;
  std::size_t i = 0;
  std::size_t j = 0;
};

struct Dataset {
  Strategy strategy = Strategy::Structured;
  std::size_t dof = 4;
  std::size_t num_classes = 0;
  std::vector<DemoContext> demos;
  std::vector<TrainingPair> pairs;
  std::size_t skipped_demos = 0;  // dropped because perception found nothing
};

/// Everything build_pairs needs to derive visual features from a demo.
struct PairContext {
  Strategy strategy = Strategy::Structured;
  std::size_t num_classes = 0;
  const perception::GridDetector* detector = nullptr;  // Structured
  perception::NoiseConfig noise;                       // Oracle
  std::uint64_t noise_seed = 0;
  // Drop demos whose first frame yields no detection instead of throwing.
  bool skip_undetected = false;
};

/// One pair for every frame i and every j in (i, min(i + W, T - 1)].
/// Throws ConfigError for an empty demo list or W = 0, DemoError for a
/// demo with fewer than two frames, PerceptionError when a Structured demo
/// has no detections (or, with skip_undetected, when none is left).
Dataset build_pairs(const std::vector<sim::Demonstration>& demos, const PairContext& ctx, std::size_t window);

// Which entries of a fused vector of this strategy are one-hot class slots.
std::vector<bool> one_hot_mask(Strategy s, std::size_t dof, std::size_t num_classes);

/// Adds N(0, sigma^2) to every continuous component; one-hot slots are kept.
FusedState augment(const FusedState& s, std::mt19937_64& rng, double sigma, std::size_t num_classes);

struct LayoutSegment {
  std::string name;  // joints, features, localization, class, position
  std::size_t size = 0;
};
std::vector<LayoutSegment> fused_layout(Strategy s, std::size_t dof, std::size_t num_classes);

/// Conditional autoencoder with a one-unit bottleneck.
/// Encoder: (s ⊕ a) -> 64 -> 64 -> 1 with tanh units (so z lies in [-1, 1]);
/// decoder: (z ⊕ s) -> 64 -> 64 -> m, linear output. Inputs are scaled
/// internally: joints / pi, positions 2x - 1, actions / a_max.
struct CAEModel {
  Strategy strategy = Strategy::Structured;
  std::size_t dof = 4;
  std::size_t num_classes = 0;
  nn::Network encoder;
  nn::Network decoder;
  nn::Network image_encoder;  // empty unless the strategy learns its visual head
  TrainConfig config;
  std::vector<double> loss_history;  // mean loss per epoch
  double final_loss = 0.0;
  std::size_t steps = 0;

  std::size_t state_size() const { return perception::fused_size(strategy, dof, num_classes); }

  // Perception settings that produce this model's fused states.
  perception::PerceptionContext perception_context(int goal_class,
                                                   const perception::GridDetector* detector = nullptr) const;
};

/// Fresh Glorot-initialised model.
CAEModel make_model(Strategy strategy, std::size_t dof, std::size_t num_classes, std::mt19937_64& rng);

/// Mean batch loss, in units of (action / a_max)^2. With `backprop`
/// set, gradients of every trainable network accumulate into the model.
/// `noise_rng` may be null for an unaugmented pass.
double batch_loss(CAEModel& model, const Dataset& data, std::span<const std::size_t> batch,
                  std::mt19937_64* noise_rng, double sigma, bool backprop);

/// Adam on the mean squared reconstruction error with per-batch state
/// augmentation. CNN heads (EndToEnd, LocalizationOnly) train jointly.
/// Throws ConfigError on an empty dataset, TrainingError on a non-finite loss.
CAEModel train_cae(const Dataset& data, const TrainConfig& config);

// Fused state of pair `p` as the model sees it at evaluation time.
FusedState pair_state(const CAEModel& model, const Dataset& data, const TrainingPair& p);

double encode(const CAEModel& model, const FusedState& s, const sim::JointAction& a);
sim::JointAction decode(const CAEModel& model, double z, const FusedState& s);
// Decodes many latents against one state in a single batched pass.
std::vector<sim::JointAction> decode_batch(const CAEModel& model, std::span<const double> zs, const FusedState& s);

void save_model(const CAEModel& model, const std::filesystem::path& path);
/// Throws CheckpointError for corrupt or mismatched files, including a
/// strategy different from `expected` when one is given.
CAEModel load_model(const std::filesystem::path& path, std::optional<Strategy> expected = std::nullopt);

}  // namespace vla::cae
