#include "vla/perception/fusion.hpp"

#include <algorithm>

#include "vla/errors.hpp"

namespace vla::perception {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::EndToEnd: return "end-to-end";
    case Strategy::LocalizationOnly: return "localization-only";
    case Strategy::Structured: return "structured";
    case Strategy::Oracle: return "oracle";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
  for (auto s : {Strategy::EndToEnd, Strategy::LocalizationOnly, Strategy::Structured, Strategy::Oracle}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown strategy '" + name + "' (end-to-end, localization-only, structured, oracle)");
}

std::size_t encoder_features(Strategy s) {
  switch (s) {
    case Strategy::EndToEnd: return kEndToEndFeatures;
    case Strategy::LocalizationOnly: return kLocalizationFeatures;
    default: return 0;
  }
}

bool uses_image_encoder(Strategy s) { return encoder_features(s) > 0; }

std::size_t fused_size(Strategy s, std::size_t dof, std::size_t num_classes) {
  switch (s) {
    case Strategy::EndToEnd: return dof + kEndToEndFeatures;
    case Strategy::LocalizationOnly: return dof + kLocalizationFeatures + num_classes;
    case Strategy::Structured:
    case Strategy::Oracle: return dof + num_classes + 2;
  }
  return 0;
}

nn::Network make_image_encoder(std::size_t features) {
  const std::size_t flat = 16 * (sim::kImageSize / 4) * (sim::kImageSize / 4);
  return nn::Network({nn::conv2d(3, 8), nn::relu(), nn::max_pool(), nn::conv2d(8, 16), nn::relu(), nn::max_pool(),
                      nn::flatten(), nn::dense(flat, features)});
}

std::vector<double> one_hot(int class_id, std::size_t num_classes) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= num_classes) {
    throw ConfigError("class " + std::to_string(class_id) + " outside one-hot of width " + std::to_string(num_classes));
  }
  std::vector<double> v(num_classes, 0.0);
  v[static_cast<std::size_t>(class_id)] = 1.0;
  return v;
}

Detection select_detection(const std::vector<Detection>& dets, int goal_class) {
  if (dets.empty()) throw PerceptionError("no objects detected");
  for (const auto& d : dets) {
    if (d.class_id == goal_class) return d;
  }
  return *std::max_element(dets.begin(), dets.end(),
                           [](const Detection& a, const Detection& b) { return a.confidence < b.confidence; });
}

VisualContext perceive(const PerceptionContext& ctx, const sim::WorkspaceImage& image, const sim::WorldState& world,
                       std::mt19937_64& rng) {
  VisualContext v{ctx.strategy, {}};
  switch (ctx.strategy) {
    case Strategy::EndToEnd:
    case Strategy::LocalizationOnly: {
      if (!ctx.encoder) throw ConfigError(to_string(ctx.strategy) + " needs its image encoder");
      const auto f = ctx.encoder->predict(images_to_tensor({&image}));
      if (f.size() != encoder_features(ctx.strategy)) throw ShapeError("image encoder has the wrong feature width");
      v.features.assign(f.values().begin(), f.values().end());
      if (ctx.strategy == Strategy::LocalizationOnly) {
        const auto c = one_hot(ctx.goal_class, ctx.num_classes);
        v.features.insert(v.features.end(), c.begin(), c.end());
      }
      break;
    }
    case Strategy::Structured:
    case Strategy::Oracle: {
      std::vector<Detection> dets;
      if (ctx.strategy == Strategy::Structured) {
        if (!ctx.detector) throw ConfigError("structured strategy needs a detector");
        if (ctx.detector->num_classes() != ctx.num_classes) {
          throw ConfigError("detector class count does not match the model");
        }
        dets = ctx.detector->detect(image);
      } else {
        dets = oracle_detect(world, ctx.noise, ctx.num_classes, rng);
      }
      const Detection d = select_detection(dets, ctx.goal_class);
      v.features = one_hot(d.class_id, ctx.num_classes);
      v.features.push_back(d.pos.x);
      v.features.push_back(d.pos.y);
      break;
    }
  }
  return v;
}

FusedState fuse_state(const sim::JointState& joints, const VisualContext& visual) {
  FusedState s{visual.strategy, joints.q};
  s.vector.insert(s.vector.end(), visual.features.begin(), visual.features.end());
  return s;
}

}  // namespace vla::perception
