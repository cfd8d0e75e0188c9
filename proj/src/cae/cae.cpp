#include "vla/cae/cae.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "vla/errors.hpp"
#include "vla/nn/adam.hpp"
#include "vla/nn/checkpoint.hpp"
#include "vla/nn/losses.hpp"

namespace vla::cae {

using nlohmann::json;
using perception::encoder_features;
using sim::kMaxJointVelocity;

namespace {

constexpr std::size_t kHidden = 64;

// Affine input scaling per fused-vector entry: normalised = raw * scale + shift.
struct Scaling {
  std::vector<double> scale;
  std::vector<double> shift;
};

Scaling state_scaling(Strategy s, std::size_t dof, std::size_t num_classes) {
  Scaling sc;
  for (const auto& seg : fused_layout(s, dof, num_classes)) {
    for (std::size_t k = 0; k < seg.size; ++k) {
      if (seg.name == "joints") {
        sc.scale.push_back(1.0 / sim::kPi);
        sc.shift.push_back(0.0);
      } else if (seg.name == "position") {
        sc.scale.push_back(2.0);
        sc.shift.push_back(-1.0);
      } else {
        sc.scale.push_back(1.0);
        sc.shift.push_back(0.0);
      }
    }
  }
  return sc;
}

void check_state(const CAEModel& model, const FusedState& s) {
  if (s.strategy != model.strategy) {
    throw ConfigError("fused state is " + perception::to_string(s.strategy) + " but the model expects " +
                      perception::to_string(model.strategy));
  }
  if (s.vector.size() != model.state_size()) {
    throw ShapeError("fused state has " + std::to_string(s.vector.size()) + " entries, model expects " +
                     std::to_string(model.state_size()));
  }
}

// q ⊕ learned ⊕ fixed, which is the canonical order for every strategy.
std::vector<double> assemble(const sim::JointState& q, std::span<const double> learned, const std::vector<double>& fixed) {
  std::vector<double> v = q.q;
  v.insert(v.end(), learned.begin(), learned.end());
  v.insert(v.end(), fixed.begin(), fixed.end());
  return v;
}

std::vector<std::vector<std::size_t>> make_batches(const Dataset& data, const TrainConfig& cfg, bool grouped,
                                                   std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> batches;
  if (!grouped) {
    std::vector<std::size_t> order(data.pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + cfg.batch_size)));
    }
    return batches;
  }
  std::vector<std::vector<std::size_t>> by_demo(data.demos.size());
  for (std::size_t i = 0; i < data.pairs.size(); ++i) by_demo[data.pairs[i].demo].push_back(i);
  std::vector<std::size_t> pool;
  for (std::size_t d = 0; d < by_demo.size(); ++d) {
    std::shuffle(by_demo[d].begin(), by_demo[d].end(), rng);
    if (!by_demo[d].empty()) pool.push_back(d);
  }
  const std::size_t groups = std::max<std::size_t>(1, cfg.demos_per_batch);
  const std::size_t per_demo = (cfg.batch_size + groups - 1) / groups;
  while (!pool.empty()) {
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<std::size_t> batch;
    for (std::size_t g = 0; g < std::min(groups, pool.size()); ++g) {
      auto& rest = by_demo[pool[g]];
      const std::size_t take = std::min(per_demo, rest.size());
      batch.insert(batch.end(), rest.end() - static_cast<std::ptrdiff_t>(take), rest.end());
      rest.resize(rest.size() - take);
    }
    std::erase_if(pool, [&](std::size_t d) { return by_demo[d].empty(); });
    batches.push_back(std::move(batch));
  }
  return batches;
}

nn::Network mlp(std::size_t in, std::size_t out, bool tanh_output) {
  std::vector<nn::Layer> layers{nn::dense(in, kHidden), nn::tanh_layer(), nn::dense(kHidden, kHidden),
                                nn::tanh_layer(), nn::dense(kHidden, out)};
  if (tanh_output) layers.push_back(nn::tanh_layer());
  return nn::Network(std::move(layers));
}

json config_to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
          {"sigma", c.sigma},         {"window", c.window},         {"seed", c.seed},
          {"max_steps", c.max_steps}, {"demos_per_batch", c.demos_per_batch}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.sigma = j.at("sigma").get<double>();
  c.window = j.at("window").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_steps = j.at("max_steps").get<std::size_t>();
  c.demos_per_batch = j.at("demos_per_batch").get<std::size_t>();
  return c;
}

}  // namespace

std::vector<LayoutSegment> fused_layout(Strategy s, std::size_t dof, std::size_t num_classes) {
  std::vector<LayoutSegment> out{{"joints", dof}};
  switch (s) {
    case Strategy::EndToEnd: out.push_back({"features", perception::kEndToEndFeatures}); break;
    case Strategy::LocalizationOnly:
      out.push_back({"localization", perception::kLocalizationFeatures});
      out.push_back({"class", num_classes});
      break;
    case Strategy::Structured:
    case Strategy::Oracle:
      out.push_back({"class", num_classes});
      out.push_back({"position", 2});
      break;
  }
  return out;
}

std::vector<bool> one_hot_mask(Strategy s, std::size_t dof, std::size_t num_classes) {
  std::vector<bool> mask;
  for (const auto& seg : fused_layout(s, dof, num_classes)) mask.insert(mask.end(), seg.size, seg.name == "class");
  return mask;
}

FusedState augment(const FusedState& s, std::mt19937_64& rng, double sigma, std::size_t num_classes) {
  if (sigma < 0.0) throw ConfigError("augmentation sigma must be non-negative");
  FusedState out = s;
  if (sigma == 0.0) return out;
  const std::size_t visual = perception::fused_size(s.strategy, 0, num_classes);
  if (s.vector.size() < visual) throw ShapeError("fused state shorter than its visual block");
  const auto mask = one_hot_mask(s.strategy, s.vector.size() - visual, num_classes);
  std::normal_distribution<double> gauss(0.0, sigma);
  for (std::size_t k = 0; k < out.vector.size(); ++k) {
    if (!mask[k]) out.vector[k] += gauss(rng);
  }
  return out;
}

Dataset build_pairs(const std::vector<sim::Demonstration>& demos, const PairContext& ctx, std::size_t window) {
  if (demos.empty()) throw ConfigError("no demonstrations to build pairs from");
  if (window == 0) throw ConfigError("pair window must be at least 1");
  Dataset data;
  data.strategy = ctx.strategy;
  data.num_classes = ctx.num_classes;
  data.dof = demos.front().scene.joints.size();
  std::mt19937_64 noise_rng(ctx.noise_seed);
  for (std::size_t d = 0; d < demos.size(); ++d) {
    const auto& demo = demos[d];
    if (demo.frames.size() < 2) throw DemoError("demonstration " + std::to_string(d) + " has fewer than two frames");
    if (demo.scene.joints.size() != data.dof) throw ShapeError("demonstrations mix arm sizes");
    DemoContext dc{demo.frames.front().image, {}};
    const int goal = demo.task.target_class;
    switch (ctx.strategy) {
      case Strategy::EndToEnd: break;
      case Strategy::LocalizationOnly: dc.fixed = perception::one_hot(goal, ctx.num_classes); break;
      case Strategy::Structured:
      case Strategy::Oracle: {
        perception::PerceptionContext pc;
        pc.strategy = ctx.strategy;
        pc.num_classes = ctx.num_classes;
        pc.goal_class = goal;
        pc.detector = ctx.detector;
        pc.noise = ctx.noise;
        try {
          dc.fixed = perception::perceive(pc, dc.image, demo.scene, noise_rng).features;
        } catch (const PerceptionError&) {
          if (!ctx.skip_undetected) throw;
          ++data.skipped_demos;
          continue;
        }
        break;
      }
    }
    const std::size_t slot = data.demos.size();
    data.demos.push_back(std::move(dc));
    const std::size_t t_end = demo.frames.size();
    for (std::size_t i = 0; i + 1 < t_end; ++i) {
      for (std::size_t j = i + 1; j <= std::min(i + window, t_end - 1); ++j) {
        const auto& qi = demo.frames[i].joints;
        const auto& qj = demo.frames[j].joints;
        sim::JointAction a{std::vector<double>(qi.size())};
        for (std::size_t k = 0; k < qi.size(); ++k) {
          a.a[k] = sim::angle_diff(qj.q[k], qi.q[k]) / (static_cast<double>(j - i) * sim::kDt);
        }
        data.pairs.push_back({qi, sim::clamp_action(std::move(a)), slot, i, j});
      }
    }
  }
  if (data.demos.empty()) throw PerceptionError("no demonstration could be perceived");
  return data;
}

perception::PerceptionContext CAEModel::perception_context(int goal_class,
                                                           const perception::GridDetector* detector) const {
  perception::PerceptionContext ctx;
  ctx.strategy = strategy;
  ctx.num_classes = num_classes;
  ctx.goal_class = goal_class;
  ctx.detector = detector;
  if (!image_encoder.empty()) ctx.encoder = &image_encoder;
  return ctx;
}

CAEModel make_model(Strategy strategy, std::size_t dof, std::size_t num_classes, std::mt19937_64& rng) {
  CAEModel m;
  m.strategy = strategy;
  m.dof = dof;
  m.num_classes = num_classes;
  const std::size_t s = m.state_size();
  m.encoder = mlp(s + dof, 1, true);
  m.decoder = mlp(1 + s, dof, false);
  m.encoder.initialize(rng);
  m.decoder.initialize(rng);
  if (perception::uses_image_encoder(strategy)) {
    m.image_encoder = perception::make_image_encoder(encoder_features(strategy));
    m.image_encoder.initialize(rng);
  }
  return m;
}

double batch_loss(CAEModel& model, const Dataset& data, std::span<const std::size_t> batch,
                  std::mt19937_64* noise_rng, double sigma, bool backprop) {
  if (batch.empty()) throw ConfigError("empty batch");
  const std::size_t b_size = batch.size(), m = model.dof, s_size = model.state_size();
  const std::size_t f = encoder_features(model.strategy);
  const Scaling sc = state_scaling(model.strategy, m, model.num_classes);
  const auto mask = one_hot_mask(model.strategy, m, model.num_classes);

  // Distinct demonstrations in this batch share one CNN pass each.
  std::map<std::size_t, std::size_t> slot;
  std::vector<const sim::WorkspaceImage*> images;
  for (auto idx : batch) {
    const auto d = data.pairs.at(idx).demo;
    if (slot.emplace(d, images.size()).second) images.push_back(&data.demos.at(d).image);
  }
  nn::Tensor feats;
  if (f > 0) {
    const auto x = perception::images_to_tensor(images);
    feats = backprop ? model.image_encoder.forward(x) : model.image_encoder.predict(x);
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  nn::Tensor enc_in({b_size, s_size + m});
  nn::Tensor dec_in({b_size, 1 + s_size});
  nn::Tensor target({b_size, m});
  for (std::size_t b = 0; b < b_size; ++b) {
    const auto& p = data.pairs[batch[b]];
    const std::size_t u = slot.at(p.demo);
    const std::span<const double> learned =
        f > 0 ? std::span<const double>(feats.data() + u * f, f) : std::span<const double>();
    auto raw = assemble(p.joints, learned, data.demos[p.demo].fixed);
    if (raw.size() != s_size) throw ShapeError("training state does not match the model layout");
    if (noise_rng && sigma > 0.0) {
      for (std::size_t k = 0; k < s_size; ++k) {
        if (!mask[k]) raw[k] += sigma * gauss(*noise_rng);
      }
    }
    auto er = enc_in.row(b);
    auto dr = dec_in.row(b);
    for (std::size_t k = 0; k < s_size; ++k) {
      const double v = raw[k] * sc.scale[k] + sc.shift[k];
      er[k] = v;
      dr[1 + k] = v;
    }
    for (std::size_t k = 0; k < m; ++k) {
      er[s_size + k] = p.action.a[k] / kMaxJointVelocity;
      target.row(b)[k] = p.action.a[k] / kMaxJointVelocity;
    }
  }
  const auto z = backprop ? model.encoder.forward(enc_in) : model.encoder.predict(enc_in);
  for (std::size_t b = 0; b < b_size; ++b) dec_in.row(b)[0] = z[b];
  const auto out = backprop ? model.decoder.forward(dec_in) : model.decoder.predict(dec_in);
  nn::Tensor grad;
  const double loss = nn::mse_loss(out, target, grad);
  if (!backprop) return loss;

  const auto g_dec = model.decoder.backward(grad);
  nn::Tensor dz({b_size, 1});
  for (std::size_t b = 0; b < b_size; ++b) dz[b] = g_dec.row(b)[0];
  const auto g_enc = model.encoder.backward(dz);
  if (f > 0) {
    nn::Tensor dfeats({images.size(), f});
    for (std::size_t b = 0; b < b_size; ++b) {
      const std::size_t u = slot.at(data.pairs[batch[b]].demo);
      for (std::size_t k = 0; k < f; ++k) {
        const std::size_t col = m + k;
        dfeats.row(u)[k] += (g_dec.row(b)[1 + col] + g_enc.row(b)[col]) * sc.scale[col];
      }
    }
    model.image_encoder.backward(dfeats);
  }
  return loss;
}

CAEModel train_cae(const Dataset& data, const TrainConfig& cfg) {
  if (data.pairs.empty()) throw ConfigError("no training pairs");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  if (cfg.sigma < 0.0) throw ConfigError("augmentation sigma must be non-negative");
  std::mt19937_64 rng(cfg.seed);
  CAEModel model = make_model(data.strategy, data.dof, data.num_classes, rng);
  model.config = cfg;
  nn::AdamState enc_opt, dec_opt, img_opt;
  for (auto* o : {&enc_opt, &dec_opt, &img_opt}) o->config.learning_rate = cfg.learning_rate;
  const bool grouped = !model.image_encoder.empty();
  bool done = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& batch : make_batches(data, cfg, grouped, rng)) {
      const double loss = batch_loss(model, data, batch, &rng, cfg.sigma, true);
      if (!std::isfinite(loss)) throw TrainingError("reconstruction loss is not finite", epoch);
      nn::adam_step(model.encoder, enc_opt);
      nn::adam_step(model.decoder, dec_opt);
      if (grouped) nn::adam_step(model.image_encoder, img_opt);
      total += loss * static_cast<double>(batch.size());
      count += batch.size();
      if (++model.steps == cfg.max_steps) {
        done = true;
        break;
      }
    }
    model.loss_history.push_back(total / static_cast<double>(count));
  }
  model.final_loss = model.loss_history.empty() ? 0.0 : model.loss_history.back();
  return model;
}

FusedState pair_state(const CAEModel& model, const Dataset& data, const TrainingPair& p) {
  const auto& dc = data.demos.at(p.demo);
  std::vector<double> learned;
  if (!model.image_encoder.empty()) {
    const auto f = model.image_encoder.predict(perception::images_to_tensor({&dc.image}));
    learned.assign(f.values().begin(), f.values().end());
  }
  return FusedState{model.strategy, assemble(p.joints, learned, dc.fixed)};
}

double encode(const CAEModel& model, const FusedState& s, const sim::JointAction& a) {
  check_state(model, s);
  if (a.size() != model.dof) throw ShapeError("action dimension does not match the model");
  const Scaling sc = state_scaling(model.strategy, model.dof, model.num_classes);
  const std::size_t n = s.vector.size();
  nn::Tensor x({1, n + model.dof});
  for (std::size_t k = 0; k < n; ++k) x[k] = s.vector[k] * sc.scale[k] + sc.shift[k];
  for (std::size_t k = 0; k < model.dof; ++k) x[n + k] = a.a[k] / kMaxJointVelocity;
  return model.encoder.predict(x)[0];
}

std::vector<sim::JointAction> decode_batch(const CAEModel& model, std::span<const double> zs, const FusedState& s) {
  check_state(model, s);
  if (zs.empty()) return {};
  const Scaling sc = state_scaling(model.strategy, model.dof, model.num_classes);
  const std::size_t n = s.vector.size();
  nn::Tensor x({zs.size(), 1 + n});
  for (std::size_t b = 0; b < zs.size(); ++b) {
    auto r = x.row(b);
    r[0] = zs[b];
    for (std::size_t k = 0; k < n; ++k) r[1 + k] = s.vector[k] * sc.scale[k] + sc.shift[k];
  }
  const auto out = model.decoder.predict(x);
  std::vector<sim::JointAction> actions;
  actions.reserve(zs.size());
  for (std::size_t b = 0; b < zs.size(); ++b) {
    sim::JointAction a{std::vector<double>(model.dof)};
    for (std::size_t k = 0; k < model.dof; ++k) a.a[k] = out.row(b)[k] * kMaxJointVelocity;
    actions.push_back(sim::clamp_action(std::move(a)));
  }
  return actions;
}

sim::JointAction decode(const CAEModel& model, double z, const FusedState& s) {
  const double zs[1] = {z};
  return decode_batch(model, zs, s).front();
}

void save_model(const CAEModel& model, const std::filesystem::path& path) {
  json layout = json::array();
  for (const auto& seg : fused_layout(model.strategy, model.dof, model.num_classes)) {
    layout.push_back({{"name", seg.name}, {"size", seg.size}});
  }
  json doc{{"format", "vla-cae"},
           {"format_version", nn::kCheckpointVersion},
           {"strategy", perception::to_string(model.strategy)},
           {"dof", model.dof},
           {"num_classes", model.num_classes},
           {"latent_dim", 1},
           {"layout", std::move(layout)},
           {"config", config_to_json(model.config)},
           {"loss_history", model.loss_history},
           {"final_loss", model.final_loss},
           {"steps", model.steps},
           {"encoder", nn::network_to_json(model.encoder)},
           {"decoder", nn::network_to_json(model.decoder)}};
  doc["image_encoder"] = model.image_encoder.empty() ? json(nullptr) : nn::network_to_json(model.image_encoder);
  nn::write_json_file(doc, path);
}

CAEModel load_model(const std::filesystem::path& path, std::optional<Strategy> expected) {
  const json doc = nn::read_json_file(path);
  try {
    if (doc.value("format", "") != "vla-cae") throw CheckpointError(path.string() + " is not a CAE checkpoint");
    if (doc.at("format_version").get<int>() != nn::kCheckpointVersion) {
      throw CheckpointError(path.string() + ": unsupported CAE checkpoint version");
    }
    CAEModel m;
    m.strategy = perception::strategy_from_string(doc.at("strategy").get<std::string>());
    if (expected && *expected != m.strategy) {
      throw CheckpointError(path.string() + " holds a " + perception::to_string(m.strategy) + " model, expected " +
                            perception::to_string(*expected));
    }
    m.dof = doc.at("dof").get<std::size_t>();
    m.num_classes = doc.at("num_classes").get<std::size_t>();
    m.config = config_from_json(doc.at("config"));
    m.loss_history = doc.at("loss_history").get<std::vector<double>>();
    m.final_loss = doc.at("final_loss").get<double>();
    m.steps = doc.at("steps").get<std::size_t>();
    m.encoder = nn::network_from_json(doc.at("encoder"));
    m.decoder = nn::network_from_json(doc.at("decoder"));
    if (!doc.at("image_encoder").is_null()) m.image_encoder = nn::network_from_json(doc.at("image_encoder"));
    if (perception::uses_image_encoder(m.strategy) == m.image_encoder.empty()) {
      throw CheckpointError(path.string() + ": image encoder presence does not match the strategy");
    }
    const std::size_t s = m.state_size();
    const auto& enc = m.encoder.layers();
    const auto& dec = m.decoder.layers();
    if (enc.empty() || dec.empty() || enc.front().in != s + m.dof || dec.front().in != 1 + s ||
        dec[dec.size() - 1].out != m.dof) {
      throw CheckpointError(path.string() + ": network widths do not match the fused-state layout");
    }
    return m;
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace vla::cae
