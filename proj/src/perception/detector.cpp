#include "vla/perception/detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vla/errors.hpp"
#include "vla/nn/adam.hpp"
#include "vla/nn/checkpoint.hpp"
#include "vla/nn/losses.hpp"
#include "vla/sim/io.hpp"

namespace vla::perception {

using nlohmann::json;
using sim::Vec2;

std::vector<Detection> oracle_detect(const sim::WorldState& world, const NoiseConfig& noise, std::size_t num_classes,
                                     std::mt19937_64& rng) {
  std::vector<Detection> out;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& o : world.objects) {
    Detection d{o.class_id, o.pos, 1.0};
    if (noise.sigma_pos > 0.0) {
      d.pos.x = std::clamp(d.pos.x + noise.sigma_pos * gauss(rng), 0.0, 1.0);
      d.pos.y = std::clamp(d.pos.y + noise.sigma_pos * gauss(rng), 0.0, 1.0);
    }
    if (noise.p_mis > 0.0 && num_classes > 1 && unit(rng) < noise.p_mis) {
      std::uniform_int_distribution<int> other(0, static_cast<int>(num_classes) - 2);
      const int pick = other(rng);
      d.class_id = pick >= o.class_id ? pick + 1 : pick;
    }
    out.push_back(d);
  }
  return out;
}

GridDetector::GridDetector(nn::Network net, std::size_t grid, std::size_t num_classes)
    : net_(std::move(net)), grid_(grid), num_classes_(num_classes) {}

nn::Network GridDetector::make_network(std::size_t num_classes) {
  return nn::Network({nn::conv2d(3, 16), nn::relu(), nn::max_pool(), nn::conv2d(16, 24), nn::relu(), nn::max_pool(),
                      nn::conv2d(24, 32), nn::relu(), nn::max_pool(), nn::conv2d(32, 1 + num_classes + 2)});
}

nn::Tensor images_to_tensor(const std::vector<const sim::WorkspaceImage*>& images) {
  if (images.empty()) throw ShapeError("empty image batch");
  const std::size_t h = images.front()->height, w = images.front()->width, hw = h * w;
  nn::Tensor t({images.size(), 3, h, w});
  for (std::size_t b = 0; b < images.size(); ++b) {
    const auto& img = *images[b];
    if (img.height != h || img.width != w) throw ShapeError("image batch dimensions differ");
    double* dst = t.data() + b * 3 * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t c = 0; c < 3; ++c) dst[c * hw + p] = img.pixels[p * 3 + c];
    }
  }
  return t;
}

namespace {

struct CellScore {
  std::size_t cell = 0;
  double score = -1.0;
};

std::vector<double> class_probabilities(const double* out, std::size_t cells, std::size_t cell, std::size_t n) {
  std::vector<double> p(n);
  double mx = -1e300;
  for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, out[(1 + k) * cells + cell]);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) sum += (p[k] = std::exp(out[(1 + k) * cells + cell] - mx));
  for (auto& v : p) v /= sum;
  return p;
}

// Best (cell, score) per class for one image's raw output.
std::vector<CellScore> best_cells(const double* out, std::size_t grid, std::size_t n) {
  const std::size_t cells = grid * grid;
  std::vector<CellScore> best(n);
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const double obj = nn::sigmoid(out[cell]);
    const auto p = class_probabilities(out, cells, cell, n);
    for (std::size_t k = 0; k < n; ++k) {
      if (obj * p[k] > best[k].score) best[k] = {cell, obj * p[k]};
    }
  }
  return best;
}

Vec2 cell_position(const double* out, std::size_t grid, std::size_t n, std::size_t cell) {
  const std::size_t cells = grid * grid;
  const double g = static_cast<double>(grid);
  const double ox = nn::sigmoid(out[(1 + n) * cells + cell]);
  const double oy = nn::sigmoid(out[(2 + n) * cells + cell]);
  const double col = static_cast<double>(cell % grid), row = static_cast<double>(cell / grid);
  return {std::clamp((col + ox) / g, 0.0, 1.0), std::clamp(1.0 - (row + oy) / g, 0.0, 1.0)};
}

std::size_t label_cell(const Label& l, std::size_t grid, double& off_x, double& off_y) {
  const double g = static_cast<double>(grid);
  const double u = std::clamp(l.x, 0.0, 1.0 - 1e-9) * g;
  const double v = std::clamp(1.0 - l.y, 0.0, 1.0 - 1e-9) * g;
  const std::size_t col = static_cast<std::size_t>(u), row = static_cast<std::size_t>(v);
  off_x = u - static_cast<double>(col);
  off_y = v - static_cast<double>(row);
  return row * grid + col;
}

// Loss gradient for one image's output block; returns the weighted loss.
double detection_loss(const double* out, double* grad, const std::vector<Label>& labels, const DetectorConfig& cfg,
                      double scale) {
  const std::size_t grid = cfg.grid, n = cfg.num_classes, cells = grid * grid;
  std::vector<char> positive(cells, 0);
  double loss = 0.0;
  for (const auto& l : labels) {
    double tx = 0.0, ty = 0.0;
    const std::size_t cell = label_cell(l, grid, tx, ty);
    positive[cell] = 1;
    std::vector<double> logits(n), g(n);
    for (std::size_t k = 0; k < n; ++k) logits[k] = out[(1 + k) * cells + cell];
    loss += cfg.class_weight * nn::softmax_cross_entropy(logits, static_cast<std::size_t>(l.class_id), g);
    for (std::size_t k = 0; k < n; ++k) grad[(1 + k) * cells + cell] += scale * cfg.class_weight * g[k];
    const double targets[2] = {tx, ty};
    for (std::size_t a = 0; a < 2; ++a) {
      const std::size_t idx = (1 + n + a) * cells + cell;
      const double s = nn::sigmoid(out[idx]);
      const double d = s - targets[a];
      loss += cfg.offset_weight * d * d;
      grad[idx] += scale * cfg.offset_weight * 2.0 * d * s * (1.0 - s);
    }
  }
  for (std::size_t cell = 0; cell < cells; ++cell) {
    double g = 0.0;
    loss += cfg.objectness_weight * nn::bce_with_logit(out[cell], positive[cell] ? 1.0 : 0.0, g);
    grad[cell] += scale * cfg.objectness_weight * g;
  }
  return loss;
}

void check_labels(const std::vector<LabeledImage>& data, std::size_t num_classes) {
  for (const auto& d : data) {
    for (const auto& l : d.objects) {
      if (l.class_id < 0 || static_cast<std::size_t>(l.class_id) >= num_classes) {
        throw ConfigError("label class " + std::to_string(l.class_id) + " outside the configured " +
                          std::to_string(num_classes) + " classes");
      }
    }
  }
}

}  // namespace

std::vector<Detection> GridDetector::detect(const sim::WorkspaceImage& image, double threshold) const {
  const auto out = net_.predict(images_to_tensor({&image}));
  if (out.shape() != nn::Shape{1, 1 + num_classes_ + 2, grid_, grid_}) {
    throw ShapeError("detector output " + nn::shape_string(out.shape()) + " does not match its grid");
  }
  std::vector<Detection> dets;
  const auto best = best_cells(out.data(), grid_, num_classes_);
  for (std::size_t k = 0; k < num_classes_; ++k) {
    if (best[k].score < threshold) continue;
    dets.push_back({static_cast<int>(k), cell_position(out.data(), grid_, num_classes_, best[k].cell), best[k].score});
  }
  return dets;
}

DetectorMetrics evaluate_detector(const GridDetector& det, const std::vector<LabeledImage>& data) {
  DetectorMetrics m;
  double correct = 0.0, err = 0.0;
  for (const auto& d : data) {
    if (d.objects.empty()) continue;
    const auto all = det.detect(d.image, 0.0);
    const auto top = std::max_element(all.begin(), all.end(),
                                      [](const Detection& a, const Detection& b) { return a.confidence < b.confidence; });
    const Label& truth = d.objects.front();
    if (top->class_id == truth.class_id) correct += 1.0;
    err += (top->pos - Vec2{truth.x, truth.y}).norm();
    ++m.evaluated;
  }
  if (m.evaluated > 0) {
    m.class_accuracy = correct / static_cast<double>(m.evaluated);
    m.mean_position_error = err / static_cast<double>(m.evaluated);
  }
  return m;
}

GridDetector train_detector(const std::vector<LabeledImage>& train, const std::vector<LabeledImage>& validation,
                            const DetectorConfig& cfg) {
  if (train.empty()) throw ConfigError("detector dataset is empty");
  if (cfg.num_classes == 0 || cfg.batch_size == 0) throw ConfigError("detector needs classes and a batch size");
  if (cfg.grid != 6) throw ConfigError("detector network is built for a 6x6 grid");
  check_labels(train, cfg.num_classes);
  check_labels(validation, cfg.num_classes);

  std::mt19937_64 rng(cfg.seed);
  GridDetector det(GridDetector::make_network(cfg.num_classes), cfg.grid, cfg.num_classes);
  det.network().initialize(rng);
  nn::AdamState adam;
  adam.config.learning_rate = cfg.learning_rate;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const sim::WorkspaceImage*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]].image);
      const auto out = det.network().forward(images_to_tensor(batch));
      nn::Tensor grad(out.shape());
      const std::size_t block = out.size() / batch.size();
      const double scale = 1.0 / static_cast<double>(batch.size());
      double loss = 0.0;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        loss += detection_loss(out.data() + b * block, grad.data() + b * block, train[order[start + b]].objects, cfg,
                               scale);
      }
      if (!std::isfinite(loss)) throw TrainingError("detector loss diverged", epoch);
      det.network().backward(grad);
      nn::adam_step(det.network(), adam);
    }
  }
  det.validation = evaluate_detector(det, validation);
  return det;
}

std::vector<LabeledImage> generate_detector_dataset(std::mt19937_64& rng, std::size_t count,
                                                    const std::vector<int>& classes) {
  if (classes.empty()) throw ConfigError("detector dataset needs classes");
  std::vector<LabeledImage> out;
  out.reserve(count);
  sim::SceneOptions opts;
  opts.joint_init = sim::JointInit::Random;
  for (std::size_t i = 0; i < count; ++i) {
    const auto w = sim::sample_scene(rng, {classes[i % classes.size()]}, opts);
    LabeledImage li{sim::render(w), {}};
    for (const auto& o : w.objects) li.objects.push_back({o.class_id, o.pos.x, o.pos.y});
    out.push_back(std::move(li));
  }
  return out;
}

void save_detector_dataset(const std::vector<LabeledImage>& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::vector<const sim::WorkspaceImage*> images;
  for (std::size_t i = 0; i < data.size(); ++i) {
    json objs = json::array();
    for (const auto& l : data[i].objects) objs.push_back({{"class_id", l.class_id}, {"x", l.x}, {"y", l.y}});
    out << json{{"objects", std::move(objs)}, {"image_ref", i}}.dump() << '\n';
    images.push_back(&data[i].image);
  }
  if (!out) throw IoError("write failed for " + path.string());
  sim::write_image_blob(images, sim::sidecar_path(path));
}

std::vector<LabeledImage> load_detector_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  auto images = sim::read_image_blob(sim::sidecar_path(path));
  std::vector<LabeledImage> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      const auto ref = rec.at("image_ref").get<std::size_t>();
      if (ref >= images.size()) throw IoError("image_ref outside blob");
      LabeledImage li{images[ref], {}};
      for (const auto& o : rec.at("objects")) {
        li.objects.push_back({o.at("class_id").get<int>(), o.at("x").get<double>(), o.at("y").get<double>()});
      }
      out.push_back(std::move(li));
    } catch (const json::exception& e) {
      throw IoError(path.string() + ": " + e.what());
    }
  }
  return out;
}

void save_detector(const GridDetector& det, const std::filesystem::path& path) {
  json doc = nn::network_to_json(det.network());
  doc["num_classes"] = det.num_classes();
  doc["grid"] = det.grid();
  doc["validation"] = {{"class_accuracy", det.validation.class_accuracy},
                       {"mean_position_error", det.validation.mean_position_error},
                       {"evaluated", det.validation.evaluated}};
  nn::write_json_file(doc, path);
}

GridDetector load_detector(const std::filesystem::path& path) {
  const json doc = nn::read_json_file(path);
  if (!doc.contains("num_classes") || !doc.contains("grid")) {
    throw CheckpointError(path.string() + " is not a detector checkpoint");
  }
  GridDetector det(nn::network_from_json(doc), doc.at("grid").get<std::size_t>(),
                   doc.at("num_classes").get<std::size_t>());
  const auto probe = det.network().predict(nn::Tensor({1, 3, sim::kImageSize, sim::kImageSize}));
  if (probe.shape() != nn::Shape{1, 1 + det.num_classes() + 2, det.grid(), det.grid()}) {
    throw CheckpointError(path.string() + ": network output does not match the declared grid and classes");
  }
  if (doc.contains("validation")) {
    const auto& v = doc.at("validation");
    det.validation = {v.value("class_accuracy", 0.0), v.value("mean_position_error", 0.0),
                      v.value("evaluated", std::size_t{0})};
  }
  return det;
}

}  // namespace vla::perception
