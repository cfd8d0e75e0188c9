#include <csignal>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vla/cae/cae.hpp"
#include "vla/errors.hpp"
#include "vla/experiments/experiments.hpp"
#include "vla/perception/detector.hpp"
#include "vla/service/server.hpp"
#include "vla/service/session.hpp"
#include "vla/sim/io.hpp"
#include "vla/teleop/teleop.hpp"

namespace {

using namespace vla;
namespace fs = std::filesystem;

service::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::vector<int> all_classes() {
  std::vector<int> c(experiments::kNumClasses);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = static_cast<int>(i);
  return c;
}

struct DetectorArgs {
  fs::path out = "detector.json";
  fs::path dataset;
  std::size_t train = 1000;
  std::size_t val = 100;
  std::uint64_t seed = 1;
  perception::DetectorConfig config;
};

int train_detector(const DetectorArgs& a) {
  std::mt19937_64 rng(a.seed);
  std::vector<perception::LabeledImage> train, val;
  if (!a.dataset.empty()) {
    auto data = perception::load_detector_dataset(a.dataset);
    if (data.size() <= a.val) throw ConfigError("dataset smaller than the validation split");
    val.assign(data.end() - static_cast<std::ptrdiff_t>(a.val), data.end());
    data.resize(data.size() - a.val);
    train = std::move(data);
  } else {
    train = perception::generate_detector_dataset(rng, a.train, all_classes());
    val = perception::generate_detector_dataset(rng, a.val, all_classes());
  }
  auto cfg = a.config;
  cfg.seed = a.seed;
  const auto det = perception::train_detector(train, val, cfg);
  perception::save_detector(det, a.out);
  std::cout << "class_accuracy " << det.validation.class_accuracy << " mean_position_error "
            << det.validation.mean_position_error << " evaluated " << det.validation.evaluated << '\n';
  return 0;
}

struct DatasetArgs {
  fs::path out = "detector_data.jsonl";
  std::size_t count = 1100;
  std::uint64_t seed = 1;
};

int gen_dataset(const DatasetArgs& a) {
  std::mt19937_64 rng(a.seed);
  perception::save_detector_dataset(perception::generate_detector_dataset(rng, a.count, all_classes()), a.out);
  return 0;
}

struct DemoArgs {
  fs::path out = "demos.jsonl";
  std::vector<int> classes{0, 1, 2, 3};
  std::vector<std::string> tasks;
  std::size_t per_object = 10;
  std::uint64_t seed = 1;
};

int gen_demos(DemoArgs a) {
  if (a.tasks.empty()) {
    for (int c : a.classes) a.tasks.push_back(experiments::base_task(c));
  }
  std::mt19937_64 rng(a.seed);
  const auto demos = experiments::demo_pool(a.classes, a.tasks, a.per_object, rng);
  sim::save_demonstrations(demos, a.out);
  std::cout << demos.size() << " demonstrations written to " << a.out << '\n';
  return 0;
}

struct TrainArgs {
  fs::path demos;
  std::string strategy;
  fs::path detector;
  fs::path out = "model.json";
  std::uint64_t seed = 0;
  cae::TrainConfig config;
  double sigma_pos = 0.0;
  double p_mis = 0.0;
};

int train_cae(const TrainArgs& a) {
  const auto strategy = perception::strategy_from_string(a.strategy);
  std::optional<perception::GridDetector> det;
  if (!a.detector.empty()) det = perception::load_detector(a.detector);
  if (strategy == perception::Strategy::Structured && !det) throw ConfigError("Structured needs --detector");
  cae::PairContext pc;
  pc.strategy = strategy;
  pc.num_classes = experiments::kNumClasses;
  pc.detector = det ? &*det : nullptr;
  pc.noise = {a.sigma_pos, a.p_mis};
  pc.noise_seed = a.seed;
  pc.skip_undetected = true;
  const auto data = cae::build_pairs(sim::load_demonstrations(a.demos), pc, a.config.window);
  if (data.skipped_demos > 0) std::cerr << data.skipped_demos << " demonstrations skipped: nothing detected\n";
  auto cfg = a.config;
  cfg.seed = a.seed;
  const auto model = cae::train_cae(data, cfg);
  cae::save_model(model, a.out);
  std::cout << "pairs " << data.pairs.size() << " steps " << model.steps << " final_loss " << model.final_loss
            << '\n';
  return 0;
}

struct EvalArgs {
  fs::path model;
  std::string strategy;
  std::string task;
  int target_class = -1;
  fs::path detector;
  std::size_t scenes = 10;
  std::uint64_t seed = 3;
  std::size_t demos_used = 0;
  fs::path out = "results.csv";
};

int eval(const EvalArgs& a) {
  const auto strategy = perception::strategy_from_string(a.strategy);
  const auto model = cae::load_model(a.model, strategy);
  std::optional<perception::GridDetector> det;
  if (!a.detector.empty()) det = perception::load_detector(a.detector);
  if (strategy == perception::Strategy::Structured && !det) throw ConfigError("Structured needs --detector");
  const int cls = a.target_class >= 0 ? a.target_class : service::default_class_for_task(a.task);
  std::mt19937_64 rng(a.seed);
  const auto scenes = experiments::validation_scenes({cls}, {a.task}, a.scenes, rng);
  std::vector<teleop::ResultRow> rows;
  std::size_t wins = 0;
  double err = 0.0;
  for (const auto& sc : scenes) {
    const auto ctx = model.perception_context(sc.task.target_class, det ? &*det : nullptr);
    const auto r = teleop::run_sim_teleop(sc.world, sc.task, model, ctx, sc.plan, teleop::kEpisodeLimit,
                                          experiments::derive_seed(a.seed, {sc.id}));
    rows.push_back({sc.id, sc.task.name, a.strategy, a.demos_used, r.success, r.final_state_error, r.steps});
    wins += r.success ? 1 : 0;
    err += r.final_state_error;
  }
  teleop::write_results_csv(rows, a.out);
  std::cout << "success " << wins << "/" << rows.size() << " mean_final_state_error "
            << err / static_cast<double>(rows.size()) << '\n';
  return 0;
}

std::optional<perception::GridDetector> load_optional_detector(const fs::path& p) {
  if (p.empty()) return std::nullopt;
  return perception::load_detector(p);
}

int sample_efficiency(const fs::path& config, const fs::path& out) {
  const auto cfg = experiments::load_sweep_config(config);
  const auto det = load_optional_detector(cfg.detector);
  const auto result = experiments::run_sample_efficiency(cfg, det ? &*det : nullptr);
  experiments::export_report(result, out, "Final state error vs demonstrations per object");
  std::cout << experiments::curve_csv(result.points);
  return 0;
}

int fewshot(const std::string& setting, const fs::path& config, const fs::path& out) {
  auto cfg = experiments::load_fewshot_config(config);
  cfg.setting = experiments::setting_from_string(setting);
  cfg.validate();
  const auto det = load_optional_detector(cfg.detector);
  const auto result = experiments::run_fewshot(cfg, det ? &*det : nullptr);
  experiments::export_report(result, out, "Few-shot " + setting + ": final state error vs unseen demonstrations");
  std::cout << experiments::curve_csv(result.points);
  return 0;
}

int serve(const service::ServerConfig& cfg) {
  service::Server server(cfg);
  const auto port = server.start();
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "listening on ws://" << cfg.address << ":" << port << std::endl;
  server.run();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-action teleoperation toolkit"};
  app.require_subcommand(1);

  DatasetArgs ds;
  auto* c_ds = app.add_subcommand("gen-dataset", "Render labelled single-object images for the detector");
  c_ds->add_option("--out", ds.out);
  c_ds->add_option("--count", ds.count)->check(CLI::PositiveNumber);
  c_ds->add_option("--seed", ds.seed);

  DetectorArgs da;
  auto* c_det = app.add_subcommand("train-detector", "Train the grid object detector");
  c_det->add_option("--out", da.out);
  c_det->add_option("--dataset", da.dataset, "labelled renders; the last --val images are held out")
      ->check(CLI::ExistingFile);
  c_det->add_option("--train", da.train, "generated training images")->check(CLI::PositiveNumber);
  c_det->add_option("--val", da.val, "held-out images")->check(CLI::PositiveNumber);
  c_det->add_option("--epochs", da.config.epochs)->check(CLI::PositiveNumber);
  c_det->add_option("--lr", da.config.learning_rate);
  c_det->add_option("--seed", da.seed);

  DemoArgs dm;
  auto* c_demo = app.add_subcommand("gen-demos", "Record scripted demonstrations");
  c_demo->add_option("--out", dm.out);
  c_demo->add_option("--classes", dm.classes)->delimiter(',');
  c_demo->add_option("--tasks", dm.tasks, "one task per class (default: the base task of each class)")
      ->delimiter(',');
  c_demo->add_option("--per-object", dm.per_object)->check(CLI::PositiveNumber);
  c_demo->add_option("--seed", dm.seed);

  TrainArgs ta;
  auto* c_train = app.add_subcommand("train-cae", "Train a latent-action autoencoder");
  c_train->add_option("--demos", ta.demos)->required()->check(CLI::ExistingFile);
  c_train->add_option("--strategy", ta.strategy)->required();
  c_train->add_option("--detector", ta.detector)->check(CLI::ExistingFile);
  c_train->add_option("--out", ta.out);
  c_train->add_option("--seed", ta.seed);
  c_train->add_option("--epochs", ta.config.epochs);
  c_train->add_option("--max-steps", ta.config.max_steps);
  c_train->add_option("--lr", ta.config.learning_rate);
  c_train->add_option("--sigma", ta.config.sigma, "state augmentation noise");
  c_train->add_option("--window", ta.config.window);
  c_train->add_option("--oracle-sigma", ta.sigma_pos, "Oracle position noise, metres");
  c_train->add_option("--oracle-pmis", ta.p_mis, "Oracle misclassification probability");

  EvalArgs ea;
  auto* c_eval = app.add_subcommand("eval", "Run the simulated teleoperator on fresh scenes");
  c_eval->add_option("--model", ea.model)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--strategy", ea.strategy)->required();
  c_eval->add_option("--task", ea.task)->required();
  c_eval->add_option("--class", ea.target_class, "target class (default: the class demonstrated on this task)");
  c_eval->add_option("--detector", ea.detector)->check(CLI::ExistingFile);
  c_eval->add_option("--scenes", ea.scenes)->check(CLI::PositiveNumber);
  c_eval->add_option("--seed", ea.seed);
  c_eval->add_option("--demos-used", ea.demos_used, "recorded in the demos_used column");
  c_eval->add_option("--out", ea.out);

  auto* c_exp = app.add_subcommand("experiment", "Run an experiment sweep");
  c_exp->require_subcommand(1);
  fs::path se_config, se_out = "sample_efficiency";
  auto* c_se = c_exp->add_subcommand("sample-efficiency", "Final state error vs demonstrations per object");
  c_se->add_option("--config", se_config)->required()->check(CLI::ExistingFile);
  c_se->add_option("--out", se_out, "output directory");
  std::string fs_setting;
  fs::path fs_config, fs_out;
  auto* c_fs = c_exp->add_subcommand("fewshot", "Transfer vs scratch on an unseen object");
  c_fs->add_option("--setting", fs_setting)->required()->check(CLI::IsMember({"seen", "near", "far"}));
  c_fs->add_option("--config", fs_config)->required()->check(CLI::ExistingFile);
  c_fs->add_option("--out", fs_out, "output directory (default: fewshot_<setting>)");

  service::ServerConfig sc;
  auto* c_serve = app.add_subcommand("serve", "Serve teleoperation sessions over WebSocket");
  c_serve->add_option("--models", sc.models, "directory of <name>.json models and detector.json")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_serve->add_option("--address", sc.address);
  c_serve->add_option("--port", sc.port);
  c_serve->add_option("--tick-ms", sc.tick_ms)->check(CLI::PositiveNumber);
  c_serve->add_flag("--lockstep", sc.lockstep, "advance one step per axis_input instead of on a timer");
  c_serve->add_option("--limit", sc.limit)->check(CLI::PositiveNumber);
  c_serve->add_option("--log", sc.log, "trial outcome log (JSON lines)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_ds) return gen_dataset(ds);
    if (*c_det) return train_detector(da);
    if (*c_demo) return gen_demos(dm);
    if (*c_train) return train_cae(ta);
    if (*c_eval) return eval(ea);
    if (*c_se) return sample_efficiency(se_config, se_out);
    if (*c_fs) return fewshot(fs_setting, fs_config, fs_out.empty() ? fs::path("fewshot_" + fs_setting) : fs_out);
    if (*c_serve) return serve(sc);
  } catch (const vla::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
