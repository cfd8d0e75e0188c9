#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vla/cae/cae.hpp"
#include "vla/teleop/teleop.hpp"

namespace vla::experiments {

using perception::Strategy;

// Class ids 0..3 are the base objects; 4 is held out for few-shot transfer.
inline const std::vector<std::string> kClassNames{"spam", "cup", "animal", "cube", "cereal"};
inline constexpr std::size_t kNumClasses = 5;
inline constexpr int kUnseenClass = 4;

// Base task of each base class.
std::string base_task(int class_id);

enum class FewShotSetting { Seen, Near, Far };
std::string to_string(FewShotSetting s);
FewShotSetting setting_from_string(const std::string& name);  // throws ConfigError
std::string setting_task(FewShotSetting s);                      // south, south-east, circle

struct SweepConfig {
  std::vector<Strategy> strategies{Strategy::EndToEnd, Strategy::LocalizationOnly, Strategy::Structured};
  std::vector<int> base_classes{0, 1, 2, 3};
  std::vector<std::size_t> schedule{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::size_t runs = 10;
  std::size_t validation_per_object = 10;
  std::size_t pool_per_object = 0;    // demonstration pool size; 0 means the largest schedule entry
  std::uint64_t demo_seed = 1;        // demonstration pool
  std::uint64_t subset_seed = 2;      // which demos each run trains on
  std::uint64_t eval_seed = 3;        // validation scenes and perception noise
  cae::TrainConfig train;
  perception::NoiseConfig oracle_noise;
  std::filesystem::path detector;     // required for Structured

  void validate() const;  // throws ConfigError
  std::size_t pool_size() const;
};

struct FewShotConfig {
  int unseen_class = kUnseenClass;
  FewShotSetting setting = FewShotSetting::Seen;
  Strategy strategy = Strategy::Structured;
  std::vector<int> base_classes{0, 1, 2, 3};
  std::size_t base_per_object = 10;
  std::size_t unseen_pool = 10;  // few-shot demos are drawn from this many
  std::vector<std::size_t> schedule{1, 2, 3, 4, 5};
  std::size_t runs = 10;
  std::size_t validation_scenes = 10;
  std::uint64_t demo_seed = 1;
  std::uint64_t subset_seed = 2;
  std::uint64_t eval_seed = 3;
  cae::TrainConfig train;
  perception::NoiseConfig oracle_noise;
  std::filesystem::path detector;

  void validate() const;
};

/// One (series, demos) cell, aggregated over runs: mean of the per-run mean
/// final-state errors and its standard error (sample std / sqrt(runs)).
struct CurvePoint {
  std::string series;
  std::size_t demos = 0;
  double mean_error = 0.0;
  double std_error = 0.0;
  double success_rate = 0.0;
  std::vector<double> run_errors;   // per-run mean final-state error
  std::vector<double> run_success;  // per-run success rate
};

struct EpisodeRecord {
  std::string series;
  std::size_t demos = 0;
  std::size_t run = 0;
  teleop::ResultRow row;
};

struct ExperimentResult {
  std::vector<CurvePoint> points;
  std::vector<EpisodeRecord> episodes;
  std::vector<std::vector<std::size_t>> subsets;  // training demo indices, one entry per (series, n, run) cell
};

/// Validation scene with its waypoint plan.
struct EvalScene {
  std::size_t id = 0;
  sim::WorldState world;
  sim::Task task;
  teleop::WaypointPlan plan;
};

// n distinct indices from [0, pool_size), drawn without replacement.
std::vector<std::size_t> sample_subset(std::size_t pool_size, std::size_t n, std::mt19937_64& rng);

// Seed for a sub-stream keyed by integers, so streams never share draws.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys);

/// `per_object` scripted demonstrations per class of its task, drawn from
/// task scenes. Throws DemoError if the demonstrator fails repeatedly.
std::vector<sim::Demonstration> demo_pool(const std::vector<int>& classes, const std::vector<std::string>& tasks,
                                          std::size_t per_object, std::mt19937_64& rng);

std::vector<EvalScene> validation_scenes(const std::vector<int>& classes, const std::vector<std::string>& tasks,
                                         std::size_t per_object, std::mt19937_64& rng);

/// Trains one CAE of `strategy` on `demos` and evaluates it on `scenes`.
struct CellOutcome {
  double mean_error = 0.0;
  double success_rate = 0.0;
  std::vector<teleop::EpisodeResult> episodes;
};
CellOutcome train_and_evaluate(const std::vector<sim::Demonstration>& demos, Strategy strategy,
                               const cae::TrainConfig& train, const perception::GridDetector* detector,
                               const perception::NoiseConfig& oracle_noise, const std::vector<EvalScene>& scenes,
                               std::uint64_t eval_seed);

/// Sample-efficiency sweep. `detector` must be non-null when Structured is
/// requested (ConfigError otherwise).
ExperimentResult run_sample_efficiency(const SweepConfig& cfg, const perception::GridDetector* detector);

/// Few-shot transfer (base pool + few-shot demos) versus scratch (few-shot
/// demos only) on the unseen class.
ExperimentResult run_fewshot(const FewShotConfig& cfg, const perception::GridDetector* detector);

CurvePoint aggregate(const std::string& series, std::size_t demos, std::vector<double> run_errors,
                     std::vector<double> run_success);

/// Writes <dir>/results.csv (one row per point), <dir>/episodes.csv and
/// <dir>/chart.svg. Throws ConfigError for no points, IoError when unwritable.
void export_report(const ExperimentResult& result, const std::filesystem::path& dir, const std::string& title);

std::string curve_csv(const std::vector<CurvePoint>& points);
std::string curve_svg(const std::vector<CurvePoint>& points, const std::string& title);

// Config files are JSON objects; absent keys keep their defaults.
SweepConfig load_sweep_config(const std::filesystem::path& path);
FewShotConfig load_fewshot_config(const std::filesystem::path& path);

}  // namespace vla::experiments
