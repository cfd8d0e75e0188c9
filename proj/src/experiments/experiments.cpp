#include "vla/experiments/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "vla/errors.hpp"
#include "vla/perception/detector.hpp"

namespace vla::experiments {

using nlohmann::json;

std::string base_task(int class_id) {
  static const char* tasks[] = {"east", "south", "south-west", "west"};
  if (class_id < 0 || class_id > 3) throw ConfigError("class " + std::to_string(class_id) + " has no base task");
  return tasks[class_id];
}

std::string to_string(FewShotSetting s) {
  switch (s) {
    case FewShotSetting::Seen: return "seen";
    case FewShotSetting::Near: return "near";
    case FewShotSetting::Far: return "far";
  }
  return "seen";
}

FewShotSetting setting_from_string(const std::string& name) {
  if (name == "seen") return FewShotSetting::Seen;
  if (name == "near") return FewShotSetting::Near;
  if (name == "far") return FewShotSetting::Far;
  throw ConfigError("unknown few-shot setting '" + name + "' (seen, near, far)");
}

std::string setting_task(FewShotSetting s) {
  switch (s) {
    case FewShotSetting::Seen: return "south";
    case FewShotSetting::Near: return "south-east";
    case FewShotSetting::Far: return "circle";
  }
  return "south";
}

namespace {

void check_schedule(const std::vector<std::size_t>& schedule, std::size_t max_n) {
  if (schedule.empty()) throw ConfigError("demo schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i] == 0 || schedule[i] > max_n) {
      throw ConfigError("schedule entries must lie in 1.." + std::to_string(max_n));
    }
    if (i > 0 && schedule[i] <= schedule[i - 1]) throw ConfigError("schedule must be strictly increasing");
  }
}

void check_classes(const std::vector<int>& classes) {
  if (classes.empty()) throw ConfigError("no base classes");
  for (int c : classes) base_task(c);
}

std::vector<std::string> base_tasks(const std::vector<int>& classes) {
  std::vector<std::string> t;
  for (int c : classes) t.push_back(base_task(c));
  return t;
}

}  // namespace

void SweepConfig::validate() const {
  if (strategies.empty()) throw ConfigError("no strategies requested");
  check_classes(base_classes);
  check_schedule(schedule, 1000);
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (validation_per_object < 1) throw ConfigError("need at least one validation scene per object");
  if (pool_per_object != 0 && pool_per_object < *std::max_element(schedule.begin(), schedule.end())) {
    throw ConfigError("demonstration pool is smaller than the schedule");
  }
}

std::size_t SweepConfig::pool_size() const {
  return pool_per_object != 0 ? pool_per_object : *std::max_element(schedule.begin(), schedule.end());
}

void FewShotConfig::validate() const {
  check_classes(base_classes);
  if (std::find(base_classes.begin(), base_classes.end(), unseen_class) != base_classes.end()) {
    throw ConfigError("the unseen class must not be a base class");
  }
  if (unseen_class < 0 || static_cast<std::size_t>(unseen_class) >= kNumClasses) {
    throw ConfigError("unseen class out of range");
  }
  check_schedule(schedule, 5);
  if (unseen_pool < schedule.back()) throw ConfigError("unseen pool smaller than the largest schedule entry");
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (validation_scenes < 1) throw ConfigError("need at least one validation scene");
}

std::vector<std::size_t> sample_subset(std::size_t pool_size, std::size_t n, std::mt19937_64& rng) {
  if (n > pool_size) throw ConfigError("cannot draw " + std::to_string(n) + " of " + std::to_string(pool_size));
  std::vector<std::size_t> idx(pool_size);
  std::iota(idx.begin(), idx.end(), 0);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool_size - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  return idx;
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32)};
  for (auto k : keys) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<sim::Demonstration> demo_pool(const std::vector<int>& classes, const std::vector<std::string>& tasks,
                                          std::size_t per_object, std::mt19937_64& rng) {
  if (classes.size() != tasks.size()) throw ConfigError("one task per class is required");
  std::vector<sim::Demonstration> pool;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto task = sim::make_task(classes[c], tasks[c]);
    for (std::size_t k = 0; k < per_object; ++k) {
      for (int attempt = 0;; ++attempt) {
        const auto scene = sim::sample_scene(rng, {classes[c]}, sim::task_scene_options());
        try {
          pool.push_back(sim::scripted_demo(scene, task, rng));
          break;
        } catch (const DemoError&) {
          if (attempt == 20) throw;
        }
      }
    }
  }
  return pool;
}

std::vector<EvalScene> validation_scenes(const std::vector<int>& classes, const std::vector<std::string>& tasks,
                                         std::size_t per_object, std::mt19937_64& rng) {
  if (classes.size() != tasks.size()) throw ConfigError("one task per class is required");
  std::vector<EvalScene> scenes;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto task = sim::make_task(classes[c], tasks[c]);
    for (std::size_t k = 0; k < per_object; ++k) {
      for (int attempt = 0;; ++attempt) {
        auto world = sim::sample_scene(rng, {classes[c]}, sim::task_scene_options());
        try {
          auto plan = teleop::plan_for_scene(world, task);
          scenes.push_back({scenes.size(), std::move(world), task, std::move(plan)});
          break;
        } catch (const DemoError&) {
          if (attempt == 20) throw;
        }
      }
    }
  }
  return scenes;
}

CellOutcome train_and_evaluate(const std::vector<sim::Demonstration>& demos, Strategy strategy,
                               const cae::TrainConfig& train, const perception::GridDetector* detector,
                               const perception::NoiseConfig& oracle_noise, const std::vector<EvalScene>& scenes,
                               std::uint64_t eval_seed) {
  if (strategy == Strategy::Structured && !detector) throw ConfigError("Structured strategy needs a detector");
  cae::PairContext pc;
  pc.strategy = strategy;
  pc.num_classes = kNumClasses;
  pc.detector = detector;
  pc.noise = oracle_noise;
  pc.skip_undetected = true;
  pc.noise_seed = derive_seed(train.seed, {0x6e6f6973});
  const auto data = cae::build_pairs(demos, pc, train.window);
  const auto model = cae::train_cae(data, train);

  CellOutcome out;
  double err = 0.0, succ = 0.0;
  for (const auto& sc : scenes) {
    auto ctx = model.perception_context(sc.task.target_class, detector);
    ctx.noise = oracle_noise;
    auto r = teleop::run_sim_teleop(sc.world, sc.task, model, ctx, sc.plan, teleop::kEpisodeLimit,
                                    derive_seed(eval_seed, {sc.id}));
    err += r.final_state_error;
    succ += r.success ? 1.0 : 0.0;
    out.episodes.push_back(std::move(r));
  }
  out.mean_error = err / static_cast<double>(scenes.size());
  out.success_rate = succ / static_cast<double>(scenes.size());
  return out;
}

CurvePoint aggregate(const std::string& series, std::size_t demos, std::vector<double> run_errors,
                     std::vector<double> run_success) {
  if (run_errors.empty() || run_errors.size() != run_success.size()) throw ConfigError("nothing to aggregate");
  CurvePoint p;
  p.series = series;
  p.demos = demos;
  const double n = static_cast<double>(run_errors.size());
  p.mean_error = std::accumulate(run_errors.begin(), run_errors.end(), 0.0) / n;
  p.success_rate = std::accumulate(run_success.begin(), run_success.end(), 0.0) / n;
  if (run_errors.size() > 1) {
    double ss = 0.0;
    for (double e : run_errors) ss += (e - p.mean_error) * (e - p.mean_error);
    p.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  p.run_errors = std::move(run_errors);
  p.run_success = std::move(run_success);
  return p;
}

namespace {

void record_episodes(ExperimentResult& res, const std::string& series, std::size_t n, std::size_t run,
                     const std::vector<EvalScene>& scenes, const CellOutcome& cell) {
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& r = cell.episodes[i];
    res.episodes.push_back({series, n, run,
                            teleop::ResultRow{scenes[i].id, scenes[i].task.name, series, n, r.success,
                                              r.final_state_error, r.steps}});
  }
}

}  // namespace

ExperimentResult run_sample_efficiency(const SweepConfig& cfg, const perception::GridDetector* detector) {
  cfg.validate();
  for (auto s : cfg.strategies) {
    if (s == Strategy::Structured && !detector) throw ConfigError("Structured strategy needs a detector checkpoint");
  }
  const auto tasks = base_tasks(cfg.base_classes);
  const std::size_t per_object = cfg.pool_size();
  std::mt19937_64 demo_rng(cfg.demo_seed);
  const auto pool = demo_pool(cfg.base_classes, tasks, per_object, demo_rng);
  std::mt19937_64 eval_rng(cfg.eval_seed);
  const auto scenes = validation_scenes(cfg.base_classes, tasks, cfg.validation_per_object, eval_rng);

  ExperimentResult res;
  for (auto strategy : cfg.strategies) {
    const std::string series = perception::to_string(strategy);
    for (std::size_t n : cfg.schedule) {
      std::vector<double> errs, succ;
      for (std::size_t run = 0; run < cfg.runs; ++run) {
        // The subset stream depends only on (subset_seed, n, run): every
        // strategy trains on the same demos and the eval seed never leaks in.
        std::mt19937_64 subset_rng(derive_seed(cfg.subset_seed, {n, run}));
        std::vector<sim::Demonstration> demos;
        std::vector<std::size_t> chosen;
        for (std::size_t c = 0; c < cfg.base_classes.size(); ++c) {
          for (auto k : sample_subset(per_object, n, subset_rng)) {
            chosen.push_back(c * per_object + k);
            demos.push_back(pool[c * per_object + k]);
          }
        }
        res.subsets.push_back(chosen);
        auto train = cfg.train;
        train.seed = derive_seed(cfg.train.seed, {n, run});
        const auto cell = train_and_evaluate(demos, strategy, train, detector, cfg.oracle_noise, scenes,
                                             derive_seed(cfg.eval_seed, {n, run}));
        errs.push_back(cell.mean_error);
        succ.push_back(cell.success_rate);
        record_episodes(res, series, n, run, scenes, cell);
      }
      res.points.push_back(aggregate(series, n, std::move(errs), std::move(succ)));
    }
  }
  return res;
}

ExperimentResult run_fewshot(const FewShotConfig& cfg, const perception::GridDetector* detector) {
  cfg.validate();
  if (cfg.strategy == Strategy::Structured && !detector) {
    throw ConfigError("Structured strategy needs a detector checkpoint");
  }
  const auto tasks = base_tasks(cfg.base_classes);
  const std::string unseen_task = setting_task(cfg.setting);
  const std::size_t few_pool = cfg.unseen_pool;
  std::mt19937_64 demo_rng(cfg.demo_seed);
  const auto base = demo_pool(cfg.base_classes, tasks, cfg.base_per_object, demo_rng);
  const auto unseen = demo_pool({cfg.unseen_class}, {unseen_task}, few_pool, demo_rng);
  std::mt19937_64 eval_rng(cfg.eval_seed);
  const auto scenes = validation_scenes({cfg.unseen_class}, {unseen_task}, cfg.validation_scenes, eval_rng);

  ExperimentResult res;
  for (const std::string variant : {"transfer", "scratch"}) {
    for (std::size_t n : cfg.schedule) {
      std::vector<double> errs, succ;
      for (std::size_t run = 0; run < cfg.runs; ++run) {
        std::mt19937_64 subset_rng(derive_seed(cfg.subset_seed, {n, run}));
        const auto chosen = sample_subset(few_pool, n, subset_rng);
        res.subsets.push_back(chosen);
        std::vector<sim::Demonstration> demos;
        if (variant == "transfer") demos = base;
        for (auto k : chosen) demos.push_back(unseen[k]);
        auto train = cfg.train;
        train.seed = derive_seed(cfg.train.seed, {n, run});
        const auto cell = train_and_evaluate(demos, cfg.strategy, train, detector, cfg.oracle_noise, scenes,
                                             derive_seed(cfg.eval_seed, {n, run}));
        errs.push_back(cell.mean_error);
        succ.push_back(cell.success_rate);
        record_episodes(res, variant, n, run, scenes, cell);
      }
      res.points.push_back(aggregate(variant, n, std::move(errs), std::move(succ)));
    }
  }
  return res;
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "series,demos,mean_final_state_error,std_error,success_rate,runs\n";
  for (const auto& p : points) {
    out << p.series << ',' << p.demos << ',' << p.mean_error << ',' << p.std_error << ',' << p.success_rate << ','
        << p.run_errors.size() << '\n';
  }
  return out.str();
}

std::string curve_svg(const std::vector<CurvePoint>& points, const std::string& title) {
  if (points.empty()) throw ConfigError("no curve points to plot");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const CurvePoint*>> series;
  double x_min = 1e300, x_max = -1e300, y_max = 0.0;
  for (const auto& p : points) {
    if (!series.count(p.series)) order.push_back(p.series);
    series[p.series].push_back(&p);
    x_min = std::min(x_min, static_cast<double>(p.demos));
    x_max = std::max(x_max, static_cast<double>(p.demos));
    y_max = std::max(y_max, p.mean_error + p.std_error);
  }
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.1;
  const double w = 640, h = 400, left = 70, right = 170, top = 40, bottom = 50;
  const double pw = w - left - right, ph = h - top - bottom;
  auto sx = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  auto sy = [&](double y) { return top + ph - y / y_max * ph; };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#7f7f7f", "#2ca02c", "#d62728", "#9467bd"};

  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
    << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = y_max * i / 5.0;
    s << "<text x=\"" << left - 6 << "\" y=\"" << sy(y) + 4 << "\" text-anchor=\"end\">" << std::setprecision(3) << y
      << std::setprecision(2) << "</text>\n";
  }
  std::vector<double> xs;
  for (const auto& p : points) xs.push_back(static_cast<double>(p.demos));
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs) {
    s << "<text x=\"" << sx(x) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << static_cast<int>(x)
      << "</text>\n";
  }
  s << "<text x=\"" << left + pw / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">demonstrations</text>\n";
  s << "<text x=\"18\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << top + ph / 2 << ")\">final state error</text>\n";
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto pts = series[order[k]];
    std::sort(pts.begin(), pts.end(), [](auto a, auto b) { return a->demos < b->demos; });
    const char* color = colors[k % 6];
    s << "<g class=\"series\" data-series=\"" << order[k] << "\">\n";
    s << "<polygon fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (auto* p : pts) s << sx(static_cast<double>(p->demos)) << ',' << sy(p->mean_error + p->std_error) << ' ';
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) {
      s << sx(static_cast<double>((*it)->demos)) << ',' << sy(std::max(0.0, (*it)->mean_error - (*it)->std_error))
        << ' ';
    }
    s << "\"/>\n<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (auto* p : pts) s << sx(static_cast<double>(p->demos)) << ',' << sy(p->mean_error) << ' ';
    s << "\"/>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(k);
    s << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 40 << "\" y2=\"" << ly
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << left + pw + 45 << "\" y=\"" << ly + 4 << "\">" << order[k] << "</text>\n</g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void export_report(const ExperimentResult& result, const std::filesystem::path& dir, const std::string& title) {
  if (result.points.empty()) throw ConfigError("no curve points to export");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + p.string());
  };
  write(dir / "results.csv", curve_csv(result.points));
  write(dir / "chart.svg", curve_svg(result.points, title));
  std::vector<teleop::ResultRow> rows;
  for (const auto& e : result.episodes) rows.push_back(e.row);
  teleop::write_results_csv(rows, dir / "episodes.csv");
}

namespace {

json read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ConfigError(path.string() + ": config must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void read_train(const json& j, cae::TrainConfig& t) {
  if (!j.contains("train")) return;
  const auto& o = j.at("train");
  t.epochs = o.value("epochs", t.epochs);
  t.batch_size = o.value("batch_size", t.batch_size);
  t.learning_rate = o.value("learning_rate", t.learning_rate);
  t.sigma = o.value("sigma", t.sigma);
  t.window = o.value("window", t.window);
  t.seed = o.value("seed", t.seed);
  t.max_steps = o.value("max_steps", t.max_steps);
  t.demos_per_batch = o.value("demos_per_batch", t.demos_per_batch);
}

void read_noise(const json& j, perception::NoiseConfig& n) {
  if (!j.contains("oracle_noise")) return;
  n.sigma_pos = j.at("oracle_noise").value("sigma_pos", n.sigma_pos);
  n.p_mis = j.at("oracle_noise").value("p_mis", n.p_mis);
}

template <typename T>
T wrap_json(const std::filesystem::path& path, T (*fn)(const json&)) {
  try {
    return fn(read_config(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

SweepConfig sweep_from_json(const json& j) {
  SweepConfig c;
  if (j.contains("strategies")) {
    c.strategies.clear();
    for (const auto& s : j.at("strategies")) c.strategies.push_back(perception::strategy_from_string(s.get<std::string>()));
  }
  c.base_classes = j.value("base_classes", c.base_classes);
  c.schedule = j.value("schedule", c.schedule);
  c.runs = j.value("runs", c.runs);
  c.validation_per_object = j.value("validation_per_object", c.validation_per_object);
  c.pool_per_object = j.value("pool_per_object", c.pool_per_object);
  c.demo_seed = j.value("demo_seed", c.demo_seed);
  c.subset_seed = j.value("subset_seed", c.subset_seed);
  c.eval_seed = j.value("eval_seed", c.eval_seed);
  c.detector = j.value("detector", std::string());
  read_train(j, c.train);
  read_noise(j, c.oracle_noise);
  c.validate();
  return c;
}

FewShotConfig fewshot_from_json(const json& j) {
  FewShotConfig c;
  c.unseen_class = j.value("unseen_class", c.unseen_class);
  if (j.contains("setting")) c.setting = setting_from_string(j.at("setting").get<std::string>());
  if (j.contains("strategy")) c.strategy = perception::strategy_from_string(j.at("strategy").get<std::string>());
  c.base_classes = j.value("base_classes", c.base_classes);
  c.base_per_object = j.value("base_per_object", c.base_per_object);
  c.unseen_pool = j.value("unseen_pool", c.unseen_pool);
  c.schedule = j.value("schedule", c.schedule);
  c.runs = j.value("runs", c.runs);
  c.validation_scenes = j.value("validation_scenes", c.validation_scenes);
  c.demo_seed = j.value("demo_seed", c.demo_seed);
  c.subset_seed = j.value("subset_seed", c.subset_seed);
  c.eval_seed = j.value("eval_seed", c.eval_seed);
  c.detector = j.value("detector", std::string());
  read_train(j, c.train);
  read_noise(j, c.oracle_noise);
  c.validate();
  return c;
}

}  // namespace

SweepConfig load_sweep_config(const std::filesystem::path& path) { return wrap_json(path, &sweep_from_json); }

FewShotConfig load_fewshot_config(const std::filesystem::path& path) { return wrap_json(path, &fewshot_from_json); }

}  // namespace vla::experiments
