// Command-line front end: train models, sample, run the full benchmark grid,
// dump landscape diagnostics, and summarize a finished run.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "carflow/config.hpp"
#include "carflow/errors.hpp"
#include "carflow/experiment.hpp"
#include "carflow/landscape.hpp"
#include "carflow/metrics.hpp"
#include "carflow/svg.hpp"
#include "carflow/value.hpp"

namespace fs = std::filesystem;
using namespace carflow;

namespace {

void print_rows(const std::vector<MetricsRow>& rows) {
  std::cout << std::left << std::setw(9) << "method" << std::setw(12) << "constraint"
            << std::right << std::setw(8) << "pc" << std::setw(9) << "cs" << std::setw(8) << "n"
            << std::setw(6) << "seed" << std::setw(10) << "ms/sample" << std::setw(12)
            << "data_usage" << '\n';
  for (const MetricsRow& r : rows) {
    std::cout << std::left << std::setw(9) << r.method << std::setw(12) << r.constraint
              << std::right << std::fixed << std::setprecision(2) << std::setw(8) << r.pc
              << std::setw(9) << r.cs << std::setw(8) << r.n << std::setw(6) << r.seed
              << std::setprecision(3) << std::setw(10) << r.time_ms_per_sample << std::setw(12)
              << r.data_usage << '\n';
    std::cout.unsetf(std::ios::fixed);
  }
}

std::vector<MetricsRow> rows_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::vector<MetricsRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(metrics_row_from_csv(line));
  return rows;
}

void write_rounds_csv(const std::vector<RoundLog>& rounds, const std::string& path) {
  std::ofstream out(path);
  out << "round,conflict_fraction,loss,trajectories_consumed\n";
  for (const RoundLog& r : rounds)
    out << r.round << ',' << r.conflict_fraction << ',' << r.loss << ','
        << r.trajectories_consumed << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guided sampling benchmark for 2d flow models under composite rewards"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "override the config's seed list");
  app.add_option("--config", config_path, "config json (defaults to the built-in benchmark)");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();

  auto load = [&]() {
    ExperimentConfig cfg =
        config_path.empty() ? default_experiment_config() : load_config(config_path);
    if (seed_opt->count() > 0) cfg.eval.seeds = {seed};
    return cfg;
  };
  auto first_seed = [&](const ExperimentConfig& cfg) { return cfg.eval.seeds.front(); };

  // ---- train-flow
  CLI::App* tf = app.add_subcommand("train-flow", "train the velocity field");
  tf->callback([&] {
    const ExperimentConfig cfg = load();
    FlowTrainConfig fc = cfg.flow;
    fc.seed = first_seed(cfg);
    const FlowTrainResult res = train_flow(cfg.gm, fc);
    fs::create_directories(out_dir);
    save_checkpoint(velocity_checkpoint(res, fc), out_dir + "/flow.json");
    std::ofstream curve(out_dir + "/flow_curve.csv");
    curve << "step,loss\n";
    for (const CurvePoint& p : res.curve) curve << p.step << ',' << p.loss << '\n';
    std::cout << "final loss " << res.final_loss << ", grid rmse "
              << flow_grid_rmse(res.field, cfg.gm) << "\nwrote " << out_dir << "/flow.json\n";
  });

  // ---- train-guidance
  CLI::App* tg = app.add_subcommand("train-guidance", "fit the value net for conflict routing");
  std::string tg_flow, tg_target = "10";
  tg->add_option("--flow", tg_flow, "velocity checkpoint")->required();
  tg->add_option("--target", tg_target, "constraint string, e.g. 10 or 1x");
  tg->callback([&] {
    const ExperimentConfig cfg = load();
    const VelocityField field = velocity_from_checkpoint(load_checkpoint(tg_flow));
    const ConstraintTarget target = parse_target(tg_target);
    const RewardSet rewards =
        classifier_reward_set(cfg.gm, cfg.labels, target, cfg.eval.reward_weight);
    GuidanceConfig gcfg = cfg.guidance;
    gcfg.engine = Engine::kCar;
    GuidanceTrainConfig vc = cfg.value;
    vc.seed = first_seed(cfg);
    const GuidanceTrainResult res = train_guidance(velocity_fn(field), rewards, gcfg, vc);
    fs::create_directories(out_dir);
    const std::string name = target_name(target);
    save_checkpoint(value_checkpoint(res, gcfg), out_dir + "/value_" + name + ".json");
    write_rounds_csv(res.rounds, out_dir + "/value_" + name + "_rounds.csv");
    std::cout << "rounds " << res.rounds.size() << ", converged "
              << (res.converged ? "yes" : "no") << ", trajectories " << res.trajectories_used;
    if (!res.rounds.empty())
      std::cout << ", conflict fraction " << res.rounds.front().conflict_fraction << " -> "
                << res.rounds.back().conflict_fraction;
    std::cout << "\nwrote " << out_dir << "/value_" << name << ".json\n";
  });

  // ---- sample
  CLI::App* sm = app.add_subcommand("sample", "integrate guided trajectories");
  std::string sm_flow, sm_value, sm_method = "none", sm_target = "10";
  long sm_n = 0;
  double sm_scale = 0.0;
  sm->add_option("--flow", sm_flow, "velocity checkpoint")->required();
  sm->add_option("--value", sm_value, "value checkpoint (needed for car)");
  sm->add_option("--method", sm_method, "none|cov_g|pcgrad|car");
  sm->add_option("--target", sm_target, "constraint string");
  sm->add_option("--n", sm_n, "sample count (default: eval.n_samples)");
  sm->add_option("--scale", sm_scale, "guidance scale override");
  sm->callback([&] {
    const ExperimentConfig cfg = load();
    const VelocityField field = velocity_from_checkpoint(load_checkpoint(sm_flow));
    const Engine engine = engine_from_name(sm_method);
    ConstraintTarget target;
    target.required.assign(static_cast<std::size_t>(cfg.labels.num_classifiers()), -1);
    if (engine != Engine::kNone) target = parse_target(sm_target);
    const RewardSet rewards =
        engine == Engine::kNone
            ? RewardSet{cfg.gm, cfg.labels, {}}
            : classifier_reward_set(cfg.gm, cfg.labels, target, cfg.eval.reward_weight);
    GuidanceConfig gcfg = cfg.guidance;
    gcfg.engine = engine;
    if (sm_scale > 0.0) gcfg.scale = sm_scale;
    ValueFunction value;
    const ValueFunction* vptr = nullptr;
    if (!sm_value.empty()) {
      value = value_from_checkpoint(load_checkpoint(sm_value));
      vptr = &value;
    }
    if (engine == Engine::kCar && vptr == nullptr)
      throw ConfigError("car sampling needs --value");
    SamplerConfig scfg;
    scfg.steps = cfg.eval.sample_steps;
    const long n = sm_n > 0 ? sm_n : cfg.eval.n_samples;
    fs::create_directories(out_dir);
    std::ofstream diag(out_dir + "/diagnostics.csv");
    diag << "idx,step,t,w,delta_e,mean_cos\n";
    const DiagSink sink = [&diag](std::size_t idx, int step, double t,
                                  const StepDiagnostics& d) {
      if (idx >= 256) return;
      diag << idx << ',' << step << ',' << t << ',' << d.w << ',' << d.delta_e << ','
           << d.mean_cos << '\n';
    };
    const SampleReport rep = batch_sample(velocity_fn(field), rewards, gcfg, vptr, scfg,
                                          static_cast<int>(n), first_seed(cfg), sink);
    write_terminals_csv(rep.terminals, out_dir + "/terminals.csv");
    save_text(svg_scatter(rep.terminals, -14.0, 16.0, -14.0, 16.0,
                          sm_method + " " + target_name(target) + " terminals"),
              out_dir + "/terminals.svg");
    std::cout << "samples " << rep.terminals.size() << " (aborted " << rep.aborted << "), pc "
              << metric_pc(rep.terminals, cfg.gm, cfg.labels, target);
    if (target.num_constrained() > 0)
      std::cout << ", cs " << metric_cs(rep.terminals, cfg.gm, cfg.labels, target);
    std::cout << ", mean w " << rep.mean_w << ", misalignment " << rep.misalignment_integral
              << ", " << rep.time_ms_per_sample << " ms/sample\nwrote " << out_dir
              << "/terminals.csv\n";
  });

  // ---- eval
  CLI::App* ev = app.add_subcommand("eval", "run the full method x constraint benchmark");
  ev->callback([&] {
    const ExperimentConfig cfg = load();
    const ExperimentReport rep = run_experiment(cfg, out_dir);
    print_rows(rep.rows);
    for (const auto& [s, rmse] : rep.flow_rmse)
      std::cout << "seed " << s << ": flow grid rmse " << rmse << ", guidance scale "
                << rep.calibration.at(s).scale << '\n';
    if (!rep.failures.empty()) {
      std::cout << rep.failures.size() << " cell(s) failed:\n";
      for (const CellFailure& f : rep.failures)
        std::cout << "  " << f.method << ' ' << f.constraint << " s" << f.seed << " ["
                  << f.stage << "] " << f.error << '\n';
    }
    std::cout << "wrote " << out_dir << "/metrics.csv\n";
  });

  // ---- landscape
  CLI::App* ls = app.add_subcommand("landscape", "export reward/conflict grids for a target");
  std::string ls_target = "10", ls_kind;
  ls->add_option("--target", ls_target, "constraint string");
  ls->add_option("--kind", ls_kind, "energy|conflict_w|delta_e (default: all three)");
  ls->callback([&] {
    const ExperimentConfig cfg = load();
    const ConstraintTarget target = parse_target(ls_target);
    if (target.num_constrained() == 0)
      throw ConfigError("landscape needs at least one constrained classifier");
    const RewardSet rewards =
        classifier_reward_set(cfg.gm, cfg.labels, target, cfg.eval.reward_weight);
    std::vector<GridKind> kinds = {GridKind::kEnergy, GridKind::kConflictW, GridKind::kDeltaE};
    if (!ls_kind.empty()) kinds = {grid_kind_from_name(ls_kind)};
    fs::create_directories(out_dir);
    const std::string name = target_name(target);
    for (GridKind kind : kinds) {
      const Grid grid = landscape_grid(kind, rewards, cfg.guidance, nullptr, nullptr, GridSpec{});
      const std::string stem = out_dir + "/" + name + "_" + grid_kind_name(kind);
      save_grid(grid, stem + ".grid.csv");
      save_text(svg_heatmap(grid, grid_kind_name(kind) + " " + name), stem + ".svg");
      std::cout << "wrote " << stem << ".grid.csv\n";
    }
    const auto minima = find_spurious_minima(rewards, GridSpec{}, MinimaConfig{},
                                             intended_optima(rewards));
    std::cout << minima.size() << " spurious minima";
    for (const Minimum& m : minima)
      std::cout << "  (" << m.x(0) << ", " << m.x(1) << ") energy " << m.energy;
    std::cout << '\n';
  });

  // ---- report
  CLI::App* rp = app.add_subcommand("report", "summarize a finished eval directory");
  rp->callback([&] {
    print_rows(rows_from_file(out_dir + "/metrics.csv"));
    const std::string fpath = out_dir + "/failures.csv";
    if (fs::exists(fpath)) {
      std::ifstream in(fpath);
      std::string line;
      std::getline(in, line);
      std::size_t count = 0;
      while (std::getline(in, line))
        if (!line.empty()) ++count;
      if (count > 0) std::cout << count << " failed cell(s); see " << fpath << '\n';
    }
  });

  try {
    CLI11_PARSE(app, argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
