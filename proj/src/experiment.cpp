#include "carflow/experiment.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "carflow/errors.hpp"
#include "carflow/landscape.hpp"
#include "carflow/metrics.hpp"
#include "carflow/rng.hpp"
#include "carflow/svg.hpp"
#include "carflow/value.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace carflow {

namespace {

using json = nlohmann::json;

constexpr std::size_t kDiagSampleCap = 256;  // diagnostics.csv keeps the first samples only
constexpr const char* kDiagHeader = "idx,step,t,w,delta_e,mean_cos";
constexpr const char* kRoundHeader = "round,conflict_fraction,loss,trajectories_consumed";

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fmt(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\n' && c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{}) throw ConfigError("bad number in csv: " + s);
  return v;
}

ConstraintTarget unconstrained_target(int classifiers) {
  ConstraintTarget t;
  t.required.assign(static_cast<std::size_t>(classifiers), -1);
  return t;
}

struct FilteredGrid {
  std::vector<Eigen::Vector3d> points;  // (x1, x2, t), density-filtered
};

/// t in {0.1..0.9} x 40x40 on [-12,14]^2, keeping per-slice points whose
/// log p_t is within 8 nats of the slice peak. That covers the ~4-sigma tube
/// the transport actually crosses; cells the path marginal never visits
/// carry no training signal and would swamp the RMSE with tail noise.
FilteredGrid rmse_grid(const GaussianMixture& gm) {
  FilteredGrid out;
  constexpr int kN = 40;
  constexpr double kLogWindow = 8.0;
  for (int it = 1; it <= 9; ++it) {
    const double t = 0.1 * it;
    std::vector<double> logp;
    std::vector<Eigen::Vector2d> pts;
    logp.reserve(kN * kN);
    pts.reserve(kN * kN);
    for (int iy = 0; iy < kN; ++iy) {
      for (int ix = 0; ix < kN; ++ix) {
        const Eigen::Vector2d p(-12.0 + 26.0 * ix / (kN - 1), -12.0 + 26.0 * iy / (kN - 1));
        pts.push_back(p);
        logp.push_back(mog_logpdf_t(gm, p, t));
      }
    }
    const double thr = *std::max_element(logp.begin(), logp.end()) - kLogWindow;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (logp[i] >= thr) out.points.emplace_back(pts[i](0), pts[i](1), t);
  }
  return out;
}

void append_row(std::string& csv, std::initializer_list<std::string> fields) {
  bool first = true;
  for (const std::string& f : fields) {
    if (!first) csv += ',';
    csv += f;
    first = false;
  }
  csv += '\n';
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

std::string rounds_csv(const std::vector<RoundLog>& rounds) {
  std::string csv = std::string(kRoundHeader) + "\n";
  for (const RoundLog& r : rounds)
    append_row(csv, {std::to_string(r.round), fmt(r.conflict_fraction), fmt(r.loss),
                     std::to_string(r.trajectories_consumed)});
  return csv;
}

}  // namespace

std::string metrics_row_csv(const MetricsRow& row) {
  std::string csv;
  csv += row.method + ',' + row.constraint + ',' + fmt(row.pc) + ',' + fmt(row.cs) + ',' +
         std::to_string(row.n) + ',' + std::to_string(row.seed) + ',' +
         fmt(row.time_ms_per_sample) + ',' + std::to_string(row.data_usage);
  return csv;
}

MetricsRow metrics_row_from_csv(const std::string& line) {
  const std::vector<std::string> f = split_csv(line);
  if (f.size() != 8) throw ConfigError("metrics row needs 8 fields: " + line);
  MetricsRow row;
  row.method = f[0];
  row.constraint = f[1];
  row.pc = to_double(f[2]);
  row.cs = to_double(f[3]);
  row.n = static_cast<long>(to_double(f[4]));
  row.seed = static_cast<std::uint64_t>(std::stoull(f[5]));
  row.time_ms_per_sample = to_double(f[6]);
  row.data_usage = static_cast<long>(to_double(f[7]));
  return row;
}

double flow_grid_rmse(const VelocityField& field, const GaussianMixture& gm) {
  const FilteredGrid grid = rmse_grid(gm);
  double acc = 0.0;
  for (const Eigen::Vector3d& p : grid.points) {
    const Eigen::Vector2d x(p(0), p(1));
    acc += (velocity(field, x, p(2)) - oracle_velocity(gm, x, p(2))).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(grid.points.size()));
}

double terminal_grid_mean_error(const VelocityField& field, const GaussianMixture& gm) {
  const FilteredGrid grid = rmse_grid(gm);
  double acc = 0.0;
  for (const Eigen::Vector3d& p : grid.points) {
    const Eigen::Vector2d x(p(0), p(1));
    const Eigen::Vector2d pred = x + (1.0 - p(2)) * velocity(field, x, p(2));
    acc += (pred - oracle_terminal_mean(gm, x, p(2))).norm();
  }
  return acc / static_cast<double>(grid.points.size());
}

CalibrationResult calibrate_scale(const VelocityField& field, const ExperimentConfig& cfg,
                                  std::uint64_t seed) {
  CalibrationResult out;
  std::vector<double> grid = cfg.eval.scale_grid;
  if (grid.empty()) throw ConfigError("calibration needs a non-empty scale grid");
  std::sort(grid.begin(), grid.end());
  const Velocity vel = velocity_fn(field);
  SamplerConfig scfg;
  scfg.steps = cfg.eval.sample_steps;
  for (double scale : grid) {
    bool all_ok = true;
    for (int j = 0; j < cfg.labels.num_classifiers(); ++j) {
      ConstraintTarget target = unconstrained_target(cfg.labels.num_classifiers());
      target.required[static_cast<std::size_t>(j)] = 1;
      const std::string name = target_name(target);
      const RewardSet rewards =
          classifier_reward_set(cfg.gm, cfg.labels, target, cfg.eval.reward_weight);
      GuidanceConfig gcfg = cfg.guidance;
      gcfg.engine = Engine::kCovG;
      gcfg.scale = scale;
      const SampleReport rep =
          batch_sample(vel, rewards, gcfg, nullptr, scfg, cfg.eval.calibrate_samples,
                       derive_seed(seed, fnv1a("calib:" + name + ":" + fmt(scale))));
      const double cs = metric_cs(rep.terminals, cfg.gm, cfg.labels, target);
      out.table.push_back({name, scale, cs});
      all_ok = all_ok && cs >= 99.0;
    }
    if (all_ok) {
      out.scale = scale;
      out.reached = true;
      return out;
    }
  }
  out.scale = grid.back();
  out.reached = false;
  return out;
}

void write_terminals_csv(const std::vector<Eigen::Vector2d>& terminals, const std::string& path) {
  std::string csv = "idx,x1,x2\n";
  for (std::size_t i = 0; i < terminals.size(); ++i)
    append_row(csv, {std::to_string(i), fmt(terminals[i](0)), fmt(terminals[i](1))});
  write_file(path, csv);
}

namespace {

json calibration_json(const CalibrationResult& cal) {
  json j;
  j["scale"] = cal.scale;
  j["reached"] = cal.reached;
  j["table"] = json::array();
  for (const CalibrationPoint& p : cal.table)
    j["table"].push_back({{"target", p.target}, {"scale", p.scale}, {"cs", p.cs}});
  return j;
}

CalibrationResult calibration_from_json(const json& j) {
  CalibrationResult cal;
  cal.scale = j.at("scale").get<double>();
  cal.reached = j.at("reached").get<bool>();
  for (const auto& p : j.at("table"))
    cal.table.push_back({p.at("target").get<std::string>(), p.at("scale").get<double>(),
                         p.at("cs").get<double>()});
  return cal;
}

struct CellContext {
  const ExperimentConfig& cfg;
  const std::string& out;
  const Velocity& vel;
  double scale;  // calibrated guidance scale
  std::uint64_t seed;
};

/// Runs one (method, target) cell from scratch; returns its metrics row and
/// writes terminals/diagnostics/stats artifacts into the cell directory.
MetricsRow run_cell(const CellContext& ctx, Engine engine, const std::string& method,
                    const std::string& tname, const ConstraintTarget& target,
                    const std::string& cell_dir, std::string& stage) {
  const ExperimentConfig& cfg = ctx.cfg;
  stage = "setup";
  const RewardSet rewards =
      engine == Engine::kNone
          ? RewardSet{cfg.gm, cfg.labels, {}}
          : classifier_reward_set(cfg.gm, cfg.labels, target, cfg.eval.reward_weight);
  GuidanceConfig gcfg = cfg.guidance;
  gcfg.engine = engine;
  if (engine != Engine::kNone) gcfg.scale = ctx.scale;

  long data_usage = 0;
  ValueFunction value;
  const ValueFunction* vptr = nullptr;
  json value_stats;
  if (engine == Engine::kCar) {
    stage = "train_guidance";
    const std::string vpath =
        ctx.out + "/checkpoints/value_" + tname + "_s" + std::to_string(ctx.seed) + ".json";
    if (fs::exists(vpath)) {
      const Checkpoint ckpt = load_checkpoint(vpath);
      value = value_from_checkpoint(ckpt);
      if (const auto it = ckpt.extras.find("trajectories_used"); it != ckpt.extras.end())
        data_usage = static_cast<long>(it->second);
    } else {
      GuidanceTrainConfig vc = cfg.value;
      vc.seed = derive_seed(ctx.seed, fnv1a("value:" + tname));
      const GuidanceTrainResult gtr = train_guidance(ctx.vel, rewards, gcfg, vc);
      value = gtr.value;
      data_usage = gtr.trajectories_used;
      save_checkpoint(value_checkpoint(gtr, gcfg), vpath);
      const std::string stem = "car_" + tname + "_s" + std::to_string(ctx.seed);
      write_file(ctx.out + "/curves/" + stem + "_rounds.csv", rounds_csv(gtr.rounds));
      value_stats["rounds"] = gtr.rounds.size();
      value_stats["converged"] = gtr.converged;
      if (!gtr.rounds.empty()) {
        value_stats["conflict_fraction_first"] = gtr.rounds.front().conflict_fraction;
        value_stats["conflict_fraction_last"] = gtr.rounds.back().conflict_fraction;
        value_stats["max_state_fraction_first"] = gtr.rounds.front().max_state_fraction;
        value_stats["max_state_fraction_last"] = gtr.rounds.back().max_state_fraction;
        std::vector<std::pair<double, double>> series;
        for (const RoundLog& r : gtr.rounds)
          series.emplace_back(static_cast<double>(r.round), r.conflict_fraction);
        if (series.size() >= 2)
          save_text(svg_line(series, "conflict fraction per round (" + tname + ")"),
                    ctx.out + "/figures/" + stem + "_rounds.svg");
      }
    }
    vptr = &value;
  }

  stage = "sample";
  std::ofstream diag(cell_dir + "/diagnostics.csv", std::ios::binary);
  if (!diag) throw ConfigError("cannot write " + cell_dir + "/diagnostics.csv");
  diag << kDiagHeader << '\n';
  const DiagSink sink = [&diag](std::size_t idx, int step, double t, const StepDiagnostics& d) {
    if (idx >= kDiagSampleCap) return;
    diag << idx << ',' << step << ',' << fmt(t) << ',' << fmt(d.w) << ',' << fmt(d.delta_e) << ','
         << fmt(d.mean_cos) << '\n';
  };
  SamplerConfig scfg;
  scfg.steps = cfg.eval.sample_steps;
  const SampleReport rep =
      batch_sample(ctx.vel, rewards, gcfg, vptr, scfg, cfg.eval.n_samples,
                   derive_seed(ctx.seed, fnv1a("sample:" + method + ":" + tname)), sink);
  diag.close();
  write_terminals_csv(rep.terminals, cell_dir + "/terminals.csv");
  save_text(svg_scatter(rep.terminals, -14.0, 16.0, -14.0, 16.0,
                        method + " " + tname + " terminals"),
            ctx.out + "/figures/terminals_" + method + "_" + tname + "_s" +
                std::to_string(ctx.seed) + ".svg");

  stage = "metrics";
  MetricsRow row;
  row.method = method;
  row.constraint = tname;
  row.pc = metric_pc(rep.terminals, cfg.gm, cfg.labels, target);
  // CS needs a constrained classifier; the coverage cell reports the vacuous 100.
  row.cs = engine == Engine::kNone ? 100.0
                                   : metric_cs(rep.terminals, cfg.gm, cfg.labels, target);
  row.n = static_cast<long>(rep.terminals.size());
  row.seed = ctx.seed;
  row.time_ms_per_sample = rep.time_ms_per_sample;
  row.data_usage = data_usage;

  json stats;
  stats["method"] = method;
  stats["constraint"] = tname;
  stats["seed"] = ctx.seed;
  stats["pc"] = row.pc;
  stats["cs"] = row.cs;
  stats["n"] = row.n;
  stats["time_ms_per_sample"] = row.time_ms_per_sample;
  stats["data_usage"] = row.data_usage;
  stats["mean_w"] = rep.mean_w;
  stats["misalignment_integral"] = rep.misalignment_integral;
  stats["mean_delta_e"] = rep.mean_delta_e;
  stats["aborted"] = rep.aborted;
  stats["attempted"] = rep.attempted;
  if (!value_stats.is_null()) stats["value_training"] = value_stats;
  write_file(cell_dir + "/stats.json", stats.dump(2) + "\n");
  write_file(cell_dir + "/row.csv", metrics_row_csv(row) + "\n");
  return row;
}

void write_landscapes(const ExperimentConfig& cfg, const std::string& out) {
  for (const std::string& tstr : cfg.eval.targets) {
    const ConstraintTarget target = parse_target(tstr);
    if (target.num_constrained() < 2) continue;
    const std::string tname = target_name(target);
    const RewardSet rewards =
        classifier_reward_set(cfg.gm, cfg.labels, target, cfg.eval.reward_weight);
    const GridSpec spec;
    for (GridKind kind : {GridKind::kEnergy, GridKind::kConflictW, GridKind::kDeltaE}) {
      const std::string path =
          out + "/landscape/" + tname + "_" + grid_kind_name(kind) + ".grid.csv";
      if (fs::exists(path)) continue;
      const Grid grid = landscape_grid(kind, rewards, cfg.guidance, nullptr, nullptr, spec);
      save_grid(grid, path);
      save_text(svg_heatmap(grid, grid_kind_name(kind) + " " + tname),
                out + "/figures/landscape_" + tname + "_" + grid_kind_name(kind) + ".svg");
    }
  }
}

void write_value_landscapes(const ExperimentConfig& cfg, const std::string& out,
                            std::uint64_t seed) {
  for (const std::string& tstr : cfg.eval.targets) {
    const ConstraintTarget target = parse_target(tstr);
    if (target.num_constrained() < 2) continue;
    const std::string tname = target_name(target);
    const std::string vpath =
        out + "/checkpoints/value_" + tname + "_s" + std::to_string(seed) + ".json";
    if (!fs::exists(vpath)) continue;
    const std::string path = out + "/landscape/" + tname + "_learned_value_s" +
                             std::to_string(seed) + ".grid.csv";
    if (fs::exists(path)) continue;
    const ValueFunction value = value_from_checkpoint(load_checkpoint(vpath));
    const RewardSet rewards =
        classifier_reward_set(cfg.gm, cfg.labels, target, cfg.eval.reward_weight);
    GridSpec spec;
    spec.t = 0.5;
    const Grid grid =
        landscape_grid(GridKind::kLearnedValue, rewards, cfg.guidance, nullptr, &value, spec);
    save_grid(grid, path);
    save_text(svg_heatmap(grid, "learned value " + tname + " t=0.5"),
              out + "/figures/landscape_" + tname + "_learned_value_s" + std::to_string(seed) +
                  ".svg");
  }
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  if (cfg.eval.seeds.empty()) throw ConfigError("experiment needs at least one seed");
  ExperimentReport report;
  report.out_dir = out_dir;
  for (const char* sub : {"", "/checkpoints", "/cells", "/curves", "/landscape", "/figures"})
    fs::create_directories(out_dir + sub);
  save_config(cfg, out_dir + "/config.json");

  const bool any_guided =
      std::any_of(cfg.eval.methods.begin(), cfg.eval.methods.end(),
                  [](const std::string& m) { return m != "none"; });

  for (const std::uint64_t seed : cfg.eval.seeds) {
    // ---- base flow: train once per seed, or reuse the checkpoint
    const std::string flow_path =
        out_dir + "/checkpoints/flow_s" + std::to_string(seed) + ".json";
    VelocityField field;
    if (fs::exists(flow_path)) {
      field = velocity_from_checkpoint(load_checkpoint(flow_path));
    } else {
      FlowTrainConfig fc = cfg.flow;
      fc.seed = derive_seed(seed, fnv1a("flow"));
      const FlowTrainResult ftr = train_flow(cfg.gm, fc);
      field = ftr.field;
      save_checkpoint(velocity_checkpoint(ftr, fc), flow_path);
      std::string curve = "step,loss\n";
      std::vector<std::pair<double, double>> series;
      for (const CurvePoint& p : ftr.curve) {
        append_row(curve, {std::to_string(p.step), fmt(p.loss)});
        series.emplace_back(static_cast<double>(p.step), p.loss);
      }
      write_file(out_dir + "/curves/flow_s" + std::to_string(seed) + ".csv", curve);
      save_text(svg_line(series, "flow training loss"),
                out_dir + "/figures/flow_curve_s" + std::to_string(seed) + ".svg");
    }
    report.flow_rmse[seed] = flow_grid_rmse(field, cfg.gm);
    const Velocity vel = velocity_fn(field);

    // ---- guidance-scale calibration (cached per seed)
    CalibrationResult cal;
    cal.scale = cfg.guidance.scale;
    if (cfg.eval.calibrate && any_guided) {
      const std::string cal_path =
          out_dir + "/calibration_s" + std::to_string(seed) + ".json";
      if (fs::exists(cal_path)) {
        cal = calibration_from_json(json::parse(read_file(cal_path)));
      } else {
        try {
          cal = calibrate_scale(field, cfg, seed);
          write_file(cal_path, calibration_json(cal).dump(2) + "\n");
        } catch (const std::exception& e) {
          report.failures.push_back(
              {"calibration", "-", seed, "calibrate", sanitize(e.what())});
        }
      }
    }
    report.calibration[seed] = cal;

    // ---- experiment cells
    for (const std::string& method : cfg.eval.methods) {
      const Engine engine = engine_from_name(method);
      std::vector<std::string> targets;
      if (engine == Engine::kNone) {
        targets = {target_name(unconstrained_target(cfg.labels.num_classifiers()))};
      } else {
        for (const std::string& t : cfg.eval.targets)
          if (parse_target(t).num_constrained() > 0) targets.push_back(t);
      }
      for (const std::string& tstr : targets) {
        const ConstraintTarget target = engine == Engine::kNone
                                            ? unconstrained_target(cfg.labels.num_classifiers())
                                            : parse_target(tstr);
        const std::string tname = target_name(target);
        const std::string cell_dir =
            out_dir + "/cells/" + method + "_" + tname + "_s" + std::to_string(seed);
        const std::string row_path = cell_dir + "/row.csv";
        if (fs::exists(row_path)) {
          std::string line = read_file(row_path);
          if (!line.empty() && line.back() == '\n') line.pop_back();
          report.rows.push_back(metrics_row_from_csv(line));
          continue;
        }
        fs::create_directories(cell_dir);
        std::string stage = "setup";
        try {
          const CellContext ctx{cfg, out_dir, vel, cal.scale, seed};
          report.rows.push_back(run_cell(ctx, engine, method, tname, target, cell_dir, stage));
        } catch (const std::exception& e) {
          report.failures.push_back({method, tname, seed, stage, sanitize(e.what())});
          write_file(cell_dir + "/failure.txt", stage + ": " + e.what() + "\n");
        }
      }
    }
    write_value_landscapes(cfg, out_dir, seed);
  }

  write_landscapes(cfg, out_dir);

  // ---- merged outputs
  std::string metrics = std::string(kMetricsHeader) + "\n";
  for (const MetricsRow& row : report.rows) metrics += metrics_row_csv(row) + "\n";
  write_file(out_dir + "/metrics.csv", metrics);

  std::string failures = "method,constraint,seed,stage,error\n";
  for (const CellFailure& f : report.failures)
    append_row(failures, {f.method, f.constraint, std::to_string(f.seed), f.stage, f.error});
  write_file(out_dir + "/failures.csv", failures);

  json rep;
  rep["flow"] = json::object();
  for (const auto& [seed, rmse] : report.flow_rmse)
    rep["flow"][std::to_string(seed)] = {{"grid_rmse", rmse}};
  rep["calibration"] = json::object();
  for (const auto& [seed, cal] : report.calibration)
    rep["calibration"][std::to_string(seed)] = calibration_json(cal);
  rep["cells"] = json::array();
  for (const MetricsRow& row : report.rows) {
    const std::string cell_dir =
        out_dir + "/cells/" + row.method + "_" + row.constraint + "_s" + std::to_string(row.seed);
    const std::string stats_path = cell_dir + "/stats.json";
    if (fs::exists(stats_path))
      rep["cells"].push_back(json::parse(read_file(stats_path)));
  }
  rep["failures"] = json::array();
  for (const CellFailure& f : report.failures)
    rep["failures"].push_back({{"method", f.method},
                               {"constraint", f.constraint},
                               {"seed", f.seed},
                               {"stage", f.stage},
                               {"error", f.error}});
  write_file(out_dir + "/report.json", rep.dump(2) + "\n");
  return report;
}

}  // namespace carflow
