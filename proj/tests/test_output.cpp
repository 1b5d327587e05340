#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "carflow/config.hpp"
#include "carflow/errors.hpp"
#include "carflow/experiment.hpp"
#include "carflow/landscape.hpp"
#include "carflow/svg.hpp"
#include "doctest.h"

using namespace carflow;
namespace fs = std::filesystem;

namespace {

int count_occurrences(const std::string& hay, const std::string& needle) {
  int n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("scatter svg draws one circle per in-bounds point") {
  std::vector<Eigen::Vector2d> pts = {{0.0, 0.0}, {1.0, 2.0}, {-3.0, 4.0}};
  const std::string svg = svg_scatter(pts, -14.0, 16.0, -14.0, 16.0, "terminals");
  CHECK(count_occurrences(svg, "<circle") == 3);
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("terminals") != std::string::npos);
  CHECK(svg.rfind("</svg>\n") == svg.size() - 7);

  // out-of-bounds points are dropped, not clamped
  pts.push_back({100.0, 0.0});
  pts.push_back({0.0, -100.0});
  CHECK(count_occurrences(svg_scatter(pts, -14.0, 16.0, -14.0, 16.0, "t"), "<circle") == 3);

  // byte-stable: same input, same text
  CHECK(svg == svg_scatter({{0.0, 0.0}, {1.0, 2.0}, {-3.0, 4.0}}, -14.0, 16.0, -14.0, 16.0,
                           "terminals"));

  CHECK_THROWS_AS(svg_scatter(pts, 1.0, 1.0, 0.0, 2.0, "t"), ConfigError);
  CHECK_THROWS_AS(svg_scatter(pts, 0.0, 1.0, 5.0, -5.0, "t"), ConfigError);
}

TEST_CASE("heatmap svg has one cell rect per lattice point") {
  Grid grid;
  grid.spec = GridSpec{0.0, 1.0, 0.0, 1.0, 2, 2, 1.0};
  grid.kind = GridKind::kEnergy;
  grid.values.resize(2, 2);
  grid.values << 0.0, 1.0, 2.0, 3.0;
  const std::string svg = svg_heatmap(grid, "energy");
  CHECK(count_occurrences(svg, "class=\"cell\"") == 4);
  CHECK(svg.find("rgb(") != std::string::npos);
  CHECK(svg.find("energy") != std::string::npos);

  // constant grid must not divide by zero in the color ramp
  grid.values.setConstant(5.0);
  const std::string flat = svg_heatmap(grid, "flat");
  CHECK(count_occurrences(flat, "class=\"cell\"") == 4);
  CHECK(flat.find("nan") == std::string::npos);
}

TEST_CASE("line svg emits a polyline and rejects short series") {
  const std::vector<std::pair<double, double>> series = {{0.0, 1.0}, {1.0, 0.5}, {2.0, 0.25}};
  const std::string svg = svg_line(series, "loss");
  CHECK(count_occurrences(svg, "<polyline") == 1);
  CHECK(svg.find("points=\"") != std::string::npos);
  CHECK(svg == svg_line(series, "loss"));

  CHECK_THROWS_AS(svg_line({}, "empty"), ConfigError);
  CHECK_THROWS_AS(svg_line({{0.0, 0.0}}, "single"), ConfigError);

  // flat series still renders (degenerate y-range is widened internally)
  CHECK(svg_line({{0.0, 2.0}, {1.0, 2.0}}, "flat").find("<polyline") != std::string::npos);
}

TEST_CASE("save_text writes bytes verbatim") {
  const fs::path path = fs::temp_directory_path() / "carflow_save_text.txt";
  save_text("line1\nline2\n", path.string());
  CHECK(slurp(path) == "line1\nline2\n");
  fs::remove(path);
  CHECK_THROWS_AS(save_text("x", (fs::temp_directory_path() / "no_such" / "dir.txt").string()),
                  ConfigError);
}

TEST_CASE("config json round trip is textually stable") {
  const ExperimentConfig cfg = default_experiment_config();
  const std::string text = config_to_json(cfg);
  CHECK(text.back() == '\n');
  const ExperimentConfig back = config_from_json(text);
  CHECK(config_to_json(back) == text);

  CHECK(back.gm.means.size() == 3);
  CHECK(back.gm.means[0] == Eigen::Vector2d(8.0, 8.0));
  CHECK(back.labels.labels == std::vector<std::vector<int>>{{1, 1, 0}, {1, 0, 0}});
  CHECK(back.eval.targets == cfg.eval.targets);
  CHECK(back.eval.scale_grid == cfg.eval.scale_grid);
}

TEST_CASE("config overrides merge onto defaults") {
  const ExperimentConfig cfg = config_from_json(
      R"({"flow": {"steps": 5, "hidden": [8]},
          "guidance": {"scale": 3.5, "epsilon": 0.25},
          "eval": {"seeds": [7, 9], "n_samples": 123}})");
  CHECK(cfg.flow.steps == 5);
  CHECK(cfg.flow.hidden_dims == std::vector<int>{8});
  CHECK(cfg.flow.batch_size == 256);  // untouched default
  CHECK(cfg.guidance.scale == 3.5);
  CHECK(cfg.guidance.epsilon == 0.25);
  CHECK(cfg.guidance.conflict_threshold == 0.5);
  CHECK(cfg.eval.seeds == std::vector<std::uint64_t>{7, 9});
  CHECK(cfg.eval.n_samples == 123);
  CHECK(cfg.eval.sample_steps == 100);
}

TEST_CASE("config rejects malformed input") {
  CHECK_THROWS_AS(config_from_json("{"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"flows": {}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"flow": {"step": 5}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"eval": {"extra": 1}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"eval": {"seeds": []}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"eval": {"methods": ["covg"]}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"eval": {"targets": ["101"]}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"eval": {"targets": ["2x"]}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"flow": {"activation": "sigmoid"}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"benchmark": {"sigma": -1.0}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"benchmark": {"means": [[1, 2, 3]]}})"), ConfigError);
  // label table no longer matching the shrunk mode list
  CHECK_THROWS_AS(config_from_json(R"({"benchmark": {"means": [[0, 0]], "weights": [1.0]}})"),
                  ConfigError);
}

TEST_CASE("config file save/load round trip") {
  const fs::path path = fs::temp_directory_path() / "carflow_cfg.json";
  ExperimentConfig cfg = default_experiment_config();
  cfg.eval.seeds = {42};
  cfg.flow.steps = 777;
  save_config(cfg, path.string());
  const ExperimentConfig back = load_config(path.string());
  CHECK(back.flow.steps == 777);
  CHECK(back.eval.seeds == std::vector<std::uint64_t>{42});
  CHECK(config_to_json(back) == config_to_json(cfg));
  fs::remove(path);
  CHECK_THROWS_AS(load_config((fs::temp_directory_path() / "missing_cfg.json").string()),
                  ConfigError);
}

TEST_CASE("metrics row csv round trip") {
  MetricsRow row;
  row.method = "cov_g";
  row.constraint = "10";
  row.pc = 86.47;
  row.cs = 99.1234567890123;
  row.n = 10000;
  row.seed = 1234567890123456789ULL;
  row.time_ms_per_sample = 0.0625;
  row.data_usage = 25600;
  const std::string line = metrics_row_csv(row);
  CHECK(count_occurrences(line, ",") == 7);
  const MetricsRow back = metrics_row_from_csv(line);
  CHECK(back.method == row.method);
  CHECK(back.constraint == row.constraint);
  CHECK(back.pc == row.pc);
  CHECK(back.cs == row.cs);
  CHECK(back.n == row.n);
  CHECK(back.seed == row.seed);
  CHECK(back.time_ms_per_sample == row.time_ms_per_sample);
  CHECK(back.data_usage == row.data_usage);
  CHECK(metrics_row_csv(back) == line);

  CHECK_THROWS_AS(metrics_row_from_csv("a,b,c"), ConfigError);
  CHECK_THROWS_AS(metrics_row_from_csv(""), ConfigError);
}

TEST_CASE("experiment run writes a reproducible bundle") {
  ExperimentConfig cfg = default_experiment_config();
  cfg.flow.steps = 150;
  cfg.flow.batch_size = 32;
  cfg.flow.curve_every = 50;
  cfg.flow.hidden_dims = {8, 8};
  cfg.eval.n_samples = 50;
  cfg.eval.sample_steps = 12;
  cfg.eval.methods = {"none", "cov_g"};
  cfg.eval.targets = {"10"};
  cfg.eval.seeds = {3};
  cfg.eval.calibrate = false;

  const fs::path dir = fresh_dir("carflow_exp_smoke");
  const ExperimentReport rep = run_experiment(cfg, dir.string());

  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.failures.empty());
  CHECK(rep.rows[0].method == "none");
  CHECK(rep.rows[0].constraint == "xx");  // coverage row: no constrained classifier
  CHECK(rep.rows[0].cs == 100.0);
  CHECK(rep.rows[0].n == 50);
  CHECK(rep.rows[1].method == "cov_g");
  CHECK(rep.rows[1].constraint == "10");
  CHECK(rep.rows[1].seed == 3);
  CHECK(rep.rows[1].data_usage == 0);  // no value training outside car
  CHECK(rep.flow_rmse.at(3) > 0.0);

  const std::string metrics = slurp(dir / "metrics.csv");
  CHECK(metrics.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  CHECK(count_occurrences(metrics, "\n") == 3);  // header + 2 rows

  CHECK(fs::exists(dir / "config.json"));
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "checkpoints" / "flow_s3.json"));
  CHECK(fs::exists(dir / "curves" / "flow_s3.csv"));
  CHECK(fs::exists(dir / "landscape" / "10_energy.grid.csv"));
  CHECK(fs::exists(dir / "landscape" / "10_conflict_w.grid.csv"));
  CHECK(fs::exists(dir / "landscape" / "10_delta_e.grid.csv"));
  const std::string failures = slurp(dir / "failures.csv");
  CHECK(failures == "method,constraint,seed,stage,error\n");

  // rerun into the same directory: cached cells, byte-identical metrics
  const ExperimentReport again = run_experiment(cfg, dir.string());
  CHECK(slurp(dir / "metrics.csv") == metrics);
  REQUIRE(again.rows.size() == 2);
  CHECK(again.rows[1].pc == rep.rows[1].pc);
  CHECK(again.rows[1].time_ms_per_sample == rep.rows[1].time_ms_per_sample);

  // fresh directory: identical except the wall-clock column
  const fs::path dir2 = fresh_dir("carflow_exp_smoke2");
  const ExperimentReport rep2 = run_experiment(cfg, dir2.string());
  REQUIRE(rep2.rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(rep2.rows[i].method == rep.rows[i].method);
    CHECK(rep2.rows[i].constraint == rep.rows[i].constraint);
    CHECK(rep2.rows[i].pc == rep.rows[i].pc);
    CHECK(rep2.rows[i].cs == rep.rows[i].cs);
    CHECK(rep2.rows[i].n == rep.rows[i].n);
    CHECK(rep2.rows[i].data_usage == rep.rows[i].data_usage);
  }
  CHECK(slurp(dir2 / "cells" / "cov_g_10_s3" / "terminals.csv") ==
        slurp(dir / "cells" / "cov_g_10_s3" / "terminals.csv"));

  fs::remove_all(dir);
  fs::remove_all(dir2);
}
