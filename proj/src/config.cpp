#include "carflow/config.hpp"

#include <fstream>
#include <sstream>

#include "carflow/errors.hpp"
#include "json.hpp"

namespace carflow {

namespace {

using json = nlohmann::json;

void check_keys(const json& obj, const char* where, std::initializer_list<const char*> known) {
  for (const auto& [key, unused] : obj.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok) throw ConfigError(std::string("unknown key '") + key + "' in " + where);
  }
}

template <typename T>
void pick(const json& obj, const char* key, T& out) {
  if (const auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

void parse_benchmark(const json& obj, ExperimentConfig& cfg) {
  check_keys(obj, "benchmark", {"means", "weights", "sigma", "labels"});
  if (const auto it = obj.find("means"); it != obj.end()) {
    cfg.gm.means.clear();
    for (const auto& m : *it) {
      if (!m.is_array() || m.size() != 2) throw ConfigError("benchmark means must be 2-D");
      cfg.gm.means.emplace_back(m[0].get<double>(), m[1].get<double>());
    }
  }
  pick(obj, "weights", cfg.gm.weights);
  pick(obj, "sigma", cfg.gm.sigma);
  pick(obj, "labels", cfg.labels.labels);
}

void parse_flow(const json& obj, FlowTrainConfig& flow) {
  check_keys(obj, "flow", {"batch_size", "steps", "lr", "curve_every", "hidden", "activation"});
  pick(obj, "batch_size", flow.batch_size);
  pick(obj, "steps", flow.steps);
  pick(obj, "lr", flow.lr);
  pick(obj, "curve_every", flow.curve_every);
  pick(obj, "hidden", flow.hidden_dims);
  if (const auto it = obj.find("activation"); it != obj.end())
    flow.activation = activation_from_name(it->get<std::string>());
}

void parse_guidance(const json& obj, GuidanceConfig& g) {
  check_keys(obj, "guidance", {"scale", "conflict_threshold", "clip_norm", "epsilon"});
  pick(obj, "scale", g.scale);
  pick(obj, "conflict_threshold", g.conflict_threshold);
  pick(obj, "clip_norm", g.clip_norm);
  pick(obj, "epsilon", g.epsilon);
}

void parse_value(const json& obj, GuidanceTrainConfig& v) {
  check_keys(obj, "value",
             {"rounds_max", "rollouts_per_round", "rollout_steps", "grad_updates_per_round",
              "batch_size", "early_stop_epsilon", "lr", "hidden", "activation"});
  pick(obj, "rounds_max", v.rounds_max);
  pick(obj, "rollouts_per_round", v.rollouts_per_round);
  pick(obj, "rollout_steps", v.rollout_steps);
  pick(obj, "grad_updates_per_round", v.grad_updates_per_round);
  pick(obj, "batch_size", v.batch_size);
  pick(obj, "early_stop_epsilon", v.early_stop_epsilon);
  pick(obj, "lr", v.lr);
  pick(obj, "hidden", v.hidden_dims);
  if (const auto it = obj.find("activation"); it != obj.end())
    v.activation = activation_from_name(it->get<std::string>());
}

void parse_eval(const json& obj, EvalConfig& e) {
  check_keys(obj, "eval",
             {"n_samples", "sample_steps", "targets", "methods", "seeds", "reward_weight",
              "calibrate", "scale_grid", "calibrate_samples"});
  pick(obj, "n_samples", e.n_samples);
  pick(obj, "sample_steps", e.sample_steps);
  pick(obj, "targets", e.targets);
  pick(obj, "methods", e.methods);
  pick(obj, "seeds", e.seeds);
  pick(obj, "reward_weight", e.reward_weight);
  pick(obj, "calibrate", e.calibrate);
  pick(obj, "scale_grid", e.scale_grid);
  pick(obj, "calibrate_samples", e.calibrate_samples);
}

}  // namespace

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.gm = benchmark_mixture();
  cfg.labels = benchmark_labels();
  return cfg;
}

ExperimentConfig config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid json: ") + e.what());
  }
  check_keys(root, "config", {"benchmark", "flow", "guidance", "value", "eval"});
  ExperimentConfig cfg = default_experiment_config();
  if (const auto it = root.find("benchmark"); it != root.end()) parse_benchmark(*it, cfg);
  if (const auto it = root.find("flow"); it != root.end()) parse_flow(*it, cfg.flow);
  if (const auto it = root.find("guidance"); it != root.end()) parse_guidance(*it, cfg.guidance);
  if (const auto it = root.find("value"); it != root.end()) parse_value(*it, cfg.value);
  if (const auto it = root.find("eval"); it != root.end()) parse_eval(*it, cfg.eval);
  validate(cfg.gm);
  validate(cfg.labels, cfg.gm);
  if (cfg.eval.seeds.empty()) throw ConfigError("eval.seeds must be non-empty");
  for (const std::string& m : cfg.eval.methods) engine_from_name(m);  // rejects typos
  for (const std::string& t : cfg.eval.targets) {
    const ConstraintTarget target = parse_target(t);
    if (static_cast<int>(target.required.size()) != cfg.labels.num_classifiers())
      throw ConfigError("target '" + t + "' length does not match classifier count");
  }
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json root;
  json bench;
  bench["means"] = json::array();
  for (const auto& m : cfg.gm.means) bench["means"].push_back({m(0), m(1)});
  bench["weights"] = cfg.gm.weights;
  bench["sigma"] = cfg.gm.sigma;
  bench["labels"] = cfg.labels.labels;
  root["benchmark"] = bench;
  root["flow"] = {{"batch_size", cfg.flow.batch_size},
                  {"steps", cfg.flow.steps},
                  {"lr", cfg.flow.lr},
                  {"curve_every", cfg.flow.curve_every},
                  {"hidden", cfg.flow.hidden_dims},
                  {"activation", activation_name(cfg.flow.activation)}};
  root["guidance"] = {{"scale", cfg.guidance.scale},
                      {"conflict_threshold", cfg.guidance.conflict_threshold},
                      {"clip_norm", cfg.guidance.clip_norm},
                      {"epsilon", cfg.guidance.epsilon}};
  root["value"] = {{"rounds_max", cfg.value.rounds_max},
                   {"rollouts_per_round", cfg.value.rollouts_per_round},
                   {"rollout_steps", cfg.value.rollout_steps},
                   {"grad_updates_per_round", cfg.value.grad_updates_per_round},
                   {"batch_size", cfg.value.batch_size},
                   {"early_stop_epsilon", cfg.value.early_stop_epsilon},
                   {"lr", cfg.value.lr},
                   {"hidden", cfg.value.hidden_dims},
                   {"activation", activation_name(cfg.value.activation)}};
  root["eval"] = {{"n_samples", cfg.eval.n_samples},
                  {"sample_steps", cfg.eval.sample_steps},
                  {"targets", cfg.eval.targets},
                  {"methods", cfg.eval.methods},
                  {"seeds", cfg.eval.seeds},
                  {"reward_weight", cfg.eval.reward_weight},
                  {"calibrate", cfg.eval.calibrate},
                  {"scale_grid", cfg.eval.scale_grid},
                  {"calibrate_samples", cfg.eval.calibrate_samples}};
  return root.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config " + path);
  out << config_to_json(cfg);
}

}  // namespace carflow
