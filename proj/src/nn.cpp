#include "carflow/nn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "carflow/errors.hpp"
#include "carflow/rng.hpp"
#include "json.hpp"

namespace carflow {

namespace {

using json = nlohmann::json;

Eigen::MatrixXd apply_activation(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::kTanh:
      return z.array().tanh();
    case Activation::kSoftplus:
      // log(1+e^z), linear for large z to avoid overflow
      return z.unaryExpr([](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); });
    case Activation::kRelu:
      return z.cwiseMax(0.0);
  }
  throw ConfigError("unknown activation");
}

// derivative expressed from the pre-activation z
Eigen::MatrixXd activation_deriv(Activation a, const Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::kTanh: {
      Eigen::ArrayXXd t = z.array().tanh();
      return (1.0 - t.square()).matrix();
    }
    case Activation::kSoftplus:
      return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    case Activation::kRelu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  }
  throw ConfigError("unknown activation");
}

void check_consistent(const NetworkParams& params, Eigen::Index input_rows) {
  if (params.layers.empty()) throw DimensionError("network has no layers");
  if (params.layers.front().w.cols() != input_rows)
    throw DimensionError("input dim mismatch: expected " +
                         std::to_string(params.layers.front().w.cols()) + ", got " +
                         std::to_string(input_rows));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Layer& layer = params.layers[l];
    if (layer.w.rows() != layer.b.size())
      throw DimensionError("layer " + std::to_string(l) + ": bias/weight row mismatch");
    if (l + 1 < params.layers.size() &&
        params.layers[l + 1].w.cols() != layer.w.rows())
      throw DimensionError("layer " + std::to_string(l + 1) + ": fan-in mismatch");
  }
}

}  // namespace

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kSoftplus: return "softplus";
    case Activation::kRelu: return "relu";
  }
  throw ConfigError("unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "softplus") return Activation::kSoftplus;
  if (name == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + name + "'");
}

std::uint64_t spec_hash(const NetworkSpec& spec) {
  // FNV-1a over a canonical rendering
  std::ostringstream os;
  os << spec.input_dim << '|';
  for (int h : spec.hidden_dims) os << h << ',';
  os << '|' << spec.output_dim << '|' << activation_name(spec.activation) << '|' << spec.seed;
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

NetworkParams net_init(const NetworkSpec& spec) {
  if (spec.input_dim < 1 || spec.output_dim < 1)
    throw ConfigError("network dims must be >= 1");
  if (spec.hidden_dims.empty()) throw ConfigError("hidden_dims must be non-empty");
  for (int h : spec.hidden_dims)
    if (h < 1) throw ConfigError("hidden dims must be >= 1");

  std::vector<int> dims;
  dims.push_back(spec.input_dim);
  dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  dims.push_back(spec.output_dim);

  NetworkParams params;
  params.activation = spec.activation;
  params.hash = spec_hash(spec);
  params.layers.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    StreamRng rng(spec.seed, stream::kNetInit, l);
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Layer layer;
    layer.w.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.w(r, c) = scale * rng.normal();
    layer.b = Eigen::VectorXd::Zero(fan_out);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

std::size_t param_count(const NetworkParams& params) {
  std::size_t n = 0;
  for (const Layer& layer : params.layers)
    n += static_cast<std::size_t>(layer.w.size()) + static_cast<std::size_t>(layer.b.size());
  return n;
}

Eigen::MatrixXd net_forward_batch(const NetworkParams& params, const Eigen::MatrixXd& xs) {
  check_consistent(params, xs.rows());
  Eigen::MatrixXd h = xs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const Layer& layer = params.layers[l];
    Eigen::MatrixXd z = (layer.w * h).colwise() + layer.b;
    h = (l + 1 < params.layers.size()) ? apply_activation(params.activation, z) : std::move(z);
  }
  return h;
}

Eigen::VectorXd net_forward(const NetworkParams& params, const Eigen::VectorXd& x) {
  return net_forward_batch(params, x);
}

BackwardResult net_backward_batch(const NetworkParams& params, const Eigen::MatrixXd& xs,
                                  const Eigen::MatrixXd& upstream) {
  check_consistent(params, xs.rows());
  const std::size_t nlayers = params.layers.size();
  if (upstream.rows() != params.layers.back().w.rows() || upstream.cols() != xs.cols())
    throw DimensionError("upstream shape mismatch");

  // forward, caching inputs of every layer and pre-activations of hidden layers
  std::vector<Eigen::MatrixXd> inputs(nlayers);
  std::vector<Eigen::MatrixXd> preacts(nlayers);
  Eigen::MatrixXd h = xs;
  for (std::size_t l = 0; l < nlayers; ++l) {
    inputs[l] = h;
    const Layer& layer = params.layers[l];
    preacts[l] = (layer.w * h).colwise() + layer.b;
    h = (l + 1 < nlayers) ? apply_activation(params.activation, preacts[l]) : preacts[l];
  }

  BackwardResult out;
  out.param_grads.resize(nlayers);
  Eigen::MatrixXd dz = upstream;  // output layer is linear
  for (std::size_t l = nlayers; l-- > 0;) {
    out.param_grads[l].w = dz * inputs[l].transpose();
    out.param_grads[l].b = dz.rowwise().sum();
    Eigen::MatrixXd dh = params.layers[l].w.transpose() * dz;
    if (l > 0) dz = dh.cwiseProduct(activation_deriv(params.activation, preacts[l - 1]));
    else out.input_grads = std::move(dh);
  }
  return out;
}

BackwardSingle net_backward(const NetworkParams& params, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& upstream) {
  BackwardResult batch = net_backward_batch(params, x, upstream);
  return {std::move(batch.param_grads), batch.input_grads.col(0)};
}

OptimizerState adam_init(const NetworkParams& params, double lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  OptimizerState opt;
  opt.lr = lr;
  opt.m.resize(params.layers.size());
  opt.v.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    opt.m[l].w = Eigen::MatrixXd::Zero(params.layers[l].w.rows(), params.layers[l].w.cols());
    opt.m[l].b = Eigen::VectorXd::Zero(params.layers[l].b.size());
    opt.v[l] = opt.m[l];
  }
  return opt;
}

void adam_step(NetworkParams& params, OptimizerState& opt, const LayerGrads& grads) {
  if (grads.size() != params.layers.size()) throw DimensionError("grad/param layer mismatch");
  for (const Layer& g : grads)
    if (!g.w.allFinite() || !g.b.allFinite()) throw NumericError("non-finite gradient");

  opt.step_count += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto update = [&](Eigen::Ref<Eigen::MatrixXd> p, Eigen::Ref<Eigen::MatrixXd> m,
                      Eigen::Ref<Eigen::MatrixXd> v, const Eigen::MatrixXd& g) {
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
      const Eigen::ArrayXXd mhat = m.array() / bc1;
      const Eigen::ArrayXXd vhat = v.array() / bc2;
      p.array() -= opt.lr * mhat / (vhat.sqrt() + opt.eps);
    };
    update(params.layers[l].w, opt.m[l].w, opt.v[l].w, grads[l].w);
    update(params.layers[l].b, opt.m[l].b, opt.v[l].b, grads[l].b);
  }
}

// ---- checkpoint io ---------------------------------------------------------

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  json doc;
  doc["format_version"] = 1;
  doc["kind"] = ckpt.kind;
  doc["spec"] = {{"input_dim", ckpt.spec.input_dim},
                 {"hidden_dims", ckpt.spec.hidden_dims},
                 {"output_dim", ckpt.spec.output_dim},
                 {"activation", activation_name(ckpt.spec.activation)},
                 {"seed", ckpt.spec.seed}};
  if (!ckpt.extras.empty()) doc["extras"] = ckpt.extras;
  json layers = json::array();
  for (const Layer& layer : ckpt.params.layers) {
    std::vector<double> flat(static_cast<std::size_t>(layer.w.size()));
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c)
        flat[static_cast<std::size_t>(r * layer.w.cols() + c)] = layer.w(r, c);
    std::vector<double> bias(layer.b.data(), layer.b.data() + layer.b.size());
    layers.push_back({{"rows", layer.w.rows()},
                      {"cols", layer.w.cols()},
                      {"weights", flat},
                      {"bias", bias}});
  }
  doc["layers"] = std::move(layers);
  return doc.dump(2);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad checkpoint: ") + e.what());
  }
  if (doc.value("format_version", 0) != 1) throw ConfigError("unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.kind = doc.value("kind", "");
  const json& spec = doc.at("spec");
  ckpt.spec.input_dim = spec.at("input_dim").get<int>();
  ckpt.spec.hidden_dims = spec.at("hidden_dims").get<std::vector<int>>();
  ckpt.spec.output_dim = spec.at("output_dim").get<int>();
  ckpt.spec.activation = activation_from_name(spec.at("activation").get<std::string>());
  ckpt.spec.seed = spec.at("seed").get<std::uint64_t>();
  if (doc.contains("extras"))
    ckpt.extras = doc.at("extras").get<std::map<std::string, double>>();

  ckpt.params.activation = ckpt.spec.activation;
  ckpt.params.hash = spec_hash(ckpt.spec);
  for (const json& jl : doc.at("layers")) {
    const Eigen::Index rows = jl.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = jl.at("cols").get<Eigen::Index>();
    const auto flat = jl.at("weights").get<std::vector<double>>();
    const auto bias = jl.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != rows * cols ||
        static_cast<Eigen::Index>(bias.size()) != rows)
      throw DimensionError("checkpoint layer shape mismatch");
    Layer layer;
    layer.w.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        layer.w(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
    layer.b = Eigen::Map<const Eigen::VectorXd>(bias.data(), rows);
    ckpt.params.layers.push_back(std::move(layer));
  }
  check_consistent(ckpt.params, ckpt.spec.input_dim);
  if (ckpt.params.layers.back().w.rows() != ckpt.spec.output_dim)
    throw DimensionError("checkpoint output dim mismatch");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  f << checkpoint_to_json(ckpt);
  f << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace carflow
