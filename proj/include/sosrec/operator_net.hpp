#pragma once

// Unstacked DeepONet written from scratch: one branch network encoding the
// input functions at fixed sensors, one trunk network encoding the output
// time, combined as sum_k b_k T_k + b0. Gradients are explicit
// backpropagation; a central-difference gradient is kept as an oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sosrec/errors.hpp"
#include "sosrec/io.hpp"
#include "sosrec/random.hpp"

namespace sosrec {

enum class Activation { tanh, relu };

inline std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
};

/// Fully connected network; the activation applies to hidden layers only.
class DenseNetwork {
 public:
  DenseNetwork() = default;

  /// All-zero parameters with the given layer sizes.
  static DenseNetwork zeros(std::vector<std::size_t> sizes, Activation act) {
    if (sizes.size() < 2) throw ConfigError("a network needs input and output sizes");
    for (auto s : sizes)
      if (s == 0) throw ConfigError("layer sizes must be >= 1");
    DenseNetwork net;
    net.sizes_ = std::move(sizes);
    net.activation_ = act;
    for (std::size_t l = 0; l + 1 < net.sizes_.size(); ++l) {
      const auto in = static_cast<Eigen::Index>(net.sizes_[l]);
      const auto out = static_cast<Eigen::Index>(net.sizes_[l + 1]);
      net.layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    }
    return net;
  }

  /// Glorot-uniform weights drawn row-major layer by layer, zero biases.
  static DenseNetwork glorot(std::vector<std::size_t> sizes, Activation act, Rng& rng) {
    DenseNetwork net = zeros(std::move(sizes), act);
    for (auto& layer : net.layers_) {
      const double limit = glorot_limit(layer);
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
          layer.weights(r, c) = limit * (2.0 * uniform01(rng) - 1.0);
    }
    return net;
  }

  static double glorot_limit(const DenseLayer& layer) {
    return std::sqrt(6.0 / static_cast<double>(layer.weights.rows() + layer.weights.cols()));
  }

  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  Activation activation() const { return activation_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
  }

  /// Activations of every layer for a batch of column inputs.
  struct Trace {
    std::vector<Eigen::MatrixXd> outputs;  // outputs[0] is the input
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Trace* trace = nullptr) const {
    if (static_cast<std::size_t>(x.rows()) != input_dim()) throw ShapeError("network input dimension mismatch");
    Eigen::MatrixXd a = x;
    if (trace) {
      trace->outputs.clear();
      trace->outputs.push_back(a);
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Eigen::MatrixXd z = layers_[l].weights * a;
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) {
        if (activation_ == Activation::tanh) z = z.array().tanh();
        else z = z.cwiseMax(0.0);
      }
      a = std::move(z);
      if (trace) trace->outputs.push_back(a);
    }
    return a;
  }

  /// Accumulates parameter gradients into `grad` (same shape) given the
  /// loss gradient with respect to the network output.
  void backward(const Trace& trace, Eigen::MatrixXd d_out, DenseNetwork& grad) const {
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const auto& input = trace.outputs[l];
      grad.layers_[l].weights.noalias() += d_out * input.transpose();
      grad.layers_[l].bias += d_out.rowwise().sum();
      if (l == 0) break;
      Eigen::MatrixXd d_in = layers_[l].weights.transpose() * d_out;
      if (activation_ == Activation::tanh) d_in.array() *= 1.0 - input.array().square();
      else d_in.array() *= (input.array() > 0.0).cast<double>();
      d_out = std::move(d_in);
    }
  }

  void write_parameters(double*& out) const {
    for (const auto& l : layers_) {
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) *out++ = l.weights(r, c);
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) *out++ = l.bias(r);
    }
  }

  void read_parameters(const double*& in) {
    for (auto& l : layers_) {
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = *in++;
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = *in++;
    }
  }

 private:
  std::vector<std::size_t> sizes_;
  Activation activation_ = Activation::tanh;
  std::vector<DenseLayer> layers_;
};

/// G(u)(y) ~ branch(u) . trunk(y) + b0. The trunk sees y / t_end; `sensors`
/// records where the branch inputs were sampled.
struct DeepONetModel {
  DenseNetwork branch;
  DenseNetwork trunk;
  double b0 = 0.0;
  std::size_t n_systems = 1;
  std::vector<double> sensors;
  double t_end = 1.0;

  std::size_t p() const { return branch.output_dim(); }
  std::size_t branch_input_dim() const { return branch.input_dim(); }

  std::size_t parameter_count() const { return branch.parameter_count() + trunk.parameter_count() + 1; }

  /// Flat parameters: branch then trunk, each layer's weights row-major
  /// followed by its bias, then b0.
  Eigen::VectorXd parameters() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(parameter_count()));
    double* out = v.data();
    branch.write_parameters(out);
    trunk.write_parameters(out);
    *out = b0;
    return v;
  }

  void set_parameters(const Eigen::VectorXd& v) {
    if (static_cast<std::size_t>(v.size()) != parameter_count()) throw ShapeError("parameter vector length mismatch");
    const double* in = v.data();
    branch.read_parameters(in);
    trunk.read_parameters(in);
    b0 = *in;
  }
};

struct NetworkShape {
  std::size_t n_systems = 4;
  std::size_t m = 50;
  std::size_t p = 40;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::tanh;
};

/// Glorot-initialized model with b0 = 0; branch draws precede trunk draws.
inline DeepONetModel init_model(const NetworkShape& shape, std::uint64_t seed) {
  if (shape.n_systems == 0 || shape.m == 0 || shape.p == 0) throw ConfigError("network dimensions must be >= 1");
  std::vector<std::size_t> branch_sizes{shape.n_systems * shape.m};
  std::vector<std::size_t> trunk_sizes{1};
  for (auto h : shape.hidden) {
    branch_sizes.push_back(h);
    trunk_sizes.push_back(h);
  }
  branch_sizes.push_back(shape.p);
  trunk_sizes.push_back(shape.p);
  Rng rng = make_rng(seed);
  DeepONetModel model;
  model.branch = DenseNetwork::glorot(branch_sizes, shape.activation, rng);
  model.trunk = DenseNetwork::glorot(trunk_sizes, shape.activation, rng);
  model.n_systems = shape.n_systems;
  return model;
}

/// Same layout as init_model with every parameter zero.
inline DeepONetModel zero_model(const NetworkShape& shape) {
  DeepONetModel model = init_model(shape, 0);
  model.set_parameters(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count())));
  return model;
}

/// Prediction for one input-function vector at normalized time y.
inline double forward(const DeepONetModel& model, std::span<const double> branch_in, double y) {
  if (branch_in.size() != model.branch_input_dim())
    throw ShapeError("branch input has " + std::to_string(branch_in.size()) + " values, model expects " +
                     std::to_string(model.branch_input_dim()));
  const Eigen::Map<const Eigen::VectorXd> x(branch_in.data(), static_cast<Eigen::Index>(branch_in.size()));
  const Eigen::MatrixXd b = model.branch.forward(x);
  const Eigen::MatrixXd t = model.trunk.forward(Eigen::MatrixXd::Constant(1, 1, y));
  return b.col(0).dot(t.col(0)) + model.b0;
}

/// Training/evaluation samples sharing one sensor grid. Row k of
/// branch_inputs holds system 1 at every sensor, then system 2, and so on.
struct OperatorDataset {
  std::vector<double> sensors;
  double t_end = 1.0;
  std::size_t n_systems = 1;
  Eigen::MatrixXd branch_inputs;                   // samples x (n_systems * m)
  std::vector<std::vector<double>> output_times;   // physical times per sample
  std::vector<std::vector<double>> targets;        // G(u)(y) per output time
  std::vector<std::vector<double>> target_stderr;  // optional, may be empty

  std::size_t n_samples() const { return static_cast<std::size_t>(branch_inputs.rows()); }

  std::size_t n_pairs() const {
    std::size_t n = 0;
    for (const auto& t : targets) n += t.size();
    return n;
  }

  void validate() const {
    if (n_samples() == 0 || n_pairs() == 0) throw DataError("dataset is empty");
    if (static_cast<std::size_t>(branch_inputs.cols()) != n_systems * sensors.size())
      throw ShapeError("branch input width must equal n_systems * sensor count");
    if (output_times.size() != n_samples() || targets.size() != n_samples())
      throw ShapeError("per-sample output lists must match the sample count");
    for (std::size_t k = 0; k < n_samples(); ++k)
      if (output_times[k].size() != targets[k].size()) throw ShapeError("output times / targets length mismatch");
  }
};

namespace detail {

/// Dataset in network-ready form: branch columns, unique normalized trunk
/// coordinates and the (sample, trunk column) index of every target.
struct PreparedBatch {
  Eigen::MatrixXd branch_x;  // in x samples
  Eigen::MatrixXd trunk_x;   // 1 x unique times
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  Eigen::VectorXd targets;

  static PreparedBatch from(const OperatorDataset& data) {
    data.validate();
    PreparedBatch b;
    b.branch_x = data.branch_inputs.transpose();
    std::map<double, std::size_t> columns;
    for (const auto& times : data.output_times)
      for (double t : times) columns.emplace(t, 0);
    b.trunk_x.resize(1, static_cast<Eigen::Index>(columns.size()));
    std::size_t c = 0;
    for (auto& [t, idx] : columns) {
      idx = c;
      b.trunk_x(0, static_cast<Eigen::Index>(c++)) = t / data.t_end;
    }
    b.targets.resize(static_cast<Eigen::Index>(data.n_pairs()));
    Eigen::Index row = 0;
    for (std::size_t k = 0; k < data.n_samples(); ++k)
      for (std::size_t i = 0; i < data.output_times[k].size(); ++i) {
        b.pairs.emplace_back(k, columns.at(data.output_times[k][i]));
        b.targets(row++) = data.targets[k][i];
      }
    return b;
  }
};

struct Evaluation {
  double loss = 0.0;
  Eigen::VectorXd predictions;
};

inline Evaluation evaluate_batch(const DeepONetModel& model, const PreparedBatch& batch,
                                 Eigen::VectorXd* gradient) {
  if (static_cast<std::size_t>(batch.branch_x.rows()) != model.branch_input_dim())
    throw ShapeError("dataset branch width does not match the model");
  DenseNetwork::Trace branch_trace, trunk_trace;
  const Eigen::MatrixXd B = model.branch.forward(batch.branch_x, gradient ? &branch_trace : nullptr);
  const Eigen::MatrixXd T = model.trunk.forward(batch.trunk_x, gradient ? &trunk_trace : nullptr);
  if (B.rows() != T.rows()) throw ShapeError("branch and trunk output dimensions differ");

  const auto n_pairs = static_cast<Eigen::Index>(batch.pairs.size());
  Evaluation ev;
  ev.predictions.resize(n_pairs);
  for (Eigen::Index i = 0; i < n_pairs; ++i) {
    const auto [k, c] = batch.pairs[static_cast<std::size_t>(i)];
    ev.predictions(i) = B.col(static_cast<Eigen::Index>(k)).dot(T.col(static_cast<Eigen::Index>(c))) + model.b0;
  }
  const Eigen::VectorXd residual = ev.predictions - batch.targets;
  ev.loss = residual.squaredNorm() / static_cast<double>(n_pairs);

  if (gradient) {
    const Eigen::VectorXd e = residual * (2.0 / static_cast<double>(n_pairs));
    Eigen::MatrixXd dB = Eigen::MatrixXd::Zero(B.rows(), B.cols());
    Eigen::MatrixXd dT = Eigen::MatrixXd::Zero(T.rows(), T.cols());
    for (Eigen::Index i = 0; i < n_pairs; ++i) {
      const auto [k, c] = batch.pairs[static_cast<std::size_t>(i)];
      const auto kk = static_cast<Eigen::Index>(k), cc = static_cast<Eigen::Index>(c);
      dB.col(kk) += e(i) * T.col(cc);
      dT.col(cc) += e(i) * B.col(kk);
    }
    DeepONetModel g = model;
    g.set_parameters(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_count())));
    model.branch.backward(branch_trace, std::move(dB), g.branch);
    model.trunk.backward(trunk_trace, std::move(dT), g.trunk);
    g.b0 = e.sum();
    *gradient = g.parameters();
  }
  return ev;
}

}  // namespace detail

/// Mean squared error over every (sample, output time) pair.
inline double mse_loss(const DeepONetModel& model, const OperatorDataset& data) {
  return detail::evaluate_batch(model, detail::PreparedBatch::from(data), nullptr).loss;
}

/// Predictions in dataset order (sample-major, then output time).
inline Eigen::VectorXd predict_pairs(const DeepONetModel& model, const OperatorDataset& data) {
  return detail::evaluate_batch(model, detail::PreparedBatch::from(data), nullptr).predictions;
}

/// Exact gradient of mse_loss in the flat parameter order of DeepONetModel.
inline Eigen::VectorXd grad_loss(const DeepONetModel& model, const OperatorDataset& data) {
  Eigen::VectorXd g;
  detail::evaluate_batch(model, detail::PreparedBatch::from(data), &g);
  return g;
}

/// Central differences of mse_loss, one parameter at a time.
inline Eigen::VectorXd finite_diff_grad(const DeepONetModel& model, const OperatorDataset& data, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite-difference step must be > 0");
  const auto batch = detail::PreparedBatch::from(data);
  const Eigen::VectorXd theta = model.parameters();
  Eigen::VectorXd g(theta.size());
  DeepONetModel probe = model;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd shifted = theta;
    shifted(i) = theta(i) + eps;
    probe.set_parameters(shifted);
    const double up = detail::evaluate_batch(probe, batch, nullptr).loss;
    shifted(i) = theta(i) - eps;
    probe.set_parameters(shifted);
    const double down = detail::evaluate_batch(probe, batch, nullptr).loss;
    g(i) = (up - down) / (2.0 * eps);
  }
  return g;
}

enum class Optimizer { adam, sgd };

inline std::string_view to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd"; }

inline Optimizer parse_optimizer(std::string_view s) {
  if (s == "adam") return Optimizer::adam;
  if (s == "sgd") return Optimizer::sgd;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

/// Full-batch training settings.
struct TrainingConfig {
  double learning_rate = 1e-3;
  std::size_t iterations = 50'000;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t record_every = 1000;
  // Inverse-time decay: step size learning_rate / (1 + it / decay_steps); 0 disables it.
  double decay_steps = 5000.0;

  double rate_at(std::size_t it) const {
    return decay_steps > 0.0 ? learning_rate / (1.0 + static_cast<double>(it) / decay_steps) : learning_rate;
  }

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
    if (iterations < 1) throw ConfigError("iterations must be >= 1");
    if (record_every < 1) throw ConfigError("record_every must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("adam decay rates must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
    if (!(decay_steps >= 0.0) || !std::isfinite(decay_steps)) throw ConfigError("decay_steps must be >= 0");
  }
};

struct LossRecord {
  std::size_t iteration = 0;
  double train_loss = 0.0;
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double best_train_loss = 0.0;  // minimum over every iteration so far
};

struct TrainingResult {
  DeepONetModel model;
  std::vector<LossRecord> history;
  std::size_t best_iteration = 0;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::vector<LossRecord> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<LossRecord>& history() const { return history_; }

 private:
  std::vector<LossRecord> history_;
};

/// Full-batch gradient descent. The history holds iteration 0, every
/// `record_every`-th iteration and the last one; the returned model is the
/// iterate with the lowest training loss seen.
inline TrainingResult train(DeepONetModel model, const OperatorDataset& data, const OperatorDataset* test_data,
                            const TrainingConfig& cfg) {
  cfg.validate();
  const auto batch = detail::PreparedBatch::from(data);
  std::optional<detail::PreparedBatch> test_batch;
  if (test_data) test_batch = detail::PreparedBatch::from(*test_data);

  TrainingResult result;
  Eigen::VectorXd theta = model.parameters();
  Eigen::VectorXd best_theta = theta;
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd grad;
  double best = std::numeric_limits<double>::infinity();
  double beta1_t = 1.0, beta2_t = 1.0;

  auto record = [&](std::size_t it, double loss) {
    LossRecord r{it, loss, std::numeric_limits<double>::quiet_NaN(), best};
    if (test_batch) r.test_loss = detail::evaluate_batch(model, *test_batch, nullptr).loss;
    result.history.push_back(r);
  };

  for (std::size_t it = 0;; ++it) {
    model.set_parameters(theta);
    const bool last = it == cfg.iterations;
    const double loss = detail::evaluate_batch(model, batch, last ? nullptr : &grad).loss;
    if (!std::isfinite(loss)) {
      throw TrainingError("training diverged at iteration " + std::to_string(it) + " (non-finite loss)",
                          std::move(result.history));
    }
    if (loss < best) {
      best = loss;
      best_theta = theta;
      result.best_iteration = it;
    }
    if (it % cfg.record_every == 0 || last) record(it, loss);
    if (last) break;

    if (cfg.optimizer == Optimizer::adam) {
      beta1_t *= cfg.beta1;
      beta2_t *= cfg.beta2;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseAbs2();
      const double step = cfg.rate_at(it) * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
      theta.array() -= step * m1.array() / (m2.array().sqrt() + cfg.epsilon * std::sqrt(1.0 - beta2_t));
    } else {
      theta -= cfg.rate_at(it) * grad;
    }
  }
  model.set_parameters(best_theta);
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint JSON

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json network_to_json(const DenseNetwork& net) {
  nlohmann::json j;
  j["layer_sizes"] = net.sizes();
  j["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    j["layers"].push_back({{"weights", w}, {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return j;
}

inline DenseNetwork network_from_json(const nlohmann::json& j, Activation act) {
  DenseNetwork net = DenseNetwork::zeros(j.at("layer_sizes").get<std::vector<std::size_t>>(), act);
  const auto& layers = j.at("layers");
  if (layers.size() != net.layers().size()) throw DataError("checkpoint layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& layer = net.layers()[l];
    const auto w = layers[l].at("weights").get<std::vector<double>>();
    const auto b = layers[l].at("bias").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(layer.weights.size()) || b.size() != static_cast<std::size_t>(layer.bias.size()))
      throw DataError("checkpoint layer shape mismatch");
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = w[i++];
    for (std::size_t r = 0; r < b.size(); ++r) layer.bias(static_cast<Eigen::Index>(r)) = b[r];
  }
  return net;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const DeepONetModel& model) {
  nlohmann::json j;
  j["format"] = "deeponet-checkpoint";
  j["version"] = kCheckpointVersion;
  j["activation"] = std::string(to_string(model.branch.activation()));
  j["p"] = model.p();
  j["b0"] = model.b0;
  j["n_systems"] = model.n_systems;
  j["t_end"] = model.t_end;
  j["sensors"] = model.sensors;
  j["branch"] = detail::network_to_json(model.branch);
  j["trunk"] = detail::network_to_json(model.trunk);
  return j;
}

inline DeepONetModel checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
    const Activation act = parse_activation(j.at("activation").get<std::string>());
    DeepONetModel model;
    model.branch = detail::network_from_json(j.at("branch"), act);
    model.trunk = detail::network_from_json(j.at("trunk"), act);
    model.b0 = j.at("b0").get<double>();
    model.n_systems = j.at("n_systems").get<std::size_t>();
    model.t_end = j.at("t_end").get<double>();
    model.sensors = j.at("sensors").get<std::vector<double>>();
    if (model.branch.output_dim() != model.trunk.output_dim() || model.p() != j.at("p").get<std::size_t>())
      throw DataError("checkpoint branch/trunk output sizes disagree with p");
    if (model.branch.input_dim() != model.n_systems * model.sensors.size())
      throw DataError("checkpoint branch input size disagrees with sensors");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace sosrec
