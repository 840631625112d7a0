// Copyright 2026 The PEAR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pear/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pear/random.hpp"

namespace pear::nn {

std::string to_string(Activation a) {
  return a == Activation::Relu ? "relu" : "softplus";
}

std::string to_string(ModelKind k) {
  return k == ModelKind::Mlp ? "mlp" : "linear";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "softplus") return Activation::Softplus;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "mlp") return ModelKind::Mlp;
  if (s == "linear") return ModelKind::Linear;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

void MLPConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("MLPConfig: input_dim is 0");
  if (output_dim < 2) {
    throw std::invalid_argument("MLPConfig: output_dim must be at least 2");
  }
  for (auto h : hidden) {
    if (h == 0) throw std::invalid_argument("MLPConfig: hidden width is 0");
  }
}

MLPConfig linear_config(std::size_t input_dim, std::uint64_t seed) {
  MLPConfig c;
  c.input_dim = input_dim;
  c.hidden.clear();
  c.seed = seed;
  return c;
}

std::vector<ad::Tensor> Parameters::flatten() const {
  std::vector<ad::Tensor> out;
  out.reserve(2 * layers.size());
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

Parameters Parameters::unflatten(std::span<const ad::Tensor> flat) {
  if (flat.size() % 2 != 0) {
    throw std::invalid_argument("Parameters: odd number of tensors");
  }
  Parameters p;
  for (std::size_t i = 0; i < flat.size(); i += 2) {
    p.layers.push_back({flat[i], flat[i + 1]});
  }
  return p;
}

Parameters Parameters::attach(ad::Graph& graph) const {
  Parameters p;
  for (const auto& l : layers) {
    p.layers.push_back({graph.variable(l.weight.detach()),
                        graph.variable(l.bias.detach())});
  }
  return p;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Parameters init_parameters(const MLPConfig& config) {
  config.validate();
  Rng rng = make_rng(config.seed, 0x1a17);
  std::vector<std::size_t> widths{config.input_dim};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(config.output_dim);

  Parameters p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l];
    const std::size_t fan_out = widths[l + 1];
    const double bound = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = dist(rng);
    p.layers.push_back({ad::Tensor({fan_in, fan_out}, std::move(w)),
                        ad::Tensor::zeros({1, fan_out})});
  }
  return p;
}

Model make_model(const MLPConfig& config) {
  return {config, init_parameters(config)};
}

ad::Tensor forward(const MLPConfig& config, const Parameters& params,
                   const ad::Tensor& x) {
  if (x.cols() != config.input_dim) {
    throw ad::ShapeError("forward: input width " + std::to_string(x.cols()) +
                         " does not match input_dim " +
                         std::to_string(config.input_dim));
  }
  ad::Tensor h = x;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    h = ad::matmul(h, params.layers[l].weight) + params.layers[l].bias;
    if (l + 1 == params.layers.size()) break;
    if (config.activation == Activation::Relu) {
      h = ad::relu(h);
    } else {
      // softplus(h) = relu(h) + log(1 + exp(-|h|))
      h = ad::relu(h) +
          ad::log(ad::exp(-ad::abs(h)) + ad::Tensor::scalar(1.0));
    }
  }
  return h;
}

std::vector<std::size_t> argmax_rows(const ad::Tensor& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row_values(r);
    out[r] = static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::vector<std::size_t> predict(const Model& model, const ad::Tensor& x) {
  ad::NoGradGuard guard;
  constexpr std::size_t kChunk = 4096;
  std::vector<std::size_t> out;
  out.reserve(x.rows());
  for (std::size_t begin = 0; begin < x.rows(); begin += kChunk) {
    const std::size_t end = std::min(x.rows(), begin + kChunk);
    const auto part = argmax_rows(
        model.logits(begin == 0 && end == x.rows()
                         ? x.detach()
                         : ad::slice_rows(x.detach(), begin, end)));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

double accuracy(const Model& model, const data::Examples& examples) {
  if (examples.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  const auto pred = predict(model, examples.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    correct += pred[i] == examples.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

ad::Tensor cross_entropy(const ad::Tensor& logits,
                         std::span<const std::size_t> labels) {
  if (labels.size() != logits.rows()) {
    throw ad::ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + ad::to_string(logits.shape()));
  }
  const std::size_t classes = logits.cols();
  std::vector<std::size_t> idx(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw std::out_of_range("cross_entropy: label " +
                              std::to_string(labels[i]) + " at row " +
                              std::to_string(i) + " outside [0, " +
                              std::to_string(classes) + ")");
    }
    idx[i] = i * classes + labels[i];
  }
  const ad::Tensor picked =
      ad::gather(ad::log_softmax(logits), std::move(idx), {labels.size(), 1});
  return -ad::mean(picked);
}

OptimizerState make_optimizer(const Parameters& params, double learning_rate,
                              double weight_decay) {
  OptimizerState s;
  s.learning_rate = learning_rate;
  s.weight_decay = weight_decay;
  for (const auto& t : params.flatten()) {
    s.first_moment.emplace_back(t.size(), 0.0);
    s.second_moment.emplace_back(t.size(), 0.0);
  }
  return s;
}

void adamw_step(OptimizerState& state, Parameters& params,
                std::span<const ad::Tensor> grads) {
  auto flat = params.flatten();
  if (grads.size() != flat.size() || state.first_moment.size() != flat.size()) {
    throw ad::ShapeError("adamw_step: " + std::to_string(grads.size()) +
                         " gradients for " + std::to_string(flat.size()) +
                         " parameter tensors");
  }
  for (std::size_t k = 0; k < flat.size(); ++k) {
    if (grads[k].shape() != flat[k].shape()) {
      throw ad::ShapeError("adamw_step: gradient " + std::to_string(k) +
                           " has shape " + ad::to_string(grads[k].shape()) +
                           ", parameter has " + ad::to_string(flat[k].shape()));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  const double decay = 1.0 - state.learning_rate * state.weight_decay;

  for (std::size_t k = 0; k < flat.size(); ++k) {
    auto p = flat[k].to_vector();
    const auto g = grads[k].values();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= decay;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
    flat[k] = ad::Tensor(flat[k].shape(), std::move(p));
  }
  params = Parameters::unflatten(flat);
}

std::size_t default_epochs(ModelKind kind, double lambda) {
  if (kind == ModelKind::Linear) return 10;
  return (lambda == 0.0 || lambda == 0.25) ? 30 : 50;
}

double default_learning_rate(ModelKind kind) {
  return kind == ModelKind::Linear ? 0.1 : 5e-4;
}

LossFn task_loss() {
  return [](const Model& live, const ad::Tensor& x,
            std::span<const std::size_t> labels) {
    LossParts parts;
    parts.total = cross_entropy(live.logits(x), labels);
    parts.task = parts.total.item();
    return parts;
  };
}

TrainError::TrainError(std::size_t epoch, std::size_t batch,
                       const std::string& what)
    : std::runtime_error("epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch) + ": " + what),
      epoch_(epoch),
      batch_(batch) {}

TrainResult train(Model model, const data::Examples& train_set,
                  const data::Examples& test_set, const TrainOptions& options,
                  const LossFn& loss) {
  if (train_set.size() == 0) throw std::invalid_argument("train: empty train set");
  if (options.batch_size == 0) throw std::invalid_argument("train: batch size 0");

  TrainResult result;
  auto state = make_optimizer(model.params, options.learning_rate,
                              options.weight_decay);
  std::vector<std::size_t> order(train_set.size());
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(options.shuffle_seed, epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }

    double task_total = 0.0;
    double consensus_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += options.batch_size, ++batches) {
      const std::size_t end = std::min(order.size(), begin + options.batch_size);
      const auto batch = train_set.rows(
          std::span<const std::size_t>(order).subspan(begin, end - begin));
      try {
        ad::Graph graph;
        const Model live{model.config, model.params.attach(graph)};
        const LossParts parts = loss(live, batch.features, batch.labels);
        const auto leaves = live.params.flatten();
        const auto grads = ad::gradient(parts.total, leaves);
        adamw_step(state, model.params, grads);

        task_total += parts.task;
        consensus_total += parts.consensus;
        if (options.record_steps) {
          result.history.steps.push_back({step, parts.task, parts.consensus,
                                          parts.mean_pearson,
                                          parts.mean_spearman});
        }
      } catch (const std::exception& e) {
        throw TrainError(epoch, batches, e.what());
      }
      ++step;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.task_loss = task_total / static_cast<double>(batches);
    rec.consensus_loss = consensus_total / static_cast<double>(batches);
    rec.train_accuracy = accuracy(model, train_set);
    if (test_set.size() > 0) rec.test_accuracy = accuracy(model, test_set);
    result.history.epochs.push_back(rec);
  }
  result.model = std::move(model);
  return result;
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN()
                     : j.get<double>();
}

}  // namespace

nlohmann::json checkpoint_json(const Model& model, const History& history) {
  nlohmann::json j;
  const auto& c = model.config;
  j["config"] = {{"input_dim", c.input_dim},
                 {"hidden", c.hidden},
                 {"output_dim", c.output_dim},
                 {"activation", to_string(c.activation)},
                 {"seed", c.seed}};
  j["seed"] = c.seed;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.params.layers) {
    layers.push_back({{"weight_shape", {l.weight.rows(), l.weight.cols()}},
                      {"weight", l.weight.to_vector()},
                      {"bias", l.bias.to_vector()}});
  }
  j["layers"] = layers;

  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : history.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"task_loss", number_or_null(e.task_loss)},
                      {"consensus_loss", number_or_null(e.consensus_loss)},
                      {"train_accuracy", number_or_null(e.train_accuracy)},
                      {"test_accuracy", number_or_null(e.test_accuracy)}});
  }
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : history.steps) {
    steps.push_back({s.step, number_or_null(s.task), number_or_null(s.consensus),
                     number_or_null(s.mean_pearson),
                     number_or_null(s.mean_spearman)});
  }
  j["history"] = {{"epochs", epochs}, {"steps", steps}};
  return j;
}

Model model_from_checkpoint(const nlohmann::json& j) {
  Model m;
  const auto& c = j.at("config");
  m.config.input_dim = c.at("input_dim").get<std::size_t>();
  m.config.hidden = c.at("hidden").get<std::vector<std::size_t>>();
  m.config.output_dim = c.at("output_dim").get<std::size_t>();
  m.config.activation = activation_from_string(c.at("activation").get<std::string>());
  m.config.seed = c.at("seed").get<std::uint64_t>();
  m.config.validate();

  std::vector<std::size_t> widths{m.config.input_dim};
  widths.insert(widths.end(), m.config.hidden.begin(), m.config.hidden.end());
  widths.push_back(m.config.output_dim);
  const auto& layers = j.at("layers");
  if (layers.size() + 1 != widths.size()) {
    throw std::invalid_argument("checkpoint: layer count does not match config");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto shape = layers[l].at("weight_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != widths[l] || shape[1] != widths[l + 1]) {
      throw std::invalid_argument("checkpoint: layer " + std::to_string(l) +
                                  " shape does not match config");
    }
    m.params.layers.push_back(
        {ad::Tensor({shape[0], shape[1]},
                    layers[l].at("weight").get<std::vector<double>>()),
         ad::Tensor({1, shape[1]}, layers[l].at("bias").get<std::vector<double>>())});
  }
  return m;
}

History history_from_checkpoint(const nlohmann::json& j) {
  History h;
  if (!j.contains("history")) return h;
  for (const auto& e : j["history"].at("epochs")) {
    h.epochs.push_back({e.at("epoch").get<std::size_t>(),
                        number_or_nan(e.at("task_loss")),
                        number_or_nan(e.at("consensus_loss")),
                        number_or_nan(e.at("train_accuracy")),
                        number_or_nan(e.at("test_accuracy"))});
  }
  for (const auto& s : j["history"].at("steps")) {
    h.steps.push_back({s.at(0).get<std::size_t>(), number_or_nan(s.at(1)),
                       number_or_nan(s.at(2)), number_or_nan(s.at(3)),
                       number_or_nan(s.at(4))});
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const History& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_json(model, history).dump() << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return model_from_checkpoint(nlohmann::json::parse(in));
}

}  // namespace pear::nn
