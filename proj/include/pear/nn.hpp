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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pear/autodiff.hpp"
#include "pear/data.hpp"

namespace pear::nn {

enum class Activation : std::uint8_t { Relu, Softplus };

enum class ModelKind : std::uint8_t { Mlp, Linear };

std::string to_string(Activation a);
std::string to_string(ModelKind k);
Activation activation_from_string(const std::string& s);
ModelKind model_kind_from_string(const std::string& s);

struct MLPConfig {
  std::size_t input_dim = 0;
  // Empty hidden list gives a linear (logistic) model.
  std::vector<std::size_t> hidden{100, 100, 100};
  std::size_t output_dim = 2;
  Activation activation = Activation::Relu;
  std::uint64_t seed = 0;

  void validate() const;
};

MLPConfig linear_config(std::size_t input_dim, std::uint64_t seed);

struct Layer {
  ad::Tensor weight;  // fan_in x fan_out
  ad::Tensor bias;    // 1 x fan_out
};

struct Parameters {
  std::vector<Layer> layers;

  // weight0, bias0, weight1, bias1, ...
  std::vector<ad::Tensor> flatten() const;
  static Parameters unflatten(std::span<const ad::Tensor> flat);
  // Copy whose tensors are differentiable leaves of `graph`.
  Parameters attach(ad::Graph& graph) const;
  std::size_t count() const;
};

// Uniform(-a, a) weights with a = sqrt(2 / fan_in), zero biases.
Parameters init_parameters(const MLPConfig& config);

ad::Tensor forward(const MLPConfig& config, const Parameters& params,
                   const ad::Tensor& x);

struct Model {
  MLPConfig config;
  Parameters params;

  ad::Tensor logits(const ad::Tensor& x) const {
    return forward(config, params, x);
  }
  std::size_t input_dim() const noexcept { return config.input_dim; }
};

Model make_model(const MLPConfig& config);

// Index of the largest logit per row; ties go to the lower class.
std::vector<std::size_t> argmax_rows(const ad::Tensor& logits);
std::vector<std::size_t> predict(const Model& model, const ad::Tensor& x);
double accuracy(const Model& model, const data::Examples& examples);

// Mean negative log-likelihood. Throws std::out_of_range on a bad label.
ad::Tensor cross_entropy(const ad::Tensor& logits,
                         std::span<const std::size_t> labels);

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
  double learning_rate = 5e-4;
  double weight_decay = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

OptimizerState make_optimizer(const Parameters& params, double learning_rate,
                              double weight_decay);

// Decoupled weight decay followed by a bias-corrected Adam update.
void adamw_step(OptimizerState& state, Parameters& params,
                std::span<const ad::Tensor> grads);

// 30 epochs when lambda is 0 or 0.25, 50 otherwise; linear models use 10.
std::size_t default_epochs(ModelKind kind, double lambda);
double default_learning_rate(ModelKind kind);

struct LossParts {
  ad::Tensor total;
  double task = 0.0;
  double consensus = 0.0;
  double mean_pearson = std::numeric_limits<double>::quiet_NaN();
  double mean_spearman = std::numeric_limits<double>::quiet_NaN();
};

// Builds the loss for one minibatch. `live` has parameters attached to the
// step's graph.
using LossFn = std::function<LossParts(const Model& live, const ad::Tensor& x,
                                       std::span<const std::size_t> labels)>;

LossFn task_loss();

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 5e-4;
  double weight_decay = 2e-4;
  std::uint64_t shuffle_seed = 0;
  bool record_steps = true;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double task_loss = 0.0;
  double consensus_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct StepRecord {
  std::size_t step = 0;
  double task = 0.0;
  double consensus = 0.0;
  double mean_pearson = std::numeric_limits<double>::quiet_NaN();
  double mean_spearman = std::numeric_limits<double>::quiet_NaN();
};

struct History {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
};

class TrainError : public std::runtime_error {
 public:
  TrainError(std::size_t epoch, std::size_t batch, const std::string& what);
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

struct TrainResult {
  Model model;
  History history;
};

// Shuffled minibatch AdamW training. `test` may be empty.
TrainResult train(Model model, const data::Examples& train_set,
                  const data::Examples& test_set, const TrainOptions& options,
                  const LossFn& loss);

// Checkpoint: {config, seed, layers: [{weight, weight_shape, bias}], history}.
nlohmann::json checkpoint_json(const Model& model, const History& history);
Model model_from_checkpoint(const nlohmann::json& j);
History history_from_checkpoint(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const History& history);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace pear::nn
