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

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pear/consensus.hpp"
#include "pear/data.hpp"
#include "pear/explain.hpp"
#include "pear/metrics.hpp"
#include "pear/nn.hpp"

namespace pear::experiments {

// Carries every problem found in a configuration.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct DatasetConfig {
  // "synthetic", "bank", "california", "electricity" or "csv".
  std::string id = "synthetic";
  // CSV location; empty means <data_dir>/<id>.csv.
  std::string path;
  std::string data_dir = "data";
  std::string label_column;
  // 0 means the published count for named datasets and 75% otherwise.
  std::size_t train_count = 0;
  bool junk = false;
  std::uint64_t split_seed = 0;
  std::uint64_t junk_seed = 1;
  data::SyntheticSpec synthetic = default_synthetic();

  static data::SyntheticSpec default_synthetic();
  std::filesystem::path csv_path() const;
};

struct PlaneConfig {
  std::size_t count = 10;
  std::size_t grid = 51;
  double lo = -0.2;
  double hi = 1.2;
  std::uint64_t anchor_seed = 0;
};

struct EvaluationConfig {
  std::size_t points = 1000;
  metrics::Metric metric = metrics::Metric::PairwiseRank;
  std::size_t k = metrics::kDefaultK;
  // Pair reported by the sweeps.
  std::array<explain::Method, 2> pair{explain::Method::Lime,
                                      explain::Method::KernelShap};
  std::vector<explain::Method> explainers{std::begin(explain::kAllMethods),
                                          std::end(explain::kAllMethods)};
  std::vector<metrics::Metric> metrics{metrics::Metric::PairwiseRank};
  std::size_t chance_draws = 100000;
};

struct RunConfig {
  DatasetConfig dataset;
  nn::ModelKind model = nn::ModelKind::Mlp;
  std::vector<std::size_t> hidden{100, 100, 100};
  nn::Activation activation = nn::Activation::Relu;
  double lambda = 0.0;
  double mu = 0.75;
  std::optional<double> learning_rate;
  double weight_decay = 2e-4;
  std::size_t batch_size = 64;
  std::optional<std::size_t> epochs;
  std::uint64_t seed = 0;
  std::size_t trials = 3;
  std::array<explain::Method, 2> consensus_pair{explain::Method::Grad,
                                                explain::Method::IntGrad};
  double soft_rank_regularization = rank::kDefaultSoftRankRegularization;
  std::size_t train_intgrad_steps = 8;
  explain::ExplainerConfig explainer;
  EvaluationConfig evaluation;
  std::vector<double> lambdas{0.0, 0.25, 0.5, 0.75};
  std::vector<double> decays{0.0002, 0.002, 0.02, 0.2};
  std::vector<double> mus{0.0, 0.75, 1.0};
  PlaneConfig planes;
  // Load this checkpoint instead of training, where a verb needs one model.
  std::string checkpoint;

  std::size_t resolved_epochs() const;
  double resolved_learning_rate() const;
  consensus::ConsensusConfig consensus_config() const;
};

// Fills defaults for absent keys; throws ConfigError listing every problem,
// including unknown keys.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);
// FNV-1a 64 of the canonical JSON form, as 16 hex digits.
std::string config_hash(const RunConfig& config);
// "config_hash=<hash> seed=<seed>" for report headers.
std::string provenance_line(const RunConfig& config);

data::Dataset prepare_dataset(const DatasetConfig& config);

struct TrialSeeds {
  std::uint64_t init = 0;
  std::uint64_t shuffle = 0;
  std::uint64_t explainer = 0;
};
TrialSeeds trial_seeds(std::uint64_t seed, std::size_t trial);

struct TrainedModel {
  nn::Model model;
  nn::History history;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  TrialSeeds seeds;
};

TrainedModel train_model(const RunConfig& config, const data::Dataset& dataset,
                         std::size_t trial);

// Leading test rows (the split is already a random permutation).
struct EvalSet {
  ad::Tensor points;
  std::vector<std::size_t> ids;  // dataset row indices
};
EvalSet evaluation_set(const data::Dataset& dataset, std::size_t max_points);

explain::ExplainerConfig explainer_config(const RunConfig& config,
                                          const data::Dataset& dataset,
                                          std::uint64_t seed);

metrics::Summary pair_agreement(const nn::Model& model, const EvalSet& eval,
                                explain::Method a, explain::Method b,
                                metrics::Metric metric, std::size_t k,
                                const explain::ExplainerConfig& config);

// One row per (setting, trial).
struct TrialRow {
  nn::ModelKind model = nn::ModelKind::Mlp;
  double lambda = 0.0;
  double mu = 0.0;
  double weight_decay = 0.0;
  std::size_t trial = 0;
  double test_accuracy = 0.0;
  double agreement = 0.0;
  double mae = std::numeric_limits<double>::quiet_NaN();
  // Correlation-pathway evaluations inside the loss during training.
  std::uint64_t pearson_calls = 0;
  std::uint64_t spearman_calls = 0;
};

struct SweepRow {
  nn::ModelKind model = nn::ModelKind::Mlp;
  double lambda = 0.0;
  double mu = 0.0;
  double weight_decay = 0.0;
  metrics::Summary accuracy;
  metrics::Summary agreement;
  metrics::Summary mae;
};

struct SweepResult {
  std::vector<TrialRow> trials;
  std::vector<SweepRow> rows;
};

// Includes linear-model baseline rows.
SweepResult lambda_sweep(const RunConfig& config, const data::Dataset& dataset);
SweepResult weight_decay_sweep(const RunConfig& config,
                               const data::Dataset& dataset);
SweepResult mu_ablation(const RunConfig& config, const data::Dataset& dataset);

void write_sweep(const SweepResult& result, const std::filesystem::path& summary,
                 const std::filesystem::path& per_trial,
                 const std::string& header_comment);

// Junk-feature experiment.
double junk_topk_frequency(std::span<const explain::Attribution> attributions,
                           const std::vector<bool>& junk, std::size_t k);
// 1 - C(real, k) / C(real + junk, k)
double chance_hypergeometric(std::size_t real, std::size_t junk, std::size_t k);
double chance_monte_carlo(std::size_t real, std::size_t junk, std::size_t k,
                          std::size_t draws, std::uint64_t seed);

// Three-point plane probes.
struct PlaneProbe {
  std::array<std::size_t, 3> anchors{};  // dataset row indices
  std::array<double, 3> anchor_logits{};
  std::size_t grid = 0;
  std::vector<double> u;
  std::vector<double> v;
  std::vector<double> logits;  // first-class logit, u-major
  std::array<double, 3> fit{};  // logit ~ a u + b v + c
  double mae = 0.0;
};

// Distinct triples of positions into [0, n).
std::vector<std::array<std::size_t, 3>> choose_anchors(std::size_t n,
                                                       std::size_t count,
                                                       std::uint64_t seed);
PlaneProbe plane_probe(const nn::Model& model, const EvalSet& eval,
                       const std::array<std::size_t, 3>& positions,
                       const PlaneConfig& config);
// Least-squares affine fit of z on (u, v); returns {a, b, c}.
std::array<double, 3> fit_affine(std::span<const double> u,
                                 std::span<const double> v,
                                 std::span<const double> z);
std::vector<PlaneProbe> plane_probes(const nn::Model& model, const EvalSet& eval,
                                     const PlaneConfig& config);
metrics::Summary linear_fit_mae(const nn::Model& model, const EvalSet& eval,
                                const PlaneConfig& config);

// CLI verbs: train, explain, matrix, sweep-lambda, sweep-wd, ablate-mu, junk,
// planes, linfit. Writes reports into `out` and returns a JSON summary that
// lists them.
const std::vector<std::string>& verbs();
nlohmann::json run_command(const std::string& verb, const RunConfig& config,
                           const std::filesystem::path& out);

}  // namespace pear::experiments
