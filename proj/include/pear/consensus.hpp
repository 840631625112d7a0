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
#include <optional>
#include <span>
#include <vector>

#include "pear/autodiff.hpp"
#include "pear/explain.hpp"
#include "pear/nn.hpp"
#include "pear/rank.hpp"

namespace pear::consensus {

inline constexpr double kTrainingEpsilon = 1e-8;

enum class RankMode : std::uint8_t { Hard, Soft };

// Correlation of centered vectors. nullopt when either input is constant.
// Throws std::invalid_argument on length mismatch or fewer than 2 entries.
std::optional<double> pearson(std::span<const double> a,
                              std::span<const double> b);
// Pearson correlation of magnitude ranks.
std::optional<double> spearman(
    std::span<const double> a, std::span<const double> b,
    RankMode mode = RankMode::Hard,
    double regularization = rank::kDefaultSoftRankRegularization);

// Row-wise differentiable versions: B x n inputs give a B x 1 column.
// The denominator is sqrt(|a_c|^2 |b_c|^2 + epsilon), so constant rows give 0.
ad::Tensor pearson_rows(const ad::Tensor& a, const ad::Tensor& b,
                        double epsilon = kTrainingEpsilon);
ad::Tensor spearman_rows(const ad::Tensor& a, const ad::Tensor& b,
                         double regularization,
                         double epsilon = kTrainingEpsilon);

struct ConsensusConfig {
  double lambda = 0.5;
  double mu = 0.75;
  explain::Method first = explain::Method::Grad;
  explain::Method second = explain::Method::IntGrad;
  double soft_rank_regularization = rank::kDefaultSoftRankRegularization;
  std::size_t intgrad_steps = 8;
  // Empty means the zero vector.
  std::vector<double> intgrad_baseline;

  // Throws std::invalid_argument listing every problem.
  void validate() const;
};

// Evaluation counts of each correlation pathway inside the loss.
struct Counters {
  std::uint64_t pearson = 0;
  std::uint64_t spearman = 0;
  std::uint64_t loss = 0;
};
Counters counters() noexcept;
void reset_counters() noexcept;

// Differentiable per-row attributions of a training batch.
ad::Tensor attributions(explain::Method method, ad::Graph& graph,
                        const nn::Model& live, const ad::Tensor& x,
                        std::span<const std::size_t> targets,
                        const ConsensusConfig& config);

// (1 - lambda) CE + lambda mean_b [mu (1 - s_b) + (1 - mu)(1 - p_b)]
// over attributions of the predicted class. `live` must carry parameters
// attached to a graph.
nn::LossParts pear_loss(const nn::Model& live, const ad::Tensor& x,
                        std::span<const std::size_t> labels,
                        const ConsensusConfig& config);
nn::LossFn make_loss(const ConsensusConfig& config);

// step,task,consensus,mean_pearson,mean_spearman
void write_step_log(const std::filesystem::path& path,
                    std::span<const nn::StepRecord> steps,
                    const std::string& header_comment = {});

}  // namespace pear::consensus
