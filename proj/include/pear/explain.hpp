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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pear/autodiff.hpp"
#include "pear/nn.hpp"

namespace pear::explain {

enum class Method : std::uint8_t {
  Grad,
  GradInput,
  IntGrad,
  SmoothGrad,
  Lime,
  KernelShap
};

inline constexpr Method kAllMethods[] = {Method::Grad,       Method::GradInput,
                                         Method::IntGrad,    Method::SmoothGrad,
                                         Method::Lime,       Method::KernelShap};

// "grad", "grad_input", "intgrad", "smoothgrad", "lime", "shap"
std::string to_string(Method m);
Method method_from_string(const std::string& s);

// Methods whose scores can be differentiated with respect to the model.
bool differentiable(Method m) noexcept;

class ExplainError : public std::runtime_error {
 public:
  explicit ExplainError(const std::string& what,
                        std::optional<std::size_t> point = std::nullopt);
  std::optional<std::size_t> point() const noexcept { return point_; }

 private:
  std::optional<std::size_t> point_;
};

struct Attribution {
  std::vector<double> scores;
  Method explainer = Method::Grad;
  std::size_t target = 0;
  std::size_t point_id = 0;
  // Set when LIME had to raise its ridge to solve the normal equations.
  std::optional<double> ridge_used;
};

struct ExplainerConfig {
  std::size_t intgrad_steps = 50;
  // Empty means the zero vector.
  std::vector<double> intgrad_baseline;
  std::size_t smoothgrad_samples = 25;
  double smoothgrad_sigma = 0.1;
  std::size_t lime_samples = 1000;
  // Zero selects 0.75 * sqrt(M).
  double lime_kernel_width = 0.0;
  double lime_ridge = 1e-3;
  // Per-feature perturbation scales; empty means 1 (standardized features).
  std::vector<double> lime_scales;
  std::size_t shap_coalitions = 2048;
  // Enumerate every coalition when M is at most this or 2^M fits the budget.
  std::size_t shap_full_max_features = 14;
  // Empty means the zero vector (the training mean after standardization).
  std::vector<double> shap_background;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument listing every problem.
  void validate() const;
  double kernel_width(std::size_t features) const;
};

// Target-class scores for each row of a batch of points.
using Scorer = std::function<std::vector<double>(const ad::Tensor& points)>;

Scorer target_scorer(const nn::Model& model, std::size_t target);

// Predicted class per row.
std::vector<std::size_t> predicted_targets(const nn::Model& model,
                                           const ad::Tensor& points);

// Batched gradient explainers. Rows of `x` are independent points. `model`
// may carry parameters attached to `graph`; with `create_graph` the result
// stays on `graph` and is differentiable with respect to those parameters.
ad::Tensor grad_rows(ad::Graph& graph, const nn::Model& model,
                     const ad::Tensor& x, std::span<const std::size_t> targets,
                     bool create_graph);
ad::Tensor grad_input_rows(ad::Graph& graph, const nn::Model& model,
                           const ad::Tensor& x,
                           std::span<const std::size_t> targets,
                           bool create_graph);
// Midpoint Riemann sum with `steps` points along the straight path.
ad::Tensor intgrad_rows(ad::Graph& graph, const nn::Model& model,
                        const ad::Tensor& x,
                        std::span<const std::size_t> targets, std::size_t steps,
                        std::span<const double> baseline, bool create_graph);

Attribution grad(const nn::Model& model, std::span<const double> x,
                 std::size_t target);
Attribution grad_input(const nn::Model& model, std::span<const double> x,
                       std::size_t target);
Attribution intgrad(const nn::Model& model, std::span<const double> x,
                    std::size_t target, const ExplainerConfig& config);
Attribution smoothgrad(const nn::Model& model, std::span<const double> x,
                       std::size_t target, const ExplainerConfig& config,
                       std::size_t point_id = 0);
Attribution lime(const nn::Model& model, std::span<const double> x,
                 std::size_t target, const ExplainerConfig& config,
                 std::size_t point_id = 0);
Attribution lime(const Scorer& scorer, std::span<const double> x,
                 const ExplainerConfig& config, std::size_t point_id = 0);
Attribution kernel_shap(const nn::Model& model, std::span<const double> x,
                        std::size_t target, const ExplainerConfig& config,
                        std::size_t point_id = 0);
Attribution kernel_shap(const Scorer& scorer, std::span<const double> x,
                        const ExplainerConfig& config, std::size_t point_id = 0);

// Explains every row of `points` for its predicted class. `point_ids` seeds
// the sampling explainers per point; empty means 0..n-1.
std::vector<Attribution> explain_points(const nn::Model& model, Method method,
                                        const ad::Tensor& points,
                                        const ExplainerConfig& config,
                                        std::span<const std::size_t> point_ids = {});

// CSV with columns point_id, explainer, feature, score.
void write_attributions_csv(const std::filesystem::path& path,
                            std::span<const Attribution> attributions,
                            const std::string& header_comment = {});

}  // namespace pear::explain
