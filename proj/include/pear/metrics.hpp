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
#include <string>
#include <vector>

#include "json.hpp"
#include "pear/explain.hpp"

namespace pear::metrics {

enum class Metric : std::uint8_t {
  Feature,
  Rank,
  Sign,
  SignedRank,
  RankCorrelation,
  PairwiseRank
};

inline constexpr Metric kAllMetrics[] = {Metric::Feature,    Metric::Rank,
                                         Metric::Sign,       Metric::SignedRank,
                                         Metric::RankCorrelation,
                                         Metric::PairwiseRank};

inline constexpr std::size_t kDefaultK = 5;

// "feature", "rank", "sign", "signed_rank", "rank_correlation", "pairwise_rank"
std::string to_string(Metric m);
Metric metric_from_string(const std::string& s);
bool uses_k(Metric m) noexcept;

struct AgreementScore {
  Metric metric = Metric::Feature;
  std::optional<std::size_t> k;
  // NaN when undefined (rank correlation of constant ranks).
  double value = 0.0;
};

// Indices of the k largest magnitudes, most important first; ties go to the
// lower index. Throws std::invalid_argument unless 1 <= k <= size.
std::vector<std::size_t> top_k(std::span<const double> e, std::size_t k);

AgreementScore feature_agreement(std::span<const double> e1,
                                 std::span<const double> e2, std::size_t k);
AgreementScore rank_agreement(std::span<const double> e1,
                              std::span<const double> e2, std::size_t k);
AgreementScore sign_agreement(std::span<const double> e1,
                              std::span<const double> e2, std::size_t k);
AgreementScore signed_rank_agreement(std::span<const double> e1,
                                     std::span<const double> e2, std::size_t k);
AgreementScore rank_correlation(std::span<const double> e1,
                                std::span<const double> e2);
AgreementScore pairwise_rank_agreement(std::span<const double> e1,
                                       std::span<const double> e2);

AgreementScore agreement(Metric m, std::span<const double> e1,
                         std::span<const double> e2, std::size_t k = kDefaultK);

struct Summary {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t count = 0;  // defined (non-NaN) values
};

// Mean and standard error of the mean, ignoring NaN entries.
Summary summarize(std::span<const double> values);

struct DisagreementMatrix {
  Metric metric = Metric::PairwiseRank;
  std::size_t k = kDefaultK;
  std::vector<std::string> explainers;
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> std_errs;
  std::vector<std::vector<std::size_t>> counts;

  // {metric, k, explainers, means[][], std_errs[][]}
  nlohmann::json to_json() const;
  // explainer_a,explainer_b,metric,k,mean,std_err,count
  void write_csv(const std::filesystem::path& path,
                 const std::string& header_comment = {}) const;
};

// attributions[e][p] is explainer e on point p; every explainer must cover
// the same points in the same order.
DisagreementMatrix disagreement_matrix(
    std::span<const std::vector<explain::Attribution>> attributions,
    Metric metric, std::size_t k = kDefaultK);

DisagreementMatrix disagreement_matrix(const nn::Model& model,
                                       std::span<const explain::Method> methods,
                                       const ad::Tensor& points,
                                       std::span<const std::size_t> point_ids,
                                       const explain::ExplainerConfig& config,
                                       Metric metric, std::size_t k = kDefaultK);

// Per-point metric values between two aligned attribution lists.
std::vector<double> pointwise(std::span<const explain::Attribution> a,
                              std::span<const explain::Attribution> b,
                              Metric metric, std::size_t k = kDefaultK);

}  // namespace pear::metrics
