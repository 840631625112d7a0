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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pear/autodiff.hpp"

namespace pear::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Feature matrix plus class labels, ready for batching.
struct Examples {
  ad::Tensor features;  // rows x features
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t width() const noexcept { return features.cols(); }
  Examples rows(std::span<const std::size_t> idx) const;
};

enum class Split : std::uint8_t { Train, Test };

struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct Provenance {
  std::string source;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::uint64_t> junk_seed;
  std::optional<std::uint64_t> synthetic_seed;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
};

struct Dataset {
  std::string name;
  std::size_t row_count = 0;
  std::size_t feature_count = 0;
  std::vector<double> values;  // row-major row_count x feature_count
  std::vector<std::size_t> labels;
  std::vector<std::string> feature_names;
  std::vector<bool> junk;       // per feature
  std::vector<Split> split;     // per row; empty until split()
  std::optional<Standardization> stats;
  Provenance provenance;

  double at(std::size_t row, std::size_t feature) const {
    return values[row * feature_count + feature];
  }
  std::size_t count(Split which) const;
  std::vector<std::size_t> indices(Split which) const;
  Examples examples(Split which) const;
  Examples all_examples() const;
};

// CSV with a header row, comma separators and numeric cells. The label
// column must hold only 0 and 1. An empty label column name selects the last
// column.
Dataset load_csv(const std::filesystem::path& path,
                 const std::string& label_column = {});

// Uniform random permutation; the first train_count rows become train.
Dataset split(Dataset dataset, std::size_t train_count, std::uint64_t seed);

// (x - train mean) / train std per feature; zero-variance features keep
// std 1. Requires a split.
Dataset standardize(Dataset dataset);

// Appends one standard-normal junk column per real column.
Dataset add_junk_features(Dataset dataset, std::uint64_t seed);

struct SyntheticSpec {
  std::vector<double> weights;
  // Optional per-feature coefficients on (x_i^2 - 1); empty means none.
  std::vector<double> quadratic;
  // Optional per-feature coefficients on (|x_i| - E|x_i|); empty means none.
  std::vector<double> absolute;
  double bias = 0.0;
  // Standard deviation of Gaussian noise added to the logit.
  double noise = 0.0;
  std::size_t rows = 0;
  std::uint64_t seed = 0;
};

// x ~ N(0, I); label ~ Bernoulli(sigmoid(w.x + sum q_i (x_i^2 - 1)
//                                  + sum a_i (|x_i| - sqrt(2/pi)) + b + e)).
Dataset synthetic(const SyntheticSpec& spec);

nlohmann::json provenance_json(const Dataset& dataset);
void write_provenance(const Dataset& dataset,
                      const std::filesystem::path& path);

}  // namespace pear::data
