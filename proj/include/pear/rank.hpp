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
#include <span>
#include <vector>

#include "pear/autodiff.hpp"

namespace pear::rank {

// One rank per feature. Rank 1 is the entry with the largest magnitude.
using RankVector = std::vector<double>;

inline constexpr double kDefaultSoftRankRegularization = 1.0;

// Magnitude ranking; tied magnitudes share the mean of the ranks they span.
// Throws std::invalid_argument on an empty input.
RankVector hard_rank(std::span<const double> scores);

// Euclidean projection of `z` onto the permutahedron of (n, n-1, ..., 1),
// solved by pool-adjacent-violators on the sorted problem.
struct Projection {
  std::vector<double> values;
  // Indices of z in descending order (ties by lower index).
  std::vector<std::size_t> order;
  // Exclusive end offsets (into `order`) of the pooled blocks.
  std::vector<std::size_t> block_ends;
};

Projection project_permutahedron(std::span<const double> z);

// Differentiable magnitude ranking applied to each row of `scores`. With
// regularization -> 0 it approaches hard_rank; gradients flow through both
// the absolute value and the projection. Throws std::invalid_argument when
// regularization <= 0.
ad::Tensor soft_rank(const ad::Tensor& scores, double regularization);
RankVector soft_rank(std::span<const double> scores, double regularization);

}  // namespace pear::rank
