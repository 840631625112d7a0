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

#include "pear/rank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace pear::rank {

namespace {

std::vector<std::size_t> descending_order(std::span<const double> z) {
  std::vector<std::size_t> order(z.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return z[a] > z[b]; });
  return order;
}

// Per-row pooling structure shared by the projection and its Jacobian.
struct RowBlocks {
  std::vector<std::size_t> order;
  std::vector<std::size_t> block_ends;
};

using Structure = std::vector<RowBlocks>;

// Averages g within each pooled block. Linear and symmetric, so it is its own
// vector-Jacobian product.
class BlockAverage final : public ad::CustomOp {
 public:
  explicit BlockAverage(std::shared_ptr<const Structure> rows)
      : rows_(std::move(rows)) {}

  std::string_view name() const override { return "block_average"; }

  ad::Shape output_shape(std::span<const ad::Shape> in) const override {
    if (in.size() != 1 || in[0].rows != rows_->size()) {
      throw ad::ShapeError("block_average: operand does not match structure");
    }
    return in[0];
  }

  std::vector<double> forward(std::span<const std::span<const double>> in,
                              std::span<const ad::Shape> shapes) const override {
    const std::size_t n = shapes[0].cols;
    std::vector<double> out(in[0].size());
    for (std::size_t r = 0; r < rows_->size(); ++r) {
      const auto& row = (*rows_)[r];
      const double* g = in[0].data() + r * n;
      double* o = out.data() + r * n;
      std::size_t start = 0;
      for (std::size_t end : row.block_ends) {
        double total = 0.0;
        for (std::size_t k = start; k < end; ++k) total += g[row.order[k]];
        const double avg = total / static_cast<double>(end - start);
        for (std::size_t k = start; k < end; ++k) o[row.order[k]] = avg;
        start = end;
      }
    }
    return out;
  }

  std::vector<ad::Tensor> backward(std::span<const ad::Tensor>,
                                   const ad::Tensor&,
                                   const ad::Tensor& grad) const override {
    const ad::Tensor in[] = {grad};
    return {ad::apply_custom(std::make_shared<BlockAverage>(rows_), in)};
  }

 private:
  std::shared_ptr<const Structure> rows_;
};

class PermutahedronProjection final : public ad::CustomOp {
 public:
  explicit PermutahedronProjection(std::shared_ptr<const Structure> rows)
      : rows_(std::move(rows)) {}

  std::string_view name() const override { return "permutahedron_projection"; }

  ad::Shape output_shape(std::span<const ad::Shape> in) const override {
    if (in.size() != 1 || in[0].rows != rows_->size()) {
      throw ad::ShapeError("projection: operand does not match structure");
    }
    return in[0];
  }

  std::vector<double> forward(std::span<const std::span<const double>> in,
                              std::span<const ad::Shape> shapes) const override {
    const std::size_t n = shapes[0].cols;
    std::vector<double> out;
    out.reserve(in[0].size());
    for (std::size_t r = 0; r < shapes[0].rows; ++r) {
      const auto p = project_permutahedron(in[0].subspan(r * n, n));
      out.insert(out.end(), p.values.begin(), p.values.end());
    }
    return out;
  }

  std::vector<ad::Tensor> backward(std::span<const ad::Tensor>,
                                   const ad::Tensor&,
                                   const ad::Tensor& grad) const override {
    const ad::Tensor in[] = {grad};
    const ad::Tensor pooled =
        ad::apply_custom(std::make_shared<BlockAverage>(rows_), in);
    return {ad::sub(grad, pooled)};
  }

 private:
  std::shared_ptr<const Structure> rows_;
};

}  // namespace

RankVector hard_rank(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("hard_rank: empty vector");
  const std::size_t n = scores.size();
  std::vector<double> mag(n);
  std::transform(scores.begin(), scores.end(), mag.begin(),
                 [](double v) { return std::fabs(v); });
  const auto order = descending_order(mag);

  RankVector ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && mag[order[j]] == mag[order[i]]) ++j;
    // Positions i..j-1 hold ranks i+1..j.
    const double shared = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = shared;
    i = j;
  }
  return ranks;
}

Projection project_permutahedron(std::span<const double> z) {
  const std::size_t n = z.size();
  Projection result;
  result.order = descending_order(z);

  // Isotonic (non-increasing) regression of y = sorted(z) - (n, ..., 1).
  std::vector<double> block_sum;
  std::vector<std::size_t> block_len;
  block_sum.reserve(n);
  block_len.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    block_sum.push_back(z[result.order[k]] - static_cast<double>(n - k));
    block_len.push_back(1);
    while (block_sum.size() > 1) {
      const std::size_t last = block_sum.size() - 1;
      const double mean_last =
          block_sum[last] / static_cast<double>(block_len[last]);
      const double mean_prev =
          block_sum[last - 1] / static_cast<double>(block_len[last - 1]);
      if (mean_prev > mean_last) break;
      block_sum[last - 1] += block_sum[last];
      block_len[last - 1] += block_len[last];
      block_sum.pop_back();
      block_len.pop_back();
    }
  }

  result.values.assign(n, 0.0);
  std::size_t start = 0;
  for (std::size_t b = 0; b < block_sum.size(); ++b) {
    const std::size_t end = start + block_len[b];
    const double fitted = block_sum[b] / static_cast<double>(block_len[b]);
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t idx = result.order[k];
      result.values[idx] = z[idx] - fitted;
    }
    result.block_ends.push_back(end);
    start = end;
  }
  return result;
}

ad::Tensor soft_rank(const ad::Tensor& scores, double regularization) {
  if (!(regularization > 0.0)) {
    throw std::invalid_argument("soft_rank: regularization must be positive, got " +
                                std::to_string(regularization));
  }
  if (scores.cols() == 0) throw std::invalid_argument("soft_rank: empty rows");

  const ad::Tensor z = ad::scale(ad::abs(scores), 1.0 / regularization);
  const std::size_t n = scores.cols();
  auto rows = std::make_shared<Structure>(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto p = project_permutahedron(z.row_values(r));
    (*rows)[r] = {std::move(p.order), std::move(p.block_ends)};
  }
  const ad::Tensor in[] = {z};
  const ad::Tensor ascending = ad::apply_custom(
      std::make_shared<PermutahedronProjection>(std::move(rows)), in);
  // Flip so the largest magnitude gets rank ~1.
  return ad::add(ad::scale(ascending, -1.0),
                 ad::Tensor::scalar(static_cast<double>(n + 1)));
}

RankVector soft_rank(std::span<const double> scores, double regularization) {
  const ad::Tensor t = ad::Tensor::row({scores.begin(), scores.end()});
  return soft_rank(t, regularization).to_vector();
}

}  // namespace pear::rank
