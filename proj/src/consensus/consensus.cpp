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

#include "pear/consensus.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

namespace pear::consensus {

namespace {

std::atomic<std::uint64_t> g_pearson{0};
std::atomic<std::uint64_t> g_spearman{0};
std::atomic<std::uint64_t> g_loss{0};

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("correlation: lengths " + std::to_string(a.size()) +
                                " and " + std::to_string(b.size()) + " differ");
  }
  if (a.size() < 2) throw std::invalid_argument("correlation: need at least 2 entries");
}

bool constant(std::span<const double> v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *lo == *hi;
}

double mean_of(const ad::Tensor& column) {
  double s = 0.0;
  for (double v : column.values()) s += v;
  return s / static_cast<double>(column.size());
}

std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

}  // namespace

std::optional<double> pearson(std::span<const double> a,
                              std::span<const double> b) {
  check_pair(a, b);
  if (constant(a) || constant(b)) return std::nullopt;
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    num += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  // One root of the product keeps identical inputs at exactly 1.
  const double product = saa * sbb;
  const double scale = std::isfinite(product) && product > 0.0
                           ? std::sqrt(product)
                           : std::sqrt(saa) * std::sqrt(sbb);
  return std::clamp(num / scale, -1.0, 1.0);
}

std::optional<double> spearman(std::span<const double> a,
                               std::span<const double> b, RankMode mode,
                               double regularization) {
  check_pair(a, b);
  if (mode == RankMode::Hard) {
    return pearson(rank::hard_rank(a), rank::hard_rank(b));
  }
  return pearson(rank::soft_rank(a, regularization),
                 rank::soft_rank(b, regularization));
}

ad::Tensor pearson_rows(const ad::Tensor& a, const ad::Tensor& b,
                        double epsilon) {
  if (a.shape() != b.shape()) {
    throw ad::ShapeError("pearson_rows: shapes " + ad::to_string(a.shape()) +
                         " and " + ad::to_string(b.shape()) + " differ");
  }
  const ad::Tensor ac = a - ad::mean_rows(a);
  const ad::Tensor bc = b - ad::mean_rows(b);
  const ad::Tensor num = ad::sum_rows(ac * bc);
  const ad::Tensor saa = ad::sum_rows(ac * ac);
  const ad::Tensor sbb = ad::sum_rows(bc * bc);
  return num / ad::sqrt(saa * sbb + ad::Tensor::scalar(epsilon));
}

ad::Tensor spearman_rows(const ad::Tensor& a, const ad::Tensor& b,
                         double regularization, double epsilon) {
  return pearson_rows(rank::soft_rank(a, regularization),
                      rank::soft_rank(b, regularization), epsilon);
}

void ConsensusConfig::validate() const {
  std::vector<std::string> problems;
  if (!(lambda >= 0.0 && lambda <= 1.0)) problems.emplace_back("lambda must lie in [0, 1]");
  if (!(mu >= 0.0 && mu <= 1.0)) problems.emplace_back("mu must lie in [0, 1]");
  if (!explain::differentiable(first)) {
    problems.emplace_back("explainer '" + explain::to_string(first) +
                          "' is not differentiable");
  }
  if (!explain::differentiable(second)) {
    problems.emplace_back("explainer '" + explain::to_string(second) +
                          "' is not differentiable");
  }
  if (!(soft_rank_regularization > 0.0)) {
    problems.emplace_back("soft_rank_regularization must be positive");
  }
  if (intgrad_steps == 0) problems.emplace_back("intgrad_steps must be positive");
  if (problems.empty()) return;
  std::string msg = "consensus config:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw std::invalid_argument(msg);
}

Counters counters() noexcept {
  return {g_pearson.load(), g_spearman.load(), g_loss.load()};
}

void reset_counters() noexcept {
  g_pearson = 0;
  g_spearman = 0;
  g_loss = 0;
}

ad::Tensor attributions(explain::Method method, ad::Graph& graph,
                        const nn::Model& live, const ad::Tensor& x,
                        std::span<const std::size_t> targets,
                        const ConsensusConfig& config) {
  switch (method) {
    case explain::Method::Grad:
      return explain::grad_rows(graph, live, x, targets, true);
    case explain::Method::GradInput:
      return explain::grad_input_rows(graph, live, x, targets, true);
    case explain::Method::IntGrad:
      return explain::intgrad_rows(graph, live, x, targets, config.intgrad_steps,
                                   config.intgrad_baseline, true);
    default:
      throw std::invalid_argument("explainer '" + explain::to_string(method) +
                                  "' cannot be used inside the loss");
  }
}

nn::LossParts pear_loss(const nn::Model& live, const ad::Tensor& x,
                        std::span<const std::size_t> labels,
                        const ConsensusConfig& config) {
  ++g_loss;
  nn::LossParts parts;
  const ad::Tensor logits = live.logits(x);
  const ad::Tensor ce = nn::cross_entropy(logits, labels);
  parts.task = ce.item();
  if (config.lambda == 0.0) {
    parts.total = ce;
    return parts;
  }

  ad::Graph* graph = live.params.layers.empty()
                         ? nullptr
                         : live.params.layers.front().weight.graph();
  if (graph == nullptr) {
    throw ad::GraphError("pear_loss: model parameters are not attached to a graph");
  }
  const auto targets = nn::argmax_rows(logits);
  const ad::Tensor e1 = attributions(config.first, *graph, live, x, targets, config);
  const ad::Tensor e2 = attributions(config.second, *graph, live, x, targets, config);

  const ad::Tensor one = ad::Tensor::scalar(1.0);
  ad::Tensor consensus;
  if (config.mu > 0.0) {
    ++g_spearman;
    const ad::Tensor s = spearman_rows(e1, e2, config.soft_rank_regularization);
    parts.mean_spearman = mean_of(s);
    consensus = (one - ad::mean(s)) * config.mu;
  }
  if (config.mu < 1.0) {
    ++g_pearson;
    const ad::Tensor p = pearson_rows(e1, e2);
    parts.mean_pearson = mean_of(p);
    const ad::Tensor term = (one - ad::mean(p)) * (1.0 - config.mu);
    consensus = consensus.empty() ? term : consensus + term;
  }
  parts.consensus = consensus.item();
  parts.total = ce * (1.0 - config.lambda) + consensus * config.lambda;
  return parts;
}

nn::LossFn make_loss(const ConsensusConfig& config) {
  config.validate();
  return [config](const nn::Model& live, const ad::Tensor& x,
                  std::span<const std::size_t> labels) {
    return pear_loss(live, x, labels, config);
  };
}

void write_step_log(const std::filesystem::path& path,
                    std::span<const nn::StepRecord> steps,
                    const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "step,task,consensus,mean_pearson,mean_spearman\n";
  for (const auto& s : steps) {
    out << s.step << ',' << number(s.task) << ',' << number(s.consensus) << ','
        << number(s.mean_pearson) << ',' << number(s.mean_spearman) << '\n';
  }
}

}  // namespace pear::consensus
