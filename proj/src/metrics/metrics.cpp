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

#include "pear/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "pear/consensus.hpp"
#include "pear/rank.hpp"

namespace pear::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(std::span<const double> e1, std::span<const double> e2) {
  if (e1.size() != e2.size()) {
    throw std::invalid_argument("agreement: attribution lengths " +
                                std::to_string(e1.size()) + " and " +
                                std::to_string(e2.size()) + " differ");
  }
  if (e1.empty()) throw std::invalid_argument("agreement: empty attributions");
}

int sign_of(double v) { return (v > 0) - (v < 0); }

// Shared top-k machinery: counts features in both top-k sets that pass `keep`.
template <typename Keep>
AgreementScore topk_score(Metric m, std::span<const double> e1,
                          std::span<const double> e2, std::size_t k, Keep keep) {
  check_lengths(e1, e2);
  const auto t1 = top_k(e1, k);
  const auto t2 = top_k(e2, k);
  std::vector<bool> in2(e2.size(), false);
  for (auto i : t2) in2[i] = true;
  std::size_t hits = 0;
  for (auto i : t1) {
    if (in2[i] && keep(i)) ++hits;
  }
  return {m, k, static_cast<double>(hits) / static_cast<double>(k)};
}

std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

nlohmann::json json_number(double v) {
  return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

}  // namespace

std::string to_string(Metric m) {
  switch (m) {
    case Metric::Feature: return "feature";
    case Metric::Rank: return "rank";
    case Metric::Sign: return "sign";
    case Metric::SignedRank: return "signed_rank";
    case Metric::RankCorrelation: return "rank_correlation";
    case Metric::PairwiseRank: return "pairwise_rank";
  }
  return "unknown";
}

Metric metric_from_string(const std::string& s) {
  for (auto m : kAllMetrics) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown metric '" + s + "'");
}

bool uses_k(Metric m) noexcept {
  return m != Metric::RankCorrelation && m != Metric::PairwiseRank;
}

std::vector<std::size_t> top_k(std::span<const double> e, std::size_t k) {
  if (k < 1 || k > e.size()) {
    throw std::invalid_argument("top_k: k = " + std::to_string(k) +
                                " outside [1, " + std::to_string(e.size()) + "]");
  }
  std::vector<std::size_t> idx(e.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(e[a]) > std::fabs(e[b]);
  });
  idx.resize(k);
  return idx;
}

AgreementScore feature_agreement(std::span<const double> e1,
                                 std::span<const double> e2, std::size_t k) {
  return topk_score(Metric::Feature, e1, e2, k, [](std::size_t) { return true; });
}

AgreementScore rank_agreement(std::span<const double> e1,
                              std::span<const double> e2, std::size_t k) {
  check_lengths(e1, e2);
  const auto r1 = rank::hard_rank(e1);
  const auto r2 = rank::hard_rank(e2);
  return topk_score(Metric::Rank, e1, e2, k,
                    [&](std::size_t i) { return r1[i] == r2[i]; });
}

AgreementScore sign_agreement(std::span<const double> e1,
                              std::span<const double> e2, std::size_t k) {
  return topk_score(Metric::Sign, e1, e2, k, [&](std::size_t i) {
    return sign_of(e1[i]) == sign_of(e2[i]);
  });
}

AgreementScore signed_rank_agreement(std::span<const double> e1,
                                     std::span<const double> e2, std::size_t k) {
  check_lengths(e1, e2);
  const auto r1 = rank::hard_rank(e1);
  const auto r2 = rank::hard_rank(e2);
  return topk_score(Metric::SignedRank, e1, e2, k, [&](std::size_t i) {
    return r1[i] == r2[i] && sign_of(e1[i]) == sign_of(e2[i]);
  });
}

AgreementScore rank_correlation(std::span<const double> e1,
                                std::span<const double> e2) {
  check_lengths(e1, e2);
  if (e1.size() < 2) return {Metric::RankCorrelation, std::nullopt, kNaN};
  const auto s = consensus::spearman(e1, e2, consensus::RankMode::Hard);
  return {Metric::RankCorrelation, std::nullopt, s ? *s : kNaN};
}

AgreementScore pairwise_rank_agreement(std::span<const double> e1,
                                       std::span<const double> e2) {
  check_lengths(e1, e2);
  const std::size_t n = e1.size();
  if (n < 2) return {Metric::PairwiseRank, std::nullopt, kNaN};
  std::size_t agree = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int o1 = sign_of(std::fabs(e1[i]) - std::fabs(e1[j]));
      const int o2 = sign_of(std::fabs(e2[i]) - std::fabs(e2[j]));
      if (o1 == o2) ++agree;
    }
  }
  const double pairs = static_cast<double>(n * (n - 1) / 2);
  return {Metric::PairwiseRank, std::nullopt, static_cast<double>(agree) / pairs};
}

AgreementScore agreement(Metric m, std::span<const double> e1,
                         std::span<const double> e2, std::size_t k) {
  switch (m) {
    case Metric::Feature: return feature_agreement(e1, e2, k);
    case Metric::Rank: return rank_agreement(e1, e2, k);
    case Metric::Sign: return sign_agreement(e1, e2, k);
    case Metric::SignedRank: return signed_rank_agreement(e1, e2, k);
    case Metric::RankCorrelation: return rank_correlation(e1, e2);
    case Metric::PairwiseRank: return pairwise_rank_agreement(e1, e2);
  }
  throw std::invalid_argument("unknown metric");
}

Summary summarize(std::span<const double> values) {
  Summary s;
  double total = 0.0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    total += v;
    ++s.count;
  }
  if (s.count == 0) return {kNaN, kNaN, 0};
  s.mean = total / static_cast<double>(s.count);
  if (s.count < 2) {
    s.std_err = kNaN;
    return s;
  }
  double sq = 0.0;
  for (double v : values) {
    if (!std::isnan(v)) sq += (v - s.mean) * (v - s.mean);
  }
  const double n = static_cast<double>(s.count);
  s.std_err = std::sqrt(sq / (n - 1.0)) / std::sqrt(n);
  return s;
}

std::vector<double> pointwise(std::span<const explain::Attribution> a,
                              std::span<const explain::Attribution> b,
                              Metric metric, std::size_t k) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("pointwise: " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()) + " attributions");
  }
  std::vector<double> out(a.size());
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (a[p].point_id != b[p].point_id) {
      throw std::invalid_argument("pointwise: point ids " + std::to_string(a[p].point_id) +
                                  " and " + std::to_string(b[p].point_id) +
                                  " are not aligned");
    }
    out[p] = agreement(metric, a[p].scores, b[p].scores, k).value;
  }
  return out;
}

DisagreementMatrix disagreement_matrix(
    std::span<const std::vector<explain::Attribution>> attributions,
    Metric metric, std::size_t k) {
  DisagreementMatrix m;
  m.metric = metric;
  m.k = k;
  const std::size_t e = attributions.size();
  m.means.assign(e, std::vector<double>(e, kNaN));
  m.std_errs.assign(e, std::vector<double>(e, kNaN));
  m.counts.assign(e, std::vector<std::size_t>(e, 0));
  for (std::size_t i = 0; i < e; ++i) {
    m.explainers.push_back(attributions[i].empty()
                               ? std::string("?")
                               : explain::to_string(attributions[i].front().explainer));
  }
  for (std::size_t i = 0; i < e; ++i) {
    for (std::size_t j = i; j < e; ++j) {
      const auto s = summarize(pointwise(attributions[i], attributions[j], metric, k));
      m.means[i][j] = m.means[j][i] = s.mean;
      m.std_errs[i][j] = m.std_errs[j][i] = s.std_err;
      m.counts[i][j] = m.counts[j][i] = s.count;
    }
  }
  return m;
}

DisagreementMatrix disagreement_matrix(const nn::Model& model,
                                       std::span<const explain::Method> methods,
                                       const ad::Tensor& points,
                                       std::span<const std::size_t> point_ids,
                                       const explain::ExplainerConfig& config,
                                       Metric metric, std::size_t k) {
  std::vector<std::vector<explain::Attribution>> all;
  all.reserve(methods.size());
  for (auto method : methods) {
    all.push_back(explain::explain_points(model, method, points, config, point_ids));
  }
  auto m = disagreement_matrix(all, metric, k);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    m.explainers[i] = explain::to_string(methods[i]);
  }
  return m;
}

nlohmann::json DisagreementMatrix::to_json() const {
  nlohmann::json j;
  j["metric"] = to_string(metric);
  j["k"] = uses_k(metric) ? nlohmann::json(k) : nlohmann::json(nullptr);
  j["explainers"] = explainers;
  nlohmann::json mj = nlohmann::json::array(), sj = nlohmann::json::array();
  for (std::size_t i = 0; i < means.size(); ++i) {
    nlohmann::json mr = nlohmann::json::array(), sr = nlohmann::json::array();
    for (std::size_t c = 0; c < means[i].size(); ++c) {
      mr.push_back(json_number(means[i][c]));
      sr.push_back(json_number(std_errs[i][c]));
    }
    mj.push_back(mr);
    sj.push_back(sr);
  }
  j["means"] = mj;
  j["std_errs"] = sj;
  j["counts"] = counts;
  return j;
}

void DisagreementMatrix::write_csv(const std::filesystem::path& path,
                                   const std::string& header_comment) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "explainer_a,explainer_b,metric,k,mean,std_err,count\n";
  for (std::size_t i = 0; i < explainers.size(); ++i) {
    for (std::size_t c = 0; c < explainers.size(); ++c) {
      out << explainers[i] << ',' << explainers[c] << ',' << to_string(metric) << ','
          << (uses_k(metric) ? std::to_string(k) : std::string()) << ','
          << number(means[i][c]) << ',' << number(std_errs[i][c]) << ','
          << counts[i][c] << '\n';
    }
  }
}

}  // namespace pear::metrics
