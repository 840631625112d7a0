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

#include "pear/explain.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "pear/random.hpp"

namespace pear::explain {

namespace {

constexpr std::size_t kRowBudget = 8192;

std::uint64_t method_stream(Method m) {
  return 0x9a0 + static_cast<std::uint64_t>(m);
}

Rng point_rng(const ExplainerConfig& config, Method m, std::size_t point_id) {
  return make_rng(config.seed, derive_seed(point_id, method_stream(m)));
}

void check_targets(const ad::Tensor& logits,
                   std::span<const std::size_t> targets) {
  if (targets.size() != logits.rows()) {
    throw ad::ShapeError(std::to_string(targets.size()) + " targets for " +
                         std::to_string(logits.rows()) + " points");
  }
  for (auto t : targets) {
    if (t >= logits.cols()) {
      throw std::out_of_range("target class " + std::to_string(t) +
                              " outside [0, " + std::to_string(logits.cols()) +
                              ")");
    }
  }
}

// Sum of the target logits of every row; the seed of the backward pass.
ad::Tensor target_sum(const ad::Tensor& logits,
                      std::span<const std::size_t> targets) {
  check_targets(logits, targets);
  std::vector<std::size_t> idx(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    idx[i] = i * logits.cols() + targets[i];
  }
  return ad::sum(ad::gather(logits, std::move(idx), {targets.size(), 1}));
}

std::vector<double> resolve_vector(std::span<const double> given, std::size_t d,
                                   double fill, const char* what) {
  if (given.empty()) return std::vector<double>(d, fill);
  if (given.size() != d) {
    throw ad::ShapeError(std::string(what) + " has " +
                         std::to_string(given.size()) + " entries, point has " +
                         std::to_string(d));
  }
  return {given.begin(), given.end()};
}

Attribution make_attribution(std::vector<double> scores, Method m,
                             std::size_t target, std::size_t point_id) {
  Attribution a;
  a.scores = std::move(scores);
  a.explainer = m;
  a.target = target;
  a.point_id = point_id;
  return a;
}

// Gradient rows for points that each own `samples` consecutive rows of
// `stacked`, averaged per point.
std::vector<std::vector<double>> mean_grad_blocks(
    const nn::Model& model, const ad::Tensor& stacked,
    std::span<const std::size_t> targets, std::size_t samples) {
  std::vector<std::size_t> expanded;
  expanded.reserve(stacked.rows());
  for (auto t : targets) expanded.insert(expanded.end(), samples, t);
  ad::Graph graph;
  const auto g = grad_rows(graph, model, stacked, expanded, false);
  const std::size_t d = stacked.cols();
  std::vector<std::vector<double>> out(targets.size(), std::vector<double>(d, 0.0));
  for (std::size_t p = 0; p < targets.size(); ++p) {
    for (std::size_t s = 0; s < samples; ++s) {
      const auto row = g.row_values(p * samples + s);
      for (std::size_t j = 0; j < d; ++j) out[p][j] += row[j];
    }
    for (auto& v : out[p]) v /= static_cast<double>(samples);
  }
  return out;
}

std::vector<std::vector<double>> smoothgrad_points(
    const nn::Model& model, const ad::Tensor& points,
    std::span<const std::size_t> targets, std::span<const std::size_t> ids,
    const ExplainerConfig& config) {
  const std::size_t n = config.smoothgrad_samples;
  const std::size_t d = points.cols();
  std::vector<double> stacked;
  stacked.reserve(points.rows() * n * d);
  std::normal_distribution<double> normal(0.0, config.smoothgrad_sigma);
  for (std::size_t p = 0; p < points.rows(); ++p) {
    Rng rng = point_rng(config, Method::SmoothGrad, ids[p]);
    const auto x = points.row_values(p);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t j = 0; j < d; ++j) stacked.push_back(x[j] + normal(rng));
    }
  }
  return mean_grad_blocks(model, ad::Tensor({points.rows() * n, d}, std::move(stacked)),
                          targets, n);
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  std::uint64_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::Grad: return "grad";
    case Method::GradInput: return "grad_input";
    case Method::IntGrad: return "intgrad";
    case Method::SmoothGrad: return "smoothgrad";
    case Method::Lime: return "lime";
    case Method::KernelShap: return "shap";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  for (auto m : kAllMethods) {
    if (to_string(m) == s) return m;
  }
  if (s == "kernel_shap") return Method::KernelShap;
  throw std::invalid_argument("unknown explainer '" + s + "'");
}

bool differentiable(Method m) noexcept {
  return m == Method::Grad || m == Method::GradInput || m == Method::IntGrad;
}

ExplainError::ExplainError(const std::string& what,
                           std::optional<std::size_t> point)
    : std::runtime_error(point ? "point " + std::to_string(*point) + ": " + what
                               : what),
      point_(point) {}

void ExplainerConfig::validate() const {
  std::vector<std::string> problems;
  if (intgrad_steps == 0) problems.emplace_back("intgrad_steps must be positive");
  if (smoothgrad_samples == 0) {
    problems.emplace_back("smoothgrad_samples must be positive");
  }
  if (!(smoothgrad_sigma > 0)) problems.emplace_back("smoothgrad_sigma must be positive");
  if (lime_samples == 0) problems.emplace_back("lime_samples must be positive");
  if (!(lime_kernel_width >= 0)) {
    problems.emplace_back("lime_kernel_width must be positive (0 = default)");
  }
  if (!(lime_ridge > 0)) problems.emplace_back("lime_ridge must be positive");
  for (double s : lime_scales) {
    if (!(s > 0)) {
      problems.emplace_back("lime_scales entries must be positive");
      break;
    }
  }
  if (shap_coalitions == 0) problems.emplace_back("shap_coalitions must be positive");
  if (problems.empty()) return;
  std::string msg = "explainer config:";
  for (const auto& p : problems) msg += " " + p + ";";
  throw std::invalid_argument(msg);
}

double ExplainerConfig::kernel_width(std::size_t features) const {
  return lime_kernel_width > 0
             ? lime_kernel_width
             : 0.75 * std::sqrt(static_cast<double>(features));
}

Scorer target_scorer(const nn::Model& model, std::size_t target) {
  return [&model, target](const ad::Tensor& points) {
    ad::NoGradGuard guard;
    std::vector<double> out;
    out.reserve(points.rows());
    for (std::size_t begin = 0; begin < points.rows(); begin += kRowBudget) {
      const std::size_t end = std::min(points.rows(), begin + kRowBudget);
      const auto logits = model.logits(ad::slice_rows(points, begin, end));
      if (target >= logits.cols()) {
        throw std::out_of_range("target class " + std::to_string(target) +
                                " outside [0, " + std::to_string(logits.cols()) + ")");
      }
      for (std::size_t r = 0; r < logits.rows(); ++r) out.push_back(logits(r, target));
    }
    return out;
  };
}

std::vector<std::size_t> predicted_targets(const nn::Model& model,
                                           const ad::Tensor& points) {
  return nn::predict(model, points);
}

ad::Tensor grad_rows(ad::Graph& graph, const nn::Model& model,
                     const ad::Tensor& x, std::span<const std::size_t> targets,
                     bool create_graph) {
  const ad::Tensor xv = graph.variable(x.detach());
  const ad::Tensor total = target_sum(model.logits(xv), targets);
  return ad::gradient(total, {xv}, create_graph)[0];
}

ad::Tensor grad_input_rows(ad::Graph& graph, const nn::Model& model,
                           const ad::Tensor& x,
                           std::span<const std::size_t> targets,
                           bool create_graph) {
  return grad_rows(graph, model, x, targets, create_graph) * x.detach();
}

ad::Tensor intgrad_rows(ad::Graph& graph, const nn::Model& model,
                        const ad::Tensor& x,
                        std::span<const std::size_t> targets, std::size_t steps,
                        std::span<const double> baseline, bool create_graph) {
  if (steps == 0) throw std::invalid_argument("intgrad: steps must be positive");
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const auto base = resolve_vector(baseline, d, 0.0, "intgrad baseline");
  if (targets.size() != n) {
    throw ad::ShapeError(std::to_string(targets.size()) + " targets for " +
                         std::to_string(n) + " points");
  }

  std::vector<double> path(steps * n * d);
  std::vector<double> delta(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row_values(i);
    for (std::size_t j = 0; j < d; ++j) delta[i * d + j] = row[j] - base[j];
  }
  std::vector<std::size_t> expanded(steps * n);
  for (std::size_t k = 0; k < steps; ++k) {
    const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < n; ++i) {
      expanded[k * n + i] = targets[i];
      for (std::size_t j = 0; j < d; ++j) {
        path[(k * n + i) * d + j] = base[j] + alpha * delta[i * d + j];
      }
    }
  }
  const ad::Tensor g = grad_rows(graph, model, ad::Tensor({steps * n, d}, std::move(path)),
                                 expanded, create_graph);
  ad::Tensor acc = ad::slice_rows(g, 0, n);
  for (std::size_t k = 1; k < steps; ++k) {
    acc = acc + ad::slice_rows(g, k * n, (k + 1) * n);
  }
  const ad::Tensor scaled = ad::Tensor({n, d}, std::move(delta)) *
                            (1.0 / static_cast<double>(steps));
  return acc * scaled;
}

Attribution grad(const nn::Model& model, std::span<const double> x,
                 std::size_t target) {
  ad::Graph graph;
  const std::size_t t[] = {target};
  const auto g = grad_rows(graph, model, ad::Tensor::row({x.begin(), x.end()}), t, false);
  return make_attribution(g.to_vector(), Method::Grad, target, 0);
}

Attribution grad_input(const nn::Model& model, std::span<const double> x,
                       std::size_t target) {
  ad::Graph graph;
  const std::size_t t[] = {target};
  const auto g =
      grad_input_rows(graph, model, ad::Tensor::row({x.begin(), x.end()}), t, false);
  return make_attribution(g.to_vector(), Method::GradInput, target, 0);
}

Attribution intgrad(const nn::Model& model, std::span<const double> x,
                    std::size_t target, const ExplainerConfig& config) {
  ad::Graph graph;
  const std::size_t t[] = {target};
  const auto g = intgrad_rows(graph, model, ad::Tensor::row({x.begin(), x.end()}), t,
                              config.intgrad_steps, config.intgrad_baseline, false);
  return make_attribution(g.to_vector(), Method::IntGrad, target, 0);
}

Attribution smoothgrad(const nn::Model& model, std::span<const double> x,
                       std::size_t target, const ExplainerConfig& config,
                       std::size_t point_id) {
  if (!(config.smoothgrad_sigma > 0)) {
    throw std::invalid_argument("smoothgrad: sigma must be positive");
  }
  const std::size_t t[] = {target};
  const std::size_t id[] = {point_id};
  auto rows = smoothgrad_points(model, ad::Tensor::row({x.begin(), x.end()}), t,
                                id, config);
  return make_attribution(std::move(rows[0]), Method::SmoothGrad, target, point_id);
}

Attribution lime(const nn::Model& model, std::span<const double> x,
                 std::size_t target, const ExplainerConfig& config,
                 std::size_t point_id) {
  auto a = lime(target_scorer(model, target), x, config, point_id);
  a.target = target;
  return a;
}

Attribution lime(const Scorer& scorer, std::span<const double> x,
                 const ExplainerConfig& config, std::size_t point_id) {
  const std::size_t m = x.size();
  const std::size_t n = config.lime_samples;
  if (m == 0) throw ExplainError("lime: empty point", point_id);
  const auto scales = resolve_vector(config.lime_scales, m, 1.0, "lime scales");
  const double width = config.kernel_width(m);

  Rng rng = point_rng(config, Method::Lime, point_id);
  std::normal_distribution<double> normal;
  std::vector<double> samples(n * m);
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m + 1));
  Eigen::VectorXd weights(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    double dist2 = 0.0;
    design(r, 0) = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double e = normal(rng);
      samples[i * m + j] = x[j] + scales[j] * e;
      design(r, static_cast<Eigen::Index>(j + 1)) = e;
      dist2 += e * e;
    }
    weights(r) = std::exp(-dist2 / (width * width));
  }
  const auto y = scorer(ad::Tensor({n, m}, std::move(samples)));
  if (y.size() != n) throw ExplainError("lime: scorer returned wrong length", point_id);
  const Eigen::Map<const Eigen::VectorXd> target(y.data(), static_cast<Eigen::Index>(n));

  const Eigen::MatrixXd gram = design.transpose() * weights.asDiagonal() * design;
  const Eigen::VectorXd rhs = design.transpose() * weights.asDiagonal() * target;
  double ridge = config.lime_ridge;
  for (int attempt = 0; attempt < 12; ++attempt, ridge *= 10.0) {
    Eigen::MatrixXd penalized = gram;
    for (std::size_t j = 1; j <= m; ++j) {
      penalized(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) += ridge;
    }
    const Eigen::LDLT<Eigen::MatrixXd> solver(penalized);
    if (solver.info() != Eigen::Success || !solver.isPositive()) continue;
    const Eigen::VectorXd beta = solver.solve(rhs);
    if (!beta.allFinite()) continue;
    if ((penalized * beta - rhs).norm() > 1e-8 * (1.0 + rhs.norm())) continue;
    std::vector<double> scores(m);
    // Coefficients were fitted in scaled units.
    for (std::size_t j = 0; j < m; ++j) {
      scores[j] = beta(static_cast<Eigen::Index>(j + 1)) / scales[j];
    }
    auto a = make_attribution(std::move(scores), Method::Lime, 0, point_id);
    if (attempt > 0) a.ridge_used = ridge;
    return a;
  }
  throw ExplainError("lime: normal equations stayed singular up to ridge " +
                         std::to_string(ridge),
                     point_id);
}

Attribution kernel_shap(const nn::Model& model, std::span<const double> x,
                        std::size_t target, const ExplainerConfig& config,
                        std::size_t point_id) {
  auto a = kernel_shap(target_scorer(model, target), x, config, point_id);
  a.target = target;
  return a;
}

Attribution kernel_shap(const Scorer& scorer, std::span<const double> x,
                        const ExplainerConfig& config, std::size_t point_id) {
  const std::size_t m = x.size();
  if (m < 2) throw ExplainError("kernel_shap: need at least 2 features", point_id);
  const auto background = resolve_vector(config.shap_background, m, 0.0, "shap background");

  const bool full = m <= config.shap_full_max_features ||
                    (m < 63 && (std::uint64_t{1} << m) <= config.shap_coalitions);
  if (full && m > 30) throw ExplainError("kernel_shap: too many features to enumerate");

  // Coalitions as 0/1 rows; the first two are empty and full.
  std::vector<std::uint8_t> masks;
  std::vector<double> weights;
  masks.insert(masks.end(), m, 0);
  masks.insert(masks.end(), m, 1);
  if (full) {
    const std::uint64_t count = std::uint64_t{1} << m;
    for (std::uint64_t bits = 1; bits + 1 < count; ++bits) {
      std::size_t size = 0;
      for (std::size_t j = 0; j < m; ++j) {
        const bool on = (bits >> j) & 1u;
        masks.push_back(on ? 1 : 0);
        size += on ? 1 : 0;
      }
      weights.push_back(static_cast<double>(m - 1) /
                        (static_cast<double>(binomial(m, size)) *
                         static_cast<double>(size * (m - size))));
    }
  } else {
    // Coalition sizes drawn in proportion to their total kernel weight, then
    // a uniform subset of that size; every sample then carries weight 1.
    std::vector<double> size_weight(m - 1);
    for (std::size_t s = 1; s < m; ++s) {
      size_weight[s - 1] = static_cast<double>(m - 1) / static_cast<double>(s * (m - s));
    }
    std::discrete_distribution<std::size_t> pick_size(size_weight.begin(),
                                                      size_weight.end());
    Rng rng = point_rng(config, Method::KernelShap, point_id);
    std::vector<std::size_t> perm(m);
    for (std::size_t c = 0; c < config.shap_coalitions; ++c) {
      const std::size_t size = pick_size(rng) + 1;
      std::iota(perm.begin(), perm.end(), 0);
      std::vector<std::uint8_t> row(m, 0);
      for (std::size_t i = 0; i < size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, m - 1);
        std::swap(perm[i], perm[pick(rng)]);
        row[perm[i]] = 1;
      }
      masks.insert(masks.end(), row.begin(), row.end());
      weights.push_back(1.0);
    }
  }

  const std::size_t rows = masks.size() / m;
  std::vector<double> points(rows * m);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      points[r * m + j] = masks[r * m + j] ? x[j] : background[j];
    }
  }
  const auto values = scorer(ad::Tensor({rows, m}, std::move(points)));
  if (values.size() != rows) {
    throw ExplainError("kernel_shap: scorer returned wrong length", point_id);
  }
  const double v0 = values[0];
  const double delta = values[1] - v0;

  // The last feature is eliminated through the efficiency constraint.
  const auto k = static_cast<Eigen::Index>(m - 1);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd a(k);
  for (std::size_t r = 2; r < rows; ++r) {
    const std::uint8_t* z = &masks[r * m];
    const double last = z[m - 1];
    for (Eigen::Index j = 0; j < k; ++j) a(j) = z[j] - last;
    const double y = values[r] - v0 - last * delta;
    const double w = weights[r - 2];
    gram.noalias() += w * a * a.transpose();
    rhs.noalias() += w * y * a;
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
  if (lu.rank() < k) {
    throw ExplainError("kernel_shap: degenerate coalition system (rank " +
                           std::to_string(lu.rank()) + " of " + std::to_string(k) + ")",
                       point_id);
  }
  const Eigen::VectorXd phi = lu.solve(rhs);
  std::vector<double> scores(m);
  double partial = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    scores[static_cast<std::size_t>(j)] = phi(j);
    partial += phi(j);
  }
  scores[m - 1] = delta - partial;
  return make_attribution(std::move(scores), Method::KernelShap, 0, point_id);
}

std::vector<Attribution> explain_points(const nn::Model& model, Method method,
                                        const ad::Tensor& points,
                                        const ExplainerConfig& config,
                                        std::span<const std::size_t> point_ids) {
  config.validate();
  const std::size_t n = points.rows();
  std::vector<std::size_t> ids(point_ids.begin(), point_ids.end());
  if (ids.empty()) {
    ids.resize(n);
    std::iota(ids.begin(), ids.end(), 0);
  }
  if (ids.size() != n) {
    throw ad::ShapeError(std::to_string(ids.size()) + " point ids for " +
                         std::to_string(n) + " points");
  }
  const auto targets = predicted_targets(model, points);

  std::vector<Attribution> out;
  out.reserve(n);
  const auto emit_rows = [&](const ad::Tensor& scores, std::size_t begin) {
    for (std::size_t r = 0; r < scores.rows(); ++r) {
      const auto row = scores.row_values(r);
      out.push_back(make_attribution({row.begin(), row.end()}, method,
                                     targets[begin + r], ids[begin + r]));
    }
  };

  std::size_t per_point = 1;
  if (method == Method::IntGrad) per_point = config.intgrad_steps;
  if (method == Method::SmoothGrad) per_point = config.smoothgrad_samples;
  const std::size_t chunk = std::max<std::size_t>(1, kRowBudget / per_point);

  for (std::size_t begin = 0; begin < n;) {
    const bool batched = differentiable(method) || method == Method::SmoothGrad;
    const std::size_t end = batched ? std::min(n, begin + chunk) : begin + 1;
    const std::span<const std::size_t> t(targets.data() + begin, end - begin);
    try {
      const ad::Tensor part = ad::slice_rows(points, begin, end);
      ad::Graph graph;
      switch (method) {
        case Method::Grad:
          emit_rows(grad_rows(graph, model, part, t, false), begin);
          break;
        case Method::GradInput:
          emit_rows(grad_input_rows(graph, model, part, t, false), begin);
          break;
        case Method::IntGrad:
          emit_rows(intgrad_rows(graph, model, part, t, config.intgrad_steps,
                                 config.intgrad_baseline, false),
                    begin);
          break;
        case Method::SmoothGrad: {
          auto rows = smoothgrad_points(
              model, part, t, std::span<const std::size_t>(ids).subspan(begin, end - begin),
              config);
          for (std::size_t r = 0; r < rows.size(); ++r) {
            out.push_back(make_attribution(std::move(rows[r]), method,
                                           targets[begin + r], ids[begin + r]));
          }
          break;
        }
        case Method::Lime: {
          const auto x = points.row_values(begin);
          out.push_back(lime(model, x, targets[begin], config, ids[begin]));
          break;
        }
        case Method::KernelShap: {
          const auto x = points.row_values(begin);
          out.push_back(kernel_shap(model, x, targets[begin], config, ids[begin]));
          break;
        }
      }
    } catch (const ExplainError&) {
      throw;
    } catch (const std::exception& e) {
      throw ExplainError(to_string(method) + ": " + e.what(), ids[begin]);
    }
    begin = end;
  }
  return out;
}

void write_attributions_csv(const std::filesystem::path& path,
                            std::span<const Attribution> attributions,
                            const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "point_id,explainer,feature,score\n";
  char buf[64];
  for (const auto& a : attributions) {
    const std::string name = to_string(a.explainer);
    for (std::size_t j = 0; j < a.scores.size(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof buf, a.scores[j]);
      out << a.point_id << ',' << name << ',' << j << ','
          << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << '\n';
    }
  }
}

}  // namespace pear::explain
