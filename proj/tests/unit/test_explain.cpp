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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "../support/finite_difference.hpp"
#include "../support/oracles.hpp"
#include "doctest.h"
#include "pear/explain.hpp"

using namespace pear;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed,
                                  double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

nn::Model linear_model(const std::vector<double>& w0, const std::vector<double>& w1,
                       double b0 = 0.3, double b1 = -0.2) {
  nn::Model m;
  m.config = nn::linear_config(w0.size(), 0);
  std::vector<double> w;
  for (std::size_t i = 0; i < w0.size(); ++i) {
    w.push_back(w0[i]);
    w.push_back(w1[i]);
  }
  m.params.layers.push_back({ad::Tensor({w0.size(), 2}, w), ad::Tensor({1, 2}, {b0, b1})});
  return m;
}

nn::Model mlp(std::size_t d, std::vector<std::size_t> hidden, std::uint64_t seed,
              nn::Activation act = nn::Activation::Relu) {
  nn::MLPConfig c;
  c.input_dim = d;
  c.hidden = std::move(hidden);
  c.activation = act;
  c.seed = seed;
  return nn::make_model(c);
}

double logit(const nn::Model& m, const std::vector<double>& x, std::size_t t) {
  return m.logits(ad::Tensor::row(x))(0, t);
}

}  // namespace

TEST_CASE("method names round-trip") {
  for (auto m : explain::kAllMethods) {
    CHECK(explain::method_from_string(explain::to_string(m)) == m);
  }
  CHECK_THROWS_AS(explain::method_from_string("anchors"), std::invalid_argument);
  CHECK(explain::differentiable(explain::Method::IntGrad));
  CHECK_FALSE(explain::differentiable(explain::Method::Lime));
}

TEST_CASE("gradient explainers on a linear model are exact") {
  const std::vector<double> w0{0.5, -1.25, 2.0, 0.1};
  const std::vector<double> w1{-0.7, 0.4, 1.5, -3.0};
  const auto model = linear_model(w0, w1);
  const std::vector<double> x{0.3, -1.1, 0.8, 2.2};
  explain::ExplainerConfig cfg;

  const auto g = explain::grad(model, x, 1);
  CHECK(g.scores == w1);
  CHECK(g.target == 1);
  CHECK(explain::grad(model, x, 0).scores == w0);

  const auto gi = explain::grad_input(model, x, 0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(gi.scores[i] == w0[i] * x[i]);
  for (double v : explain::grad_input(model, std::vector<double>(4, 0.0), 0).scores) {
    CHECK(v == 0.0);
  }

  for (std::size_t steps : {1u, 3u, 8u, 50u}) {
    cfg.intgrad_steps = steps;
    const auto ig = explain::intgrad(model, x, 1, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(std::fabs(ig.scores[i] - w1[i] * x[i]) < 1e-12);
    }
  }

  cfg.smoothgrad_samples = 7;
  cfg.smoothgrad_sigma = 0.8;
  const auto sg = explain::smoothgrad(model, x, 1, cfg, 5);
  CHECK(testing::relative_error(sg.scores, w1) < 1e-14);
}

TEST_CASE("grad matches finite differences of the target logit") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto model = mlp(6, {16, 16}, seed);
    const auto x = random_values(6, 100 + seed);
    for (std::size_t t = 0; t < 2; ++t) {
      const auto g = explain::grad(model, x, t);
      const auto fd = testing::central_difference(
          [&](const std::vector<double>& p) { return logit(model, p, t); }, x, 1e-6);
      CHECK(testing::relative_error(g.scores, fd) < 1e-4);

      const auto gi = explain::grad_input(model, x, t);
      for (std::size_t i = 0; i < 6; ++i) {
        CHECK(std::fabs(gi.scores[i] - g.scores[i] * x[i]) <= 1e-12 * std::fabs(g.scores[i] * x[i]));
      }
    }
  }
}

TEST_CASE("intgrad completeness on smooth MLPs") {
  explain::ExplainerConfig cfg;
  cfg.intgrad_steps = 256;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto model = mlp(5, {20, 20}, seed, nn::Activation::Softplus);
    const auto x = random_values(5, 40 + seed);
    const auto ig = explain::intgrad(model, x, 0, cfg);
    double total = 0;
    for (double v : ig.scores) total += v;
    const double gap = logit(model, x, 0) - logit(model, std::vector<double>(5, 0.0), 0);
    CHECK(std::fabs(total - gap) < 1e-3);
  }
}

TEST_CASE("intgrad completeness error shrinks as steps double") {
  std::vector<double> mean_err;
  for (std::size_t steps = 8; steps <= 256; steps *= 2) {
    explain::ExplainerConfig cfg;
    cfg.intgrad_steps = steps;
    double err = 0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto model = mlp(4, {16, 16}, 300 + seed, nn::Activation::Softplus);
      const auto x = random_values(4, 500 + seed, 2.0);
      const auto ig = explain::intgrad(model, x, 1, cfg);
      double total = 0;
      for (double v : ig.scores) total += v;
      err += std::fabs(total - (logit(model, x, 1) -
                                logit(model, std::vector<double>(4, 0.0), 1)));
    }
    mean_err.push_back(err / 8);
  }
  for (std::size_t i = 1; i < mean_err.size(); ++i) CHECK(mean_err[i] < mean_err[i - 1]);
}

TEST_CASE("intgrad baseline handling") {
  const auto model = mlp(3, {8}, 1);
  explain::ExplainerConfig cfg;
  cfg.intgrad_baseline = {0.2, -0.4, 1.0};
  const auto at_base = explain::intgrad(model, cfg.intgrad_baseline, 0, cfg);
  for (double v : at_base.scores) CHECK(v == 0.0);
  cfg.intgrad_baseline = {0.0, 1.0};
  CHECK_THROWS_AS(explain::intgrad(model, std::vector<double>{1, 2, 3}, 0, cfg),
                  ad::ShapeError);
}

TEST_CASE("smoothgrad is seeded and approaches grad as sigma shrinks") {
  const auto model = mlp(5, {12, 12}, 3, nn::Activation::Softplus);
  const auto x = random_values(5, 8);
  explain::ExplainerConfig cfg;
  cfg.seed = 4;
  const auto a = explain::smoothgrad(model, x, 0, cfg, 17);
  const auto b = explain::smoothgrad(model, x, 0, cfg, 17);
  CHECK(a.scores == b.scores);
  CHECK(explain::smoothgrad(model, x, 0, cfg, 18).scores != a.scores);
  cfg.seed = 5;
  CHECK(explain::smoothgrad(model, x, 0, cfg, 17).scores != a.scores);

  cfg.smoothgrad_sigma = 1e-7;
  const auto sharp = explain::smoothgrad(model, x, 0, cfg, 17);
  CHECK(testing::relative_error(sharp.scores, explain::grad(model, x, 0).scores) < 1e-5);

  cfg.smoothgrad_sigma = 0.0;
  CHECK_THROWS_AS(explain::smoothgrad(model, x, 0, cfg), std::invalid_argument);
}

TEST_CASE("lime recovers linear coefficients") {
  const std::vector<double> w0{0.5, -1.25, 2.0, 0.1, 0.0};
  const std::vector<double> w1{-0.7, 0.4, 1.5, -3.0, 0.05};
  const auto model = linear_model(w0, w1);
  const auto x = random_values(5, 2);
  explain::ExplainerConfig cfg;
  cfg.lime_ridge = 1e-10;
  cfg.lime_samples = 5000;
  const auto a = explain::lime(model, x, 1, cfg, 3);
  CHECK(testing::relative_error(a.scores, w1) < 0.01);
  CHECK(a.target == 1);
  CHECK_FALSE(a.ridge_used.has_value());

  // Raw-unit scales: slopes still come back in raw units.
  cfg.lime_scales = {2.0, 0.5, 1.0, 3.0, 1.5};
  CHECK(testing::relative_error(explain::lime(model, x, 1, cfg, 3).scores, w1) < 0.01);

  cfg.lime_scales.clear();
  cfg.lime_ridge = 1e-3;
  CHECK(explain::lime(model, x, 1, cfg, 3).scores == explain::lime(model, x, 1, cfg, 3).scores);

  const auto flat = linear_model(std::vector<double>(5, 0.0), std::vector<double>(5, 0.0));
  for (double v : explain::lime(flat, x, 0, cfg).scores) CHECK(std::fabs(v) < 1e-12);

  const explain::Scorer broken = [](const ad::Tensor& p) {
    return std::vector<double>(p.rows(), std::nan(""));
  };
  CHECK_THROWS_AS(explain::lime(broken, x, cfg, 9), explain::ExplainError);
}

TEST_CASE("lime matches a closed-form weighted least squares oracle") {
  // Quadratic scorer: the weighted fit is not exact, so compare against an
  // independent solve of the same weighted problem on the same samples.
  const std::size_t m = 3;
  std::vector<double> seen;
  const explain::Scorer quad = [&](const ad::Tensor& p) {
    std::vector<double> y(p.rows());
    seen = p.to_vector();
    for (std::size_t r = 0; r < p.rows(); ++r) {
      y[r] = p(r, 0) * p(r, 0) - 2 * p(r, 1) + 0.5 * p(r, 2) * p(r, 0);
    }
    return y;
  };
  const std::vector<double> x{0.4, -0.3, 1.2};
  explain::ExplainerConfig cfg;
  cfg.lime_samples = 400;
  cfg.lime_ridge = 1e-9;
  const auto a = explain::lime(quad, x, cfg, 1);

  // Gauss-Jordan on the 4x4 weighted normal equations.
  const double width2 = std::pow(0.75 * std::sqrt(3.0), 2);
  double A[4][5] = {};
  for (std::size_t r = 0; r < 400; ++r) {
    double f[4] = {1, seen[r * 3] - x[0], seen[r * 3 + 1] - x[1], seen[r * 3 + 2] - x[2]};
    const double d2 = f[1] * f[1] + f[2] * f[2] + f[3] * f[3];
    const double w = std::exp(-d2 / width2);
    const double y = seen[r * 3] * seen[r * 3] - 2 * seen[r * 3 + 1] +
                     0.5 * seen[r * 3 + 2] * seen[r * 3];
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) A[i][j] += w * f[i] * f[j];
      A[i][4] += w * f[i] * y;
    }
  }
  for (int c = 0; c < 4; ++c) {
    for (int r = 0; r < 4; ++r) {
      if (r == c) continue;
      const double factor = A[r][c] / A[c][c];
      for (int k = 0; k < 5; ++k) A[r][k] -= factor * A[c][k];
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    CHECK(a.scores[j] == doctest::Approx(A[j + 1][4] / A[j + 1][j + 1]).epsilon(1e-6));
  }
}

TEST_CASE("kernel_shap full enumeration equals permutation Shapley values") {
  for (std::size_t m = 2; m <= 8; ++m) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto model = mlp(m, {10, 10}, 10 * m + seed);
      const auto x = random_values(m, 700 + seed);
      explain::ExplainerConfig cfg;
      cfg.shap_background = random_values(m, 900 + seed, 0.5);
      const auto phi = explain::kernel_shap(model, x, 1, cfg);
      const auto oracle = testing::permutation_shapley(m, [&](unsigned mask) {
        std::vector<double> p(m);
        for (std::size_t j = 0; j < m; ++j) {
          p[j] = (mask >> j) & 1u ? x[j] : cfg.shap_background[j];
        }
        return logit(model, p, 1);
      });
      for (std::size_t j = 0; j < m; ++j) CHECK(std::fabs(phi.scores[j] - oracle[j]) < 1e-6);
    }
  }
}

TEST_CASE("kernel_shap additivity, background and errors") {
  const std::size_t m = 10;
  const auto g = [](std::size_t i, double v) {
    return std::sin(v + static_cast<double>(i)) + 0.1 * static_cast<double>(i) * v * v;
  };
  const explain::Scorer additive = [&](const ad::Tensor& p) {
    std::vector<double> y(p.rows(), 0.0);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      for (std::size_t i = 0; i < m; ++i) y[r] += g(i, p(r, i));
    }
    return y;
  };
  const auto x = random_values(m, 11);
  explain::ExplainerConfig cfg;
  cfg.shap_background = random_values(m, 12);
  for (std::size_t full_max : {14u, 0u}) {
    cfg.shap_full_max_features = full_max;
    cfg.shap_coalitions = 300;
    const auto phi = explain::kernel_shap(additive, x, cfg);
    for (std::size_t i = 0; i < m; ++i) {
      CHECK(std::fabs(phi.scores[i] - (g(i, x[i]) - g(i, cfg.shap_background[i]))) < 1e-9);
    }
  }

  const auto model = mlp(4, {8}, 2);
  cfg = {};
  for (double v : explain::kernel_shap(model, std::vector<double>(4, 0.0), 0, cfg).scores) {
    CHECK(std::fabs(v) < 1e-12);
  }
  CHECK_THROWS_AS(explain::kernel_shap(additive, std::vector<double>{1.0}, cfg),
                  explain::ExplainError);
  // Two sampled coalitions cannot pin down nine free coefficients.
  cfg.shap_full_max_features = 0;
  cfg.shap_coalitions = 2;
  CHECK_THROWS_AS(explain::kernel_shap(additive, x, cfg), explain::ExplainError);
}

TEST_CASE("graph-attached attributions differentiate with respect to parameters") {
  for (auto method : {explain::Method::Grad, explain::Method::IntGrad}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto base = mlp(3, {6, 6}, 60 + seed, nn::Activation::Softplus);
      const ad::Tensor x({2, 3}, random_values(6, 70 + seed));
      const std::vector<std::size_t> targets{0, 1};
      const auto mix = random_values(6, 80 + seed);

      const auto objective = [&](const nn::Model& m, ad::Graph& g, bool create) {
        const ad::Tensor attr =
            method == explain::Method::Grad
                ? explain::grad_rows(g, m, x, targets, create)
                : explain::intgrad_rows(g, m, x, targets, 8, {}, create);
        return ad::sum(attr * ad::Tensor({2, 3}, mix));
      };

      ad::Graph g;
      const nn::Model live{base.config, base.params.attach(g)};
      const auto leaves = live.params.flatten();
      const auto grads = ad::gradient(objective(live, g, true), leaves);

      auto flat = base.params.flatten();
      for (std::size_t k = 0; k < flat.size(); ++k) {
        const auto fd = testing::central_difference(
            [&](const std::vector<double>& p) {
              auto copy = flat;
              copy[k] = ad::Tensor(flat[k].shape(), p);
              const nn::Model m{base.config, nn::Parameters::unflatten(copy)};
              ad::Graph scratch;
              return objective(m, scratch, false).item();
            },
            flat[k].to_vector(), 1e-5);
        CHECK(testing::relative_error(grads[k].to_vector(), fd, 1e-6) < 1e-3);
      }
    }
  }
}

TEST_CASE("explain_points agrees with single-point calls and is batch independent") {
  const auto model = mlp(4, {10}, 9, nn::Activation::Softplus);
  const ad::Tensor pts({6, 4}, random_values(24, 33));
  explain::ExplainerConfig cfg;
  cfg.lime_samples = 200;
  cfg.seed = 2;
  const std::vector<std::size_t> ids{10, 11, 12, 13, 14, 15};
  const auto targets = explain::predicted_targets(model, pts);
  for (auto method : explain::kAllMethods) {
    const auto all = explain::explain_points(model, method, pts, cfg, ids);
    REQUIRE(all.size() == 6);
    for (std::size_t r = 0; r < 6; ++r) {
      const auto x = pts.row_values(r);
      explain::Attribution one;
      switch (method) {
        case explain::Method::Grad: one = explain::grad(model, x, targets[r]); break;
        case explain::Method::GradInput: one = explain::grad_input(model, x, targets[r]); break;
        case explain::Method::IntGrad: one = explain::intgrad(model, x, targets[r], cfg); break;
        case explain::Method::SmoothGrad:
          one = explain::smoothgrad(model, x, targets[r], cfg, ids[r]);
          break;
        case explain::Method::Lime: one = explain::lime(model, x, targets[r], cfg, ids[r]); break;
        case explain::Method::KernelShap:
          one = explain::kernel_shap(model, x, targets[r], cfg, ids[r]);
          break;
      }
      CHECK(all[r].point_id == ids[r]);
      CHECK(all[r].target == targets[r]);
      CHECK(all[r].explainer == method);
      CHECK(testing::relative_error(all[r].scores, one.scores, 1e-9) < 1e-12);
    }
  }
}

TEST_CASE("attribution CSV layout") {
  std::vector<explain::Attribution> attrs(1);
  attrs[0].scores = {0.5, -0.125};
  attrs[0].explainer = explain::Method::Lime;
  attrs[0].point_id = 42;
  const auto path = std::filesystem::temp_directory_path() / "pear_attr.csv";
  explain::write_attributions_csv(path, attrs, "seed=1");
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "# seed=1\npoint_id,explainer,feature,score\n42,lime,0,0.5\n42,lime,1,-0.125\n");
  std::filesystem::remove(path);
}

TEST_CASE("config validation lists every problem") {
  explain::ExplainerConfig cfg;
  cfg.intgrad_steps = 0;
  cfg.lime_ridge = -1;
  try {
    cfg.validate();
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    CHECK(what.find("intgrad_steps") != std::string::npos);
    CHECK(what.find("lime_ridge") != std::string::npos);
  }
}
