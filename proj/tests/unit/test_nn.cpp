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
#include <random>

#include "../support/finite_difference.hpp"
#include "doctest.h"
#include "pear/nn.hpp"

using namespace pear;

namespace {

// Plain triple-loop forward pass used as a reference.
std::vector<double> reference_forward(const nn::Parameters& p,
                                      const std::vector<double>& x,
                                      std::size_t rows, nn::Activation act) {
  std::vector<double> h = x;
  std::size_t width = x.size() / rows;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& w = p.layers[l].weight;
    const auto& b = p.layers[l].bias;
    const std::size_t out = w.cols();
    std::vector<double> next(rows * out);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < out; ++j) {
        double s = b(0, j);
        for (std::size_t i = 0; i < width; ++i) s += h[r * width + i] * w(i, j);
        if (l + 1 < p.layers.size()) {
          s = act == nn::Activation::Relu ? std::max(0.0, s)
                                          : std::log1p(std::exp(s));
        }
        next[r * out + j] = s;
      }
    }
    h = std::move(next);
    width = out;
  }
  return h;
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

}  // namespace

TEST_CASE("init_parameters is deterministic with the documented shapes") {
  nn::MLPConfig c;
  c.input_dim = 7;
  c.seed = 11;
  const auto a = nn::init_parameters(c);
  const auto b = nn::init_parameters(c);
  REQUIRE(a.layers.size() == 4);
  const std::vector<ad::Shape> shapes{{7, 100}, {100, 100}, {100, 100}, {100, 2}};
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(a.layers[l].weight.shape() == shapes[l]);
    CHECK(a.layers[l].bias.shape() == ad::Shape{1, shapes[l].cols});
    CHECK(a.layers[l].weight.to_vector() == b.layers[l].weight.to_vector());
    for (double v : a.layers[l].bias.values()) CHECK(v == 0.0);
  }
  c.seed = 12;
  CHECK(nn::init_parameters(c).layers[0].weight.to_vector() !=
        a.layers[0].weight.to_vector());
}

TEST_CASE("first-layer weight spread follows the fan-in rule") {
  nn::MLPConfig c;
  c.input_dim = 7;
  c.hidden = {1500};
  c.seed = 3;
  const auto w = nn::init_parameters(c).layers[0].weight.to_vector();
  REQUIRE(w.size() >= 10000);
  double mean = 0, sq = 0;
  for (double v : w) mean += v;
  mean /= static_cast<double>(w.size());
  for (double v : w) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(w.size()));
  const double expected = std::sqrt(1.0 / 3.0 * 2.0 / 7.0);
  CHECK(std::fabs(sd - expected) / expected < 0.1);
}

TEST_CASE("config validation") {
  nn::MLPConfig c;
  c.input_dim = 3;
  c.hidden = {4, 0};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.hidden = {4};
  c.output_dim = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("forward examples") {
  nn::MLPConfig c;
  c.input_dim = 3;
  c.hidden = {5, 4};
  auto p = nn::init_parameters(c);
  for (auto& l : p.layers) {
    l.weight = ad::Tensor::zeros(l.weight.shape());
  }
  const ad::Tensor x({2, 3}, random_values(6, 1));
  const auto zero_out = nn::forward(c, p, x);
  for (double v : zero_out.values()) CHECK(v == 0.0);

  // One linear layer with weight column [1, -1] on each output.
  auto lc = nn::linear_config(2, 0);
  nn::Parameters lp;
  lp.layers.push_back({ad::Tensor({2, 2}, {1, 1, -1, -1}),
                       ad::Tensor({1, 2}, {0.5, -0.5})});
  const auto out = nn::forward(lc, lp, ad::Tensor({1, 2}, {3.0, 1.25}));
  CHECK(out(0, 0) == 3.0 - 1.25 + 0.5);
  CHECK(out(0, 1) == 3.0 - 1.25 - 0.5);

  CHECK_THROWS_AS(nn::forward(c, p, ad::Tensor::zeros({2, 4})), ad::ShapeError);
}

TEST_CASE("forward matches a straight-line reimplementation") {
  for (auto act : {nn::Activation::Relu, nn::Activation::Softplus}) {
    nn::MLPConfig c;
    c.input_dim = 6;
    c.hidden = {9, 7, 5};
    c.activation = act;
    c.seed = 21;
    const auto p = nn::init_parameters(c);
    const auto xs = random_values(8 * 6, 4);
    const auto got = nn::forward(c, p, ad::Tensor({8, 6}, xs)).to_vector();
    const auto want = reference_forward(p, xs, 8, act);
    CHECK(testing::relative_error(got, want, 1.0) < 1e-12);
  }
}

TEST_CASE("cross_entropy values") {
  const std::vector<std::size_t> zero{0, 0, 0};
  CHECK(nn::cross_entropy(ad::Tensor::zeros({3, 2}), zero).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const std::vector<std::size_t> one{0};
  CHECK(nn::cross_entropy(ad::Tensor({1, 2}, {20, -20}), one).item() < 1e-15);

  const auto logits = random_values(5 * 3, 9);
  const std::vector<std::size_t> labels{2, 0, 1, 1, 0};
  double want = 0;
  for (std::size_t r = 0; r < 5; ++r) {
    double z = 0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits[r * 3 + c]);
    want -= std::log(std::exp(logits[r * 3 + labels[r]]) / z);
  }
  want /= 5;
  const double got = nn::cross_entropy(ad::Tensor({5, 3}, logits), labels).item();
  CHECK(std::fabs(got - want) < 1e-10);
  CHECK(got >= 0);

  const std::vector<std::size_t> bad{0, 2};
  CHECK_THROWS_AS(nn::cross_entropy(ad::Tensor::zeros({2, 2}), bad),
                  std::out_of_range);
}

TEST_CASE("adamw_step hand-computed cases") {
  nn::Parameters p;
  p.layers.push_back({ad::Tensor({1, 1}, {1.0}), ad::Tensor({1, 1}, {0.0})});
  auto s = nn::make_optimizer(p, 0.001, 0.0);
  const std::vector<ad::Tensor> g{ad::Tensor({1, 1}, {1.0}),
                                  ad::Tensor({1, 1}, {0.0})};
  nn::adamw_step(s, p, g);
  // m_hat = 1, v_hat = 1 -> step of lr / (1 + eps)
  CHECK(p.layers[0].weight.item() == doctest::Approx(0.999).epsilon(1e-9));
  CHECK(p.layers[0].bias.item() == 0.0);
  CHECK(s.step == 1);

  // Zero gradient: pure shrinkage by (1 - lr wd).
  nn::Parameters q;
  q.layers.push_back({ad::Tensor({1, 2}, {2.0, -3.0}), ad::Tensor({1, 1}, {1.0})});
  auto sq = nn::make_optimizer(q, 0.01, 0.5);
  const std::vector<ad::Tensor> zero{ad::Tensor::zeros({1, 2}),
                                     ad::Tensor::zeros({1, 1})};
  for (int k = 1; k <= 3; ++k) {
    nn::adamw_step(sq, q, zero);
    const double f = std::pow(1 - 0.01 * 0.5, k);
    CHECK(q.layers[0].weight(0, 0) == doctest::Approx(2.0 * f).epsilon(1e-14));
    CHECK(q.layers[0].weight(0, 1) == doctest::Approx(-3.0 * f).epsilon(1e-14));
    CHECK(q.layers[0].bias.item() == doctest::Approx(f).epsilon(1e-14));
  }

  const std::vector<ad::Tensor> wrong{ad::Tensor::zeros({2, 1}),
                                      ad::Tensor::zeros({1, 1})};
  CHECK_THROWS_AS(nn::adamw_step(sq, q, wrong), ad::ShapeError);
}

TEST_CASE("adamw with zero decay matches a plain Adam oracle") {
  const auto start = random_values(6, 30);
  nn::Parameters p;
  p.layers.push_back({ad::Tensor({2, 3}, start), ad::Tensor::zeros({1, 3})});
  auto s = nn::make_optimizer(p, 0.01, 0.0);

  std::vector<double> w = start, m(6, 0), v(6, 0);
  for (int t = 1; t <= 20; ++t) {
    const auto g = random_values(6, 100 + static_cast<std::uint64_t>(t));
    const std::vector<ad::Tensor> grads{ad::Tensor({2, 3}, g),
                                        ad::Tensor::zeros({1, 3})};
    nn::adamw_step(s, p, grads);
    for (std::size_t i = 0; i < 6; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(testing::relative_error(p.layers[0].weight.to_vector(), w, 1.0) < 1e-12);
}

TEST_CASE("adamw_step is deterministic") {
  nn::MLPConfig c;
  c.input_dim = 4;
  c.hidden = {6};
  c.seed = 2;
  auto p1 = nn::init_parameters(c);
  auto p2 = nn::init_parameters(c);
  auto s1 = nn::make_optimizer(p1, 0.01, 0.1);
  auto s2 = nn::make_optimizer(p2, 0.01, 0.1);
  std::vector<ad::Tensor> grads;
  std::uint64_t k = 0;
  for (const auto& t : p1.flatten()) {
    grads.emplace_back(t.shape(), random_values(t.size(), 500 + k++));
  }
  nn::adamw_step(s1, p1, grads);
  nn::adamw_step(s2, p2, grads);
  const auto f1 = p1.flatten();
  const auto f2 = p2.flatten();
  for (std::size_t i = 0; i < f1.size(); ++i) {
    CHECK(f1[i].to_vector() == f2[i].to_vector());
  }
}

TEST_CASE("training epochs rule") {
  CHECK(nn::default_epochs(nn::ModelKind::Mlp, 0.0) == 30);
  CHECK(nn::default_epochs(nn::ModelKind::Mlp, 0.25) == 30);
  CHECK(nn::default_epochs(nn::ModelKind::Mlp, 0.5) == 50);
  CHECK(nn::default_epochs(nn::ModelKind::Mlp, 1.0) == 50);
  CHECK(nn::default_epochs(nn::ModelKind::Linear, 0.5) == 10);
  CHECK(nn::default_learning_rate(nn::ModelKind::Linear) == 0.1);
  CHECK(nn::default_learning_rate(nn::ModelKind::Mlp) == 0.0005);
}

TEST_CASE("training reaches high accuracy on separable data") {
  data::SyntheticSpec spec;
  spec.weights = {4.0, -3.0, 2.0, 0.0};
  spec.rows = 2000;
  spec.seed = 17;
  // Large weights with no noise make the labels almost deterministic.
  for (auto& w : spec.weights) w *= 25.0;
  auto ds = data::standardize(data::split(data::synthetic(spec), 1500, 1));

  nn::MLPConfig c;
  c.input_dim = 4;
  c.hidden = {32, 32};
  c.seed = 5;
  nn::TrainOptions opts;
  opts.epochs = 10;
  opts.learning_rate = 0.005;
  opts.shuffle_seed = 9;
  const auto result = nn::train(nn::make_model(c), ds.examples(data::Split::Train),
                                ds.examples(data::Split::Test), opts,
                                nn::task_loss());
  REQUIRE(result.history.epochs.size() == 10);
  CHECK(result.history.epochs.back().train_accuracy >= 0.99);
  CHECK(result.history.epochs.back().task_loss <
        result.history.epochs.front().task_loss);
  CHECK(result.history.steps.size() == 10 * ((1500 + 63) / 64));
}

TEST_CASE("training is bit-reproducible and reports the failing batch") {
  data::SyntheticSpec spec;
  spec.weights = {1.0, -1.0, 0.5};
  spec.rows = 300;
  spec.seed = 4;
  auto ds = data::standardize(data::split(data::synthetic(spec), 200, 2));
  nn::MLPConfig c;
  c.input_dim = 3;
  c.hidden = {8};
  c.seed = 1;
  nn::TrainOptions opts;
  opts.epochs = 3;
  const auto train_set = ds.examples(data::Split::Train);
  const auto a = nn::train(nn::make_model(c), train_set, {}, opts, nn::task_loss());
  const auto b = nn::train(nn::make_model(c), train_set, {}, opts, nn::task_loss());
  for (std::size_t l = 0; l < a.model.params.layers.size(); ++l) {
    CHECK(a.model.params.layers[l].weight.to_vector() ==
          b.model.params.layers[l].weight.to_vector());
  }
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(a.history.epochs[e].task_loss == b.history.epochs[e].task_loss);
  }

  std::size_t calls = 0;
  const nn::LossFn failing = [&](const nn::Model& m, const ad::Tensor& x,
                                 std::span<const std::size_t> y) {
    if (++calls == 6) throw std::runtime_error("boom");
    return nn::task_loss()(m, x, y);
  };
  try {
    (void)nn::train(nn::make_model(c), train_set, {}, opts, failing);
    FAIL("expected TrainError");
  } catch (const nn::TrainError& e) {
    // 200 rows at batch 64 gives 4 batches per epoch.
    CHECK(e.epoch() == 1);
    CHECK(e.batch() == 1);
    CHECK(std::string(e.what()).find("boom") != std::string::npos);
  }
}

TEST_CASE("input gradient of the MLP matches finite differences") {
  nn::MLPConfig c;
  c.input_dim = 5;
  c.hidden = {12, 12};
  c.seed = 8;
  const auto model = nn::make_model(c);
  const auto x0 = random_values(5, 41);
  for (std::size_t cls = 0; cls < 2; ++cls) {
    ad::Graph g;
    const auto x = g.variable(ad::Tensor::row(x0));
    const auto logit = ad::slice_cols(model.logits(x), cls, cls + 1);
    const auto grad = ad::gradient(logit, {x})[0].to_vector();
    const auto fd = testing::central_difference(
        [&](const std::vector<double>& p) {
          return model.logits(ad::Tensor::row(p))(0, cls);
        },
        x0, 1e-4);
    CHECK(testing::relative_error(grad, fd) < 1e-4);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  nn::MLPConfig c;
  c.input_dim = 3;
  c.hidden = {7, 4};
  c.activation = nn::Activation::Softplus;
  c.seed = 99;
  const auto model = nn::make_model(c);
  nn::History h;
  h.epochs.push_back({0, 0.7, 0.1, 0.55, std::numeric_limits<double>::quiet_NaN()});
  h.steps.push_back({0, 0.69314718055994529, 0.0, 0.3, 0.25});

  const auto path = std::filesystem::temp_directory_path() / "pear_ckpt_test.json";
  nn::save_checkpoint(path, model, h);
  const auto back = nn::load_checkpoint(path);
  CHECK(back.config.hidden == c.hidden);
  CHECK(back.config.activation == c.activation);
  CHECK(back.config.seed == 99);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(back.params.layers[l].weight.to_vector() ==
          model.params.layers[l].weight.to_vector());
    CHECK(back.params.layers[l].weight.shape() ==
          model.params.layers[l].weight.shape());
  }
  const auto hj = nn::history_from_checkpoint(nn::checkpoint_json(model, h));
  CHECK(hj.steps[0].task == 0.69314718055994529);
  CHECK(std::isnan(hj.epochs[0].test_accuracy));
  std::filesystem::remove(path);

  auto broken = nn::checkpoint_json(model, h);
  broken["layers"][1]["weight_shape"] = {7, 5};
  CHECK_THROWS(nn::model_from_checkpoint(broken));
}
