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

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "pear/experiments.hpp"
#include "pear/random.hpp"

namespace pear::experiments {

namespace {

std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

std::ofstream open_report(const std::filesystem::path& path,
                          const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  return out;
}

struct Setting {
  nn::ModelKind model;
  double lambda;
  double mu;
  double weight_decay;
};

// Trains every (setting, trial) and aggregates rows in setting order.
SweepResult run_settings(const RunConfig& base, const data::Dataset& dataset,
                         const std::vector<Setting>& settings, bool with_mae) {
  SweepResult result;
  const auto eval = evaluation_set(dataset, base.evaluation.points);
  for (const auto& s : settings) {
    RunConfig c = base;
    c.model = s.model;
    c.lambda = s.lambda;
    c.mu = s.mu;
    c.weight_decay = s.weight_decay;
    std::vector<double> acc, agree, mae;
    for (std::size_t t = 0; t < base.trials; ++t) {
      const auto before = consensus::counters();
      const auto trained = train_model(c, dataset, t);
      const auto after = consensus::counters();
      TrialRow row;
      row.model = s.model;
      row.lambda = s.lambda;
      row.mu = s.mu;
      row.weight_decay = s.weight_decay;
      row.trial = t;
      row.test_accuracy = trained.test_accuracy;
      row.pearson_calls = after.pearson - before.pearson;
      row.spearman_calls = after.spearman - before.spearman;
      const auto ec = explainer_config(c, dataset, trained.seeds.explainer);
      row.agreement = pair_agreement(trained.model, eval, base.evaluation.pair[0],
                                     base.evaluation.pair[1], base.evaluation.metric,
                                     base.evaluation.k, ec)
                          .mean;
      if (with_mae) row.mae = linear_fit_mae(trained.model, eval, base.planes).mean;
      acc.push_back(row.test_accuracy);
      agree.push_back(row.agreement);
      mae.push_back(row.mae);
      result.trials.push_back(row);
    }
    SweepRow row;
    row.model = s.model;
    row.lambda = s.lambda;
    row.mu = s.mu;
    row.weight_decay = s.weight_decay;
    row.accuracy = metrics::summarize(acc);
    row.agreement = metrics::summarize(agree);
    row.mae = metrics::summarize(mae);
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace

TrialSeeds trial_seeds(std::uint64_t seed, std::size_t trial) {
  const auto t = static_cast<std::uint64_t>(trial);
  return {pear::derive_seed(seed, 0x100 + t), pear::derive_seed(seed, 0x200 + t),
          pear::derive_seed(seed, 0x300 + t)};
}

TrainedModel train_model(const RunConfig& config, const data::Dataset& dataset,
                         std::size_t trial) {
  TrainedModel out;
  out.seeds = trial_seeds(config.seed, trial);
  nn::MLPConfig mc;
  mc.input_dim = dataset.feature_count;
  if (config.model == nn::ModelKind::Linear) {
    mc = nn::linear_config(dataset.feature_count, out.seeds.init);
  } else {
    mc.hidden = config.hidden;
    mc.activation = config.activation;
    mc.seed = out.seeds.init;
  }
  nn::TrainOptions options;
  options.epochs = config.resolved_epochs();
  options.batch_size = config.batch_size;
  options.learning_rate = config.resolved_learning_rate();
  options.weight_decay = config.weight_decay;
  options.shuffle_seed = out.seeds.shuffle;
  const auto loss = config.lambda == 0.0 ? nn::task_loss()
                                         : consensus::make_loss(config.consensus_config());
  auto result = nn::train(nn::make_model(mc), dataset.examples(data::Split::Train),
                          dataset.examples(data::Split::Test), options, loss);
  out.model = std::move(result.model);
  out.history = std::move(result.history);
  out.train_accuracy = out.history.epochs.back().train_accuracy;
  out.test_accuracy = out.history.epochs.back().test_accuracy;
  return out;
}

EvalSet evaluation_set(const data::Dataset& dataset, std::size_t max_points) {
  const auto test = dataset.indices(data::Split::Test);
  const std::size_t n = std::min(max_points, test.size());
  std::vector<std::size_t> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  EvalSet eval;
  eval.points = dataset.examples(data::Split::Test).rows(positions).features;
  eval.ids.assign(test.begin(), test.begin() + static_cast<std::ptrdiff_t>(n));
  return eval;
}

explain::ExplainerConfig explainer_config(const RunConfig& config,
                                          const data::Dataset&, std::uint64_t seed) {
  auto ec = config.explainer;
  ec.seed = seed;
  return ec;
}

metrics::Summary pair_agreement(const nn::Model& model, const EvalSet& eval,
                                explain::Method a, explain::Method b,
                                metrics::Metric metric, std::size_t k,
                                const explain::ExplainerConfig& config) {
  const auto ea = explain::explain_points(model, a, eval.points, config, eval.ids);
  const auto eb = explain::explain_points(model, b, eval.points, config, eval.ids);
  return metrics::summarize(metrics::pointwise(ea, eb, metric, k));
}

SweepResult lambda_sweep(const RunConfig& config, const data::Dataset& dataset) {
  std::vector<Setting> settings;
  for (double l : config.lambdas) {
    settings.push_back({nn::ModelKind::Mlp, l, config.mu, config.weight_decay});
  }
  settings.push_back({nn::ModelKind::Linear, 0.0, config.mu, config.weight_decay});
  return run_settings(config, dataset, settings, false);
}

SweepResult weight_decay_sweep(const RunConfig& config, const data::Dataset& dataset) {
  std::vector<Setting> settings;
  for (double wd : config.decays) {
    settings.push_back({config.model, config.lambda, config.mu, wd});
  }
  return run_settings(config, dataset, settings, true);
}

SweepResult mu_ablation(const RunConfig& config, const data::Dataset& dataset) {
  std::vector<Setting> settings;
  for (double mu : config.mus) {
    for (double l : config.lambdas) {
      settings.push_back({config.model, l, mu, config.weight_decay});
    }
  }
  return run_settings(config, dataset, settings, false);
}

void write_sweep(const SweepResult& result, const std::filesystem::path& summary,
                 const std::filesystem::path& per_trial,
                 const std::string& header_comment) {
  {
    auto out = open_report(summary, header_comment);
    out << "model,lambda,mu,weight_decay,accuracy_mean,accuracy_std_err,"
           "agreement_mean,agreement_std_err,mae_mean,mae_std_err,trials\n";
    for (const auto& r : result.rows) {
      out << nn::to_string(r.model) << ',' << number(r.lambda) << ',' << number(r.mu) << ','
          << number(r.weight_decay) << ',' << number(r.accuracy.mean) << ','
          << number(r.accuracy.std_err) << ',' << number(r.agreement.mean) << ','
          << number(r.agreement.std_err) << ',' << number(r.mae.mean) << ','
          << number(r.mae.std_err) << ',' << r.accuracy.count << '\n';
    }
  }
  auto out = open_report(per_trial, header_comment);
  out << "model,lambda,mu,weight_decay,trial,test_accuracy,agreement,mae,"
         "pearson_calls,spearman_calls\n";
  for (const auto& r : result.trials) {
    out << nn::to_string(r.model) << ',' << number(r.lambda) << ',' << number(r.mu) << ','
        << number(r.weight_decay) << ',' << r.trial << ',' << number(r.test_accuracy) << ','
        << number(r.agreement) << ',' << number(r.mae) << ',' << r.pearson_calls << ','
        << r.spearman_calls << '\n';
  }
}

double junk_topk_frequency(std::span<const explain::Attribution> attributions,
                           const std::vector<bool>& junk, std::size_t k) {
  if (attributions.empty()) throw std::invalid_argument("junk frequency: no attributions");
  std::size_t hits = 0;
  for (const auto& a : attributions) {
    if (a.scores.size() != junk.size()) {
      throw std::invalid_argument("junk frequency: attribution width " +
                                  std::to_string(a.scores.size()) + " but " +
                                  std::to_string(junk.size()) + " features");
    }
    const auto top = metrics::top_k(a.scores, k);
    if (std::any_of(top.begin(), top.end(), [&](std::size_t i) { return junk[i]; })) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(attributions.size());
}

double chance_hypergeometric(std::size_t real, std::size_t junk, std::size_t k) {
  if (k > real + junk) throw std::invalid_argument("chance: k exceeds the feature count");
  double none = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    none *= static_cast<double>(real >= i ? real - i : 0) /
            static_cast<double>(real + junk - i);
  }
  return 1.0 - none;
}

double chance_monte_carlo(std::size_t real, std::size_t junk, std::size_t k,
                          std::size_t draws, std::uint64_t seed) {
  const std::size_t n = real + junk;
  if (k > n) throw std::invalid_argument("chance: k exceeds the feature count");
  auto rng = pear::make_rng(seed, 0xc4a);
  std::vector<std::size_t> idx(n);
  std::size_t hits = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    std::iota(idx.begin(), idx.end(), 0);
    bool any = false;
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
      any = any || idx[i] >= real;
    }
    if (any) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(draws);
}

std::vector<std::array<std::size_t, 3>> choose_anchors(std::size_t n, std::size_t count,
                                                       std::uint64_t seed) {
  if (n < 3) throw std::invalid_argument("plane anchors need at least 3 points");
  auto rng = pear::make_rng(seed, 0x91a);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::array<std::size_t, 3>> out;
  for (std::size_t p = 0; p < count; ++p) {
    std::array<std::size_t, 3> a{};
    for (std::size_t i = 0; i < 3; ++i) {
      do {
        a[i] = pick(rng);
      } while (std::find(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(i), a[i]) !=
               a.begin() + static_cast<std::ptrdiff_t>(i));
    }
    out.push_back(a);
  }
  return out;
}

std::array<double, 3> fit_affine(std::span<const double> u, std::span<const double> v,
                                 std::span<const double> z) {
  if (u.size() != v.size() || u.size() != z.size() || u.size() < 3) {
    throw std::invalid_argument("affine fit: need at least 3 aligned samples");
  }
  const auto n = static_cast<Eigen::Index>(u.size());
  Eigen::MatrixXd design(n, 3);
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto s = static_cast<std::size_t>(i);
    design(i, 0) = u[s];
    design(i, 1) = v[s];
    design(i, 2) = 1.0;
    target(i) = z[s];
  }
  const Eigen::Vector3d coef = design.colPivHouseholderQr().solve(target);
  return {coef(0), coef(1), coef(2)};
}

PlaneProbe plane_probe(const nn::Model& model, const EvalSet& eval,
                       const std::array<std::size_t, 3>& positions,
                       const PlaneConfig& config) {
  const std::size_t m = eval.points.cols();
  for (auto p : positions) {
    if (p >= eval.points.rows()) throw std::out_of_range("plane anchor outside the points");
  }
  PlaneProbe probe;
  for (std::size_t i = 0; i < 3; ++i) probe.anchors[i] = eval.ids[positions[i]];
  probe.grid = config.grid;
  const auto x1 = eval.points.row_values(positions[0]);
  const auto x2 = eval.points.row_values(positions[1]);
  const auto x3 = eval.points.row_values(positions[2]);

  std::vector<double> coords(config.grid);
  for (std::size_t i = 0; i < config.grid; ++i) {
    coords[i] = config.lo + (config.hi - config.lo) * static_cast<double>(i) /
                                static_cast<double>(config.grid - 1);
  }
  const std::size_t cells = config.grid * config.grid;
  // Grid cells followed by the three anchor coordinates.
  std::vector<double> pts((cells + 3) * m);
  const auto place = [&](std::size_t row, double u, double v) {
    for (std::size_t f = 0; f < m; ++f) {
      pts[row * m + f] = x1[f] + u * (x2[f] - x1[f]) + v * (x3[f] - x1[f]);
    }
  };
  for (std::size_t a = 0; a < config.grid; ++a) {
    for (std::size_t b = 0; b < config.grid; ++b) {
      const std::size_t row = a * config.grid + b;
      probe.u.push_back(coords[a]);
      probe.v.push_back(coords[b]);
      place(row, coords[a], coords[b]);
    }
  }
  place(cells, 0.0, 0.0);
  place(cells + 1, 1.0, 0.0);
  place(cells + 2, 0.0, 1.0);

  ad::NoGradGuard guard;
  const auto logits = model.logits(ad::Tensor({cells + 3, m}, std::move(pts)));
  const auto values = logits.values();
  const std::size_t classes = logits.cols();
  probe.logits.resize(cells);
  for (std::size_t r = 0; r < cells; ++r) probe.logits[r] = values[r * classes];
  for (std::size_t i = 0; i < 3; ++i) probe.anchor_logits[i] = values[(cells + i) * classes];

  probe.fit = fit_affine(probe.u, probe.v, probe.logits);
  double total = 0.0;
  for (std::size_t r = 0; r < cells; ++r) {
    const double pred = probe.fit[0] * probe.u[r] + probe.fit[1] * probe.v[r] + probe.fit[2];
    total += std::fabs(probe.logits[r] - pred);
  }
  probe.mae = total / static_cast<double>(cells);
  return probe;
}

std::vector<PlaneProbe> plane_probes(const nn::Model& model, const EvalSet& eval,
                                     const PlaneConfig& config) {
  std::vector<PlaneProbe> out;
  for (const auto& a : choose_anchors(eval.points.rows(), config.count, config.anchor_seed)) {
    out.push_back(plane_probe(model, eval, a, config));
  }
  return out;
}

metrics::Summary linear_fit_mae(const nn::Model& model, const EvalSet& eval,
                                const PlaneConfig& config) {
  std::vector<double> maes;
  for (const auto& p : plane_probes(model, eval, config)) maes.push_back(p.mae);
  return metrics::summarize(maes);
}

}  // namespace pear::experiments
