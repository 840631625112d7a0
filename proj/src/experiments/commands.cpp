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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "pear/experiments.hpp"

namespace pear::experiments {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

class Outputs {
 public:
  Outputs(const RunConfig& config, fs::path dir)
      : dir_(std::move(dir)), provenance_(provenance_line(config)) {
    fs::create_directories(dir_);
    write_json("config.json", to_json(config));
  }

  fs::path add(const std::string& name) {
    files_.push_back(name);
    return dir_ / name;
  }

  std::ofstream csv(const std::string& name) {
    std::ofstream out(add(name));
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << "# " << provenance_ << '\n';
    return out;
  }

  void write_json(const std::string& name, const json& j) {
    std::ofstream out(add(name));
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << j.dump(2) << '\n';
  }

  const std::string& provenance() const { return provenance_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::string provenance_;
  std::vector<std::string> files_;
};

json summary_json(const metrics::Summary& s) {
  const auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  return {{"mean", num(s.mean)}, {"std_err", num(s.std_err)}, {"count", s.count}};
}

json seeds_json(const TrialSeeds& s) {
  return {{"init", s.init}, {"shuffle", s.shuffle}, {"explainer", s.explainer}};
}

// Checkpoint if configured, otherwise trial 0 of the configured run.
TrainedModel obtain_model(const RunConfig& config, const data::Dataset& dataset) {
  if (config.checkpoint.empty()) return train_model(config, dataset, 0);
  TrainedModel t;
  t.model = nn::load_checkpoint(config.checkpoint);
  if (t.model.input_dim() != dataset.feature_count) {
    throw std::invalid_argument("checkpoint expects " + std::to_string(t.model.input_dim()) +
                                " features but the dataset has " +
                                std::to_string(dataset.feature_count));
  }
  t.seeds = trial_seeds(config.seed, 0);
  t.train_accuracy = nn::accuracy(t.model, dataset.examples(data::Split::Train));
  t.test_accuracy = nn::accuracy(t.model, dataset.examples(data::Split::Test));
  return t;
}

json model_json(const TrainedModel& t) {
  return {{"train_accuracy", t.train_accuracy},
          {"test_accuracy", t.test_accuracy},
          {"seeds", seeds_json(t.seeds)}};
}

std::vector<std::vector<explain::Attribution>> explain_all(const RunConfig& config,
                                                           const TrainedModel& t,
                                                           const data::Dataset& dataset,
                                                           const EvalSet& eval) {
  const auto ec = explainer_config(config, dataset, t.seeds.explainer);
  std::vector<std::vector<explain::Attribution>> all;
  for (auto m : config.evaluation.explainers) {
    all.push_back(explain::explain_points(t.model, m, eval.points, ec, eval.ids));
  }
  return all;
}

json cmd_train(const RunConfig& config, Outputs& out) {
  const auto dataset = prepare_dataset(config.dataset);
  data::write_provenance(dataset, out.add("dataset.json"));
  const auto t = train_model(config, dataset, 0);
  nn::save_checkpoint(out.add("checkpoint.json"), t.model, t.history);
  {
    auto csv = out.csv("history.csv");
    csv << "epoch,task_loss,consensus_loss,train_accuracy,test_accuracy\n";
    for (const auto& e : t.history.epochs) {
      csv << e.epoch << ',' << number(e.task_loss) << ',' << number(e.consensus_loss) << ','
          << number(e.train_accuracy) << ',' << number(e.test_accuracy) << '\n';
    }
  }
  consensus::write_step_log(out.add("steps.csv"), t.history.steps, out.provenance());
  json result = model_json(t);
  result["checkpoint"] = "checkpoint.json";
  result["epochs"] = t.history.epochs.size();
  result["config_hash"] = config_hash(config);
  out.write_json("run.json", result);
  return result;
}

json cmd_explain(const RunConfig& config, Outputs& out) {
  const auto dataset = prepare_dataset(config.dataset);
  const auto t = obtain_model(config, dataset);
  const auto eval = evaluation_set(dataset, config.evaluation.points);
  std::vector<explain::Attribution> flat;
  for (auto& list : explain_all(config, t, dataset, eval)) {
    flat.insert(flat.end(), list.begin(), list.end());
  }
  explain::write_attributions_csv(out.add("attributions.csv"), flat, out.provenance());
  json result = model_json(t);
  result["points"] = eval.ids.size();
  result["attributions"] = flat.size();
  return result;
}

json cmd_matrix(const RunConfig& config, Outputs& out) {
  const auto dataset = prepare_dataset(config.dataset);
  const auto t = obtain_model(config, dataset);
  const auto eval = evaluation_set(dataset, config.evaluation.points);
  const auto all = explain_all(config, t, dataset, eval);
  json result = model_json(t);
  result["matrices"] = json::array();
  for (auto metric : config.evaluation.metrics) {
    auto m = metrics::disagreement_matrix(all, metric, config.evaluation.k);
    for (std::size_t i = 0; i < config.evaluation.explainers.size(); ++i) {
      m.explainers[i] = explain::to_string(config.evaluation.explainers[i]);
    }
    const std::string stem = "matrix_" + metrics::to_string(metric);
    m.write_csv(out.add(stem + ".csv"), out.provenance());
    auto j = m.to_json();
    j["provenance"] = out.provenance();
    out.write_json(stem + ".json", j);
    result["matrices"].push_back(stem);
  }
  return result;
}

json sweep_json(const SweepResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"model", nn::to_string(row.model)},
                    {"lambda", row.lambda},
                    {"mu", row.mu},
                    {"weight_decay", row.weight_decay},
                    {"accuracy", summary_json(row.accuracy)},
                    {"agreement", summary_json(row.agreement)},
                    {"mae", summary_json(row.mae)}});
  }
  return {{"rows", rows}};
}

std::string sweep_comment(const RunConfig& config, const std::string& provenance) {
  return provenance + " pair=" + explain::to_string(config.evaluation.pair[0]) + "," +
         explain::to_string(config.evaluation.pair[1]) +
         " metric=" + metrics::to_string(config.evaluation.metric) +
         " k=" + std::to_string(config.evaluation.k);
}

template <typename Sweep>
json cmd_sweep(const RunConfig& config, Outputs& out, const std::string& stem, Sweep sweep) {
  const auto dataset = prepare_dataset(config.dataset);
  const auto r = sweep(config, dataset);
  write_sweep(r, out.add(stem + ".csv"), out.add(stem + "_trials.csv"),
              sweep_comment(config, out.provenance()));
  return sweep_json(r);
}

json cmd_junk(RunConfig config, Outputs& out) {
  const auto dataset = prepare_dataset(config.dataset);
  const auto eval = evaluation_set(dataset, config.evaluation.points);
  std::size_t real = 0;
  for (bool j : dataset.junk) real += j ? 0 : 1;
  const std::size_t junk = dataset.feature_count - real;
  const std::size_t k = config.evaluation.k;
  const double formula = chance_hypergeometric(real, junk, k);
  const double monte_carlo =
      chance_monte_carlo(real, junk, k, config.evaluation.chance_draws, config.seed);

  const std::size_t trials = config.checkpoint.empty() ? config.trials : 1;
  const auto& methods = config.evaluation.explainers;
  std::vector<std::vector<double>> freq(methods.size());
  auto per_trial = out.csv("junk_trials.csv");
  per_trial << "explainer,lambda,trial,frequency\n";
  for (std::size_t t = 0; t < trials; ++t) {
    const auto model = config.checkpoint.empty() ? train_model(config, dataset, t)
                                                 : obtain_model(config, dataset);
    const auto ec = explainer_config(config, dataset, model.seeds.explainer);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const auto attrs = explain::explain_points(model.model, methods[m], eval.points, ec,
                                                 eval.ids);
      const double f = junk_topk_frequency(attrs, dataset.junk, k);
      freq[m].push_back(f);
      per_trial << explain::to_string(methods[m]) << ',' << number(config.lambda) << ','
                << t << ',' << number(f) << '\n';
    }
  }
  per_trial.close();

  auto summary = out.csv("junk.csv");
  summary << "explainer,lambda,frequency_mean,frequency_std_err,trials,real_features,"
             "junk_features,k,chance_formula,chance_monte_carlo\n";
  json rows = json::array();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const auto s = metrics::summarize(freq[m]);
    summary << explain::to_string(methods[m]) << ',' << number(config.lambda) << ','
            << number(s.mean) << ',' << number(s.std_err) << ',' << s.count << ',' << real
            << ',' << junk << ',' << k << ',' << number(formula) << ','
            << number(monte_carlo) << '\n';
    rows.push_back({{"explainer", explain::to_string(methods[m])},
                    {"frequency", summary_json(s)}});
  }
  json result{{"rows", rows},
              {"real_features", real},
              {"junk_features", junk},
              {"k", k},
              {"chance_formula", formula},
              {"chance_monte_carlo", monte_carlo}};
  out.write_json("junk.json", result);
  return result;
}

json cmd_planes(const RunConfig& config, Outputs& out, bool surfaces) {
  const auto dataset = prepare_dataset(config.dataset);
  const auto t = obtain_model(config, dataset);
  const auto eval = evaluation_set(dataset, config.evaluation.points);
  const auto probes = plane_probes(t.model, eval, config.planes);
  std::vector<double> maes;
  if (surfaces) {
    auto csv = out.csv("planes.csv");
    csv << "plane,u,v,logit\n";
    for (std::size_t p = 0; p < probes.size(); ++p) {
      for (std::size_t r = 0; r < probes[p].logits.size(); ++r) {
        csv << p << ',' << number(probes[p].u[r]) << ',' << number(probes[p].v[r]) << ','
            << number(probes[p].logits[r]) << '\n';
      }
    }
  }
  {
    auto csv = out.csv(surfaces ? "planes_anchors.csv" : "linfit.csv");
    csv << "plane,anchor_1,anchor_2,anchor_3,logit_1,logit_2,logit_3,fit_u,fit_v,fit_c,mae\n";
    for (std::size_t p = 0; p < probes.size(); ++p) {
      const auto& pr = probes[p];
      csv << p << ',' << pr.anchors[0] << ',' << pr.anchors[1] << ',' << pr.anchors[2] << ','
          << number(pr.anchor_logits[0]) << ',' << number(pr.anchor_logits[1]) << ','
          << number(pr.anchor_logits[2]) << ',' << number(pr.fit[0]) << ','
          << number(pr.fit[1]) << ',' << number(pr.fit[2]) << ',' << number(pr.mae) << '\n';
      maes.push_back(pr.mae);
    }
  }
  json result = model_json(t);
  result["planes"] = probes.size();
  result["mae"] = summary_json(metrics::summarize(maes));
  if (!surfaces) out.write_json("linfit.json", result);
  return result;
}

}  // namespace

const std::vector<std::string>& verbs() {
  static const std::vector<std::string> v{"train",    "explain", "matrix",
                                          "sweep-lambda", "sweep-wd", "ablate-mu",
                                          "junk",     "planes",  "linfit"};
  return v;
}

json run_command(const std::string& verb, const RunConfig& config, const fs::path& out_dir) {
  RunConfig effective = config;
  if (verb == "junk") effective.dataset.junk = true;
  if (std::find(verbs().begin(), verbs().end(), verb) == verbs().end()) {
    throw std::invalid_argument("unknown verb '" + verb + "'");
  }
  Outputs out(effective, out_dir);
  json result;
  if (verb == "train") {
    result = cmd_train(effective, out);
  } else if (verb == "explain") {
    result = cmd_explain(effective, out);
  } else if (verb == "matrix") {
    result = cmd_matrix(effective, out);
  } else if (verb == "sweep-lambda") {
    result = cmd_sweep(effective, out, "sweep_lambda", lambda_sweep);
  } else if (verb == "sweep-wd") {
    result = cmd_sweep(effective, out, "sweep_wd", weight_decay_sweep);
  } else if (verb == "ablate-mu") {
    result = cmd_sweep(effective, out, "ablate_mu", mu_ablation);
  } else if (verb == "junk") {
    result = cmd_junk(effective, out);
  } else if (verb == "planes") {
    result = cmd_planes(effective, out, true);
  } else {
    result = cmd_planes(effective, out, false);
  }
  return {{"status", "ok"},
          {"verb", verb},
          {"config_hash", config_hash(effective)},
          {"out", out_dir.string()},
          {"outputs", out.files()},
          {"result", result}};
}

}  // namespace pear::experiments
