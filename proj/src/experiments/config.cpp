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
#include <cstdio>
#include <fstream>
#include <set>
#include <type_traits>

#include "pear/experiments.hpp"

namespace pear::experiments {

using nlohmann::json;

namespace {

const std::set<std::string> kDatasetIds{"synthetic", "bank", "california",
                                        "electricity", "csv"};

std::string join_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration:";
  for (const auto& p : problems) msg += " " + p + ";";
  return msg;
}

// Reads one JSON object, collecting problems instead of throwing and
// remembering which keys were consumed.
class Section {
 public:
  Section(const json* j, std::string prefix, std::vector<std::string>& problems)
      : j_(j), prefix_(std::move(prefix)), problems_(problems) {
    if (j_ != nullptr && !j_->is_object()) {
      problem(prefix_.empty() ? "configuration" : prefix_.substr(0, prefix_.size() - 1),
              "must be an object");
      j_ = nullptr;
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    const json* v = find(key);
    if (v == nullptr) return;
    if (!convert(*v, key, out)) return;
  }

  template <typename T>
  void read_optional(const std::string& key, std::optional<T>& out) {
    const json* v = find(key);
    if (v == nullptr) return;
    if (v->is_null()) {
      out.reset();
      return;
    }
    T value{};
    if (convert(*v, key, value)) out = value;
  }

  template <typename T, typename Parse>
  void read_enum(const std::string& key, T& out, Parse parse) {
    std::string name;
    const json* v = find(key);
    if (v == nullptr || !convert(*v, key, name)) return;
    try {
      out = parse(name);
    } catch (const std::invalid_argument& e) {
      problem(key, e.what());
    }
  }

  template <typename T, typename Parse>
  void read_enum_list(const std::string& key, std::vector<T>& out, Parse parse) {
    std::vector<std::string> names;
    const json* v = find(key);
    if (v == nullptr || !convert(*v, key, names)) return;
    std::vector<T> parsed;
    for (const auto& n : names) {
      try {
        parsed.push_back(parse(n));
      } catch (const std::invalid_argument& e) {
        problem(key, e.what());
        return;
      }
    }
    out = std::move(parsed);
  }

  template <typename T, typename Parse>
  void read_pair(const std::string& key, std::array<T, 2>& out, Parse parse) {
    std::vector<T> list;
    const json* v = find(key);
    if (v == nullptr) return;
    read_enum_list(key, list, parse);
    if (list.empty() && v->is_array() && v->empty()) {
      problem(key, "must name exactly two explainers");
      return;
    }
    if (list.empty()) return;
    if (list.size() != 2) {
      problem(key, "must name exactly two explainers");
      return;
    }
    out = {list[0], list[1]};
  }

  Section sub(const std::string& key) {
    const json* v = find(key);
    return {v, prefix_ + key + ".", problems_};
  }

  void finish() {
    if (j_ == nullptr) return;
    for (const auto& [key, value] : j_->items()) {
      if (!seen_.count(key)) problem(key, "unknown key");
    }
  }

  void problem(const std::string& key, const std::string& what) {
    problems_.push_back(prefix_ + key + ": " + what);
  }

 private:
  const json* find(const std::string& key) {
    seen_.insert(key);
    if (j_ == nullptr) return nullptr;
    const auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  template <typename T>
  bool convert(const json& v, const std::string& key, T& out) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return fail(key, "must be a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return fail(key, "must be a number");
      out = v.get<double>();
      if (!std::isfinite(out)) return fail(key, "must be finite");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) return fail(key, "must be a non-negative integer");
      out = v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return fail(key, "must be a string");
      out = v.get<std::string>();
    } else {
      if (!v.is_array()) return fail(key, "must be an array");
      T list;
      for (std::size_t i = 0; i < v.size(); ++i) {
        typename T::value_type item{};
        if (!convert(v[i], key + "[" + std::to_string(i) + "]", item)) return false;
        list.push_back(item);
      }
      out = std::move(list);
    }
    return true;
  }

  bool fail(const std::string& key, const std::string& what) {
    problem(key, what);
    return false;
  }

  const json* j_;
  std::string prefix_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

std::size_t published_train_count(const std::string& id) {
  if (id == "bank") return 7933;
  if (id == "california") return 15475;
  if (id == "electricity") return 28855;
  return 0;
}

std::size_t published_total(const std::string& id) {
  if (id == "bank") return 7933 + 2645;
  if (id == "california") return 15475 + 5159;
  if (id == "electricity") return 28855 + 9619;
  return 0;
}

void check_unit(std::vector<std::string>& problems, const std::string& name, double v) {
  if (!(v >= 0.0 && v <= 1.0)) problems.push_back(name + ": must lie in [0, 1]");
}

void validate(const RunConfig& c, std::vector<std::string>& problems) {
  const auto& d = c.dataset;
  if (!kDatasetIds.count(d.id)) {
    problems.push_back("dataset.id: unknown dataset '" + d.id +
                       "' (expected synthetic, bank, california, electricity or csv)");
  }
  if (d.id == "csv" && d.path.empty()) problems.push_back("dataset.path: required for csv");
  if (d.id == "synthetic") {
    const auto& s = d.synthetic;
    if (s.weights.empty()) problems.push_back("dataset.synthetic.weights: must be non-empty");
    if (!s.quadratic.empty() && s.quadratic.size() != s.weights.size()) {
      problems.push_back("dataset.synthetic.quadratic: must be empty or match weights");
    }
    if (!s.absolute.empty() && s.absolute.size() != s.weights.size()) {
      problems.push_back("dataset.synthetic.absolute: must be empty or match weights");
    }
    if (s.rows < 2) problems.push_back("dataset.synthetic.rows: must be at least 2");
    if (s.noise < 0) problems.push_back("dataset.synthetic.noise: must be non-negative");
    if (d.train_count >= s.rows && s.rows >= 2) {
      problems.push_back("dataset.train_count: must be below the row count");
    }
  }

  if (c.model == nn::ModelKind::Mlp) {
    for (std::size_t i = 0; i < c.hidden.size(); ++i) {
      if (c.hidden[i] == 0) {
        problems.push_back("hidden[" + std::to_string(i) + "]: must be positive");
      }
    }
  }
  check_unit(problems, "lambda", c.lambda);
  check_unit(problems, "mu", c.mu);
  if (c.learning_rate && !(*c.learning_rate > 0)) {
    problems.emplace_back("learning_rate: must be positive");
  }
  if (!(c.weight_decay >= 0)) problems.emplace_back("weight_decay: must be non-negative");
  if (c.batch_size == 0) problems.emplace_back("batch_size: must be positive");
  if (c.epochs && *c.epochs == 0) problems.emplace_back("epochs: must be positive");
  if (c.trials == 0) problems.emplace_back("trials: must be positive");

  for (std::size_t i = 0; i < 2; ++i) {
    if (!explain::differentiable(c.consensus_pair[i])) {
      problems.push_back("consensus.pair: explainer '" +
                         explain::to_string(c.consensus_pair[i]) +
                         "' is not differentiable");
    }
  }
  if (!(c.soft_rank_regularization > 0)) {
    problems.emplace_back("consensus.soft_rank_regularization: must be positive");
  }
  if (c.train_intgrad_steps == 0) {
    problems.emplace_back("consensus.intgrad_steps: must be positive");
  }
  try {
    c.explainer.validate();
  } catch (const std::invalid_argument& e) {
    problems.push_back(std::string("explainer: ") + e.what());
  }

  const auto& ev = c.evaluation;
  if (ev.points == 0) problems.emplace_back("evaluation.points: must be positive");
  if (ev.k == 0) problems.emplace_back("evaluation.k: must be positive");
  if (ev.explainers.empty()) problems.emplace_back("evaluation.explainers: must be non-empty");
  if (ev.metrics.empty()) problems.emplace_back("evaluation.metrics: must be non-empty");
  if (ev.chance_draws == 0) problems.emplace_back("evaluation.chance_draws: must be positive");

  const auto check_grid = [&](const std::string& name, const std::vector<double>& grid,
                              bool unit) {
    if (grid.empty()) problems.push_back(name + ": must be non-empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto item = name + "[" + std::to_string(i) + "]";
      if (unit) {
        check_unit(problems, item, grid[i]);
      } else if (!(grid[i] >= 0.0)) {
        problems.push_back(item + ": must be non-negative");
      }
    }
  };
  check_grid("sweep.lambdas", c.lambdas, true);
  check_grid("sweep.mus", c.mus, true);
  check_grid("sweep.decays", c.decays, false);

  if (c.planes.count == 0) problems.emplace_back("planes.count: must be positive");
  if (c.planes.grid < 2) problems.emplace_back("planes.grid: must be at least 2");
  if (!(c.planes.lo < c.planes.hi)) problems.emplace_back("planes.lo: must be below planes.hi");
}

json explainer_json(const explain::ExplainerConfig& e) {
  return {{"intgrad_steps", e.intgrad_steps},
          {"intgrad_baseline", e.intgrad_baseline},
          {"smoothgrad_samples", e.smoothgrad_samples},
          {"smoothgrad_sigma", e.smoothgrad_sigma},
          {"lime_samples", e.lime_samples},
          {"lime_kernel_width", e.lime_kernel_width},
          {"lime_ridge", e.lime_ridge},
          {"lime_scales", e.lime_scales},
          {"shap_coalitions", e.shap_coalitions},
          {"shap_full_max_features", e.shap_full_max_features},
          {"shap_background", e.shap_background}};
}

template <typename T, typename Name>
json names(const T& list, Name name) {
  json out = json::array();
  for (const auto& v : list) out.push_back(name(v));
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

data::SyntheticSpec DatasetConfig::default_synthetic() {
  data::SyntheticSpec s;
  s.weights = {1.5, -1.2, 0.9, -0.6, 0.4, 0.25, -0.1};
  s.quadratic = {1.2, 0.0, -1.0, 0.0, 0.8, 0.0, 0.0};
  s.bias = 0.0;
  s.noise = 0.0;
  s.rows = 20000;
  s.seed = 7;
  return s;
}

std::filesystem::path DatasetConfig::csv_path() const {
  if (!path.empty()) return path;
  return std::filesystem::path(data_dir) / (id + ".csv");
}

std::size_t RunConfig::resolved_epochs() const {
  return epochs ? *epochs : nn::default_epochs(model, lambda);
}

double RunConfig::resolved_learning_rate() const {
  return learning_rate ? *learning_rate : nn::default_learning_rate(model);
}

consensus::ConsensusConfig RunConfig::consensus_config() const {
  consensus::ConsensusConfig c;
  c.lambda = lambda;
  c.mu = mu;
  c.first = consensus_pair[0];
  c.second = consensus_pair[1];
  c.soft_rank_regularization = soft_rank_regularization;
  c.intgrad_steps = train_intgrad_steps;
  c.intgrad_baseline = explainer.intgrad_baseline;
  return c;
}

RunConfig parse_config(const json& j) {
  RunConfig c;
  std::vector<std::string> problems;
  Section root(&j, "", problems);

  {
    auto ds = root.sub("dataset");
    auto& d = c.dataset;
    ds.read("id", d.id);
    ds.read("path", d.path);
    ds.read("data_dir", d.data_dir);
    ds.read("label_column", d.label_column);
    ds.read("train_count", d.train_count);
    ds.read("junk", d.junk);
    ds.read("split_seed", d.split_seed);
    ds.read("junk_seed", d.junk_seed);
    auto syn = ds.sub("synthetic");
    syn.read("weights", d.synthetic.weights);
    syn.read("quadratic", d.synthetic.quadratic);
    syn.read("absolute", d.synthetic.absolute);
    syn.read("bias", d.synthetic.bias);
    syn.read("noise", d.synthetic.noise);
    syn.read("rows", d.synthetic.rows);
    syn.read("seed", d.synthetic.seed);
    syn.finish();
    ds.finish();
  }

  root.read_enum("model", c.model, nn::model_kind_from_string);
  root.read("hidden", c.hidden);
  root.read_enum("activation", c.activation, nn::activation_from_string);
  root.read("lambda", c.lambda);
  root.read("mu", c.mu);
  root.read_optional("learning_rate", c.learning_rate);
  root.read("weight_decay", c.weight_decay);
  root.read("batch_size", c.batch_size);
  root.read_optional("epochs", c.epochs);
  root.read("seed", c.seed);
  root.read("trials", c.trials);
  root.read("checkpoint", c.checkpoint);

  {
    auto cs = root.sub("consensus");
    cs.read_pair("pair", c.consensus_pair, explain::method_from_string);
    cs.read("soft_rank_regularization", c.soft_rank_regularization);
    cs.read("intgrad_steps", c.train_intgrad_steps);
    cs.finish();
  }
  {
    auto ex = root.sub("explainer");
    auto& e = c.explainer;
    ex.read("intgrad_steps", e.intgrad_steps);
    ex.read("intgrad_baseline", e.intgrad_baseline);
    ex.read("smoothgrad_samples", e.smoothgrad_samples);
    ex.read("smoothgrad_sigma", e.smoothgrad_sigma);
    ex.read("lime_samples", e.lime_samples);
    ex.read("lime_kernel_width", e.lime_kernel_width);
    ex.read("lime_ridge", e.lime_ridge);
    ex.read("lime_scales", e.lime_scales);
    ex.read("shap_coalitions", e.shap_coalitions);
    ex.read("shap_full_max_features", e.shap_full_max_features);
    ex.read("shap_background", e.shap_background);
    ex.finish();
  }
  {
    auto ev = root.sub("evaluation");
    auto& e = c.evaluation;
    ev.read("points", e.points);
    ev.read_enum("metric", e.metric, metrics::metric_from_string);
    ev.read("k", e.k);
    ev.read_pair("pair", e.pair, explain::method_from_string);
    ev.read_enum_list("explainers", e.explainers, explain::method_from_string);
    ev.read_enum_list("metrics", e.metrics, metrics::metric_from_string);
    ev.read("chance_draws", e.chance_draws);
    ev.finish();
  }
  {
    auto sw = root.sub("sweep");
    sw.read("lambdas", c.lambdas);
    sw.read("decays", c.decays);
    sw.read("mus", c.mus);
    sw.finish();
  }
  {
    auto pl = root.sub("planes");
    pl.read("count", c.planes.count);
    pl.read("grid", c.planes.grid);
    pl.read("lo", c.planes.lo);
    pl.read("hi", c.planes.hi);
    pl.read("anchor_seed", c.planes.anchor_seed);
    pl.finish();
  }
  root.finish();

  validate(c, problems);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path.string()});
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
  return parse_config(j);
}

json to_json(const RunConfig& c) {
  const auto& d = c.dataset;
  json j;
  j["dataset"] = {{"id", d.id},
                  {"path", d.path},
                  {"data_dir", d.data_dir},
                  {"label_column", d.label_column},
                  {"train_count", d.train_count},
                  {"junk", d.junk},
                  {"split_seed", d.split_seed},
                  {"junk_seed", d.junk_seed},
                  {"synthetic",
                   {{"weights", d.synthetic.weights},
                    {"quadratic", d.synthetic.quadratic},
                    {"absolute", d.synthetic.absolute},
                    {"bias", d.synthetic.bias},
                    {"noise", d.synthetic.noise},
                    {"rows", d.synthetic.rows},
                    {"seed", d.synthetic.seed}}}};
  j["model"] = nn::to_string(c.model);
  j["hidden"] = c.hidden;
  j["activation"] = nn::to_string(c.activation);
  j["lambda"] = c.lambda;
  j["mu"] = c.mu;
  j["learning_rate"] = c.learning_rate ? json(*c.learning_rate) : json(nullptr);
  j["weight_decay"] = c.weight_decay;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs ? json(*c.epochs) : json(nullptr);
  j["seed"] = c.seed;
  j["trials"] = c.trials;
  j["checkpoint"] = c.checkpoint;
  const auto method_name = [](explain::Method m) { return explain::to_string(m); };
  const auto metric_name = [](metrics::Metric m) { return metrics::to_string(m); };
  j["consensus"] = {{"pair", names(c.consensus_pair, method_name)},
                    {"soft_rank_regularization", c.soft_rank_regularization},
                    {"intgrad_steps", c.train_intgrad_steps}};
  j["explainer"] = explainer_json(c.explainer);
  j["evaluation"] = {{"points", c.evaluation.points},
                     {"metric", metrics::to_string(c.evaluation.metric)},
                     {"k", c.evaluation.k},
                     {"pair", names(c.evaluation.pair, method_name)},
                     {"explainers", names(c.evaluation.explainers, method_name)},
                     {"metrics", names(c.evaluation.metrics, metric_name)},
                     {"chance_draws", c.evaluation.chance_draws}};
  j["sweep"] = {{"lambdas", c.lambdas}, {"decays", c.decays}, {"mus", c.mus}};
  j["planes"] = {{"count", c.planes.count},
                 {"grid", c.planes.grid},
                 {"lo", c.planes.lo},
                 {"hi", c.planes.hi},
                 {"anchor_seed", c.planes.anchor_seed}};
  return j;
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(config).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string provenance_line(const RunConfig& config) {
  return "config_hash=" + config_hash(config) + " seed=" + std::to_string(config.seed) +
         " split_seed=" + std::to_string(config.dataset.split_seed) +
         " junk_seed=" + std::to_string(config.dataset.junk_seed);
}

data::Dataset prepare_dataset(const DatasetConfig& config) {
  data::Dataset ds;
  std::size_t train_count = config.train_count;
  if (config.id == "synthetic") {
    ds = data::synthetic(config.synthetic);
  } else {
    ds = data::load_csv(config.csv_path(), config.label_column);
    ds.name = config.id;
    const std::size_t total = published_total(config.id);
    if (train_count == 0 && total != 0) {
      train_count = ds.row_count == total
                        ? published_train_count(config.id)
                        : static_cast<std::size_t>(std::llround(
                              static_cast<double>(ds.row_count) *
                              static_cast<double>(published_train_count(config.id)) /
                              static_cast<double>(total)));
    }
  }
  if (train_count == 0) {
    train_count = static_cast<std::size_t>(std::llround(0.75 * static_cast<double>(ds.row_count)));
  }
  if (config.junk) ds = data::add_junk_features(std::move(ds), config.junk_seed);
  ds = data::split(std::move(ds), train_count, config.split_seed);
  return data::standardize(std::move(ds));
}

}  // namespace pear::experiments
