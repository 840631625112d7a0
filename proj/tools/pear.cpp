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

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "pear/experiments.hpp"

namespace {

using nlohmann::json;
namespace ex = pear::experiments;

struct Overrides {
  std::string config;
  std::optional<double> lambda;
  std::optional<double> mu;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
  std::string out = "out";
};

const std::vector<std::string> kNamedDatasets{"synthetic", "bank", "california",
                                              "electricity", "csv"};

json read_config(const Overrides& o) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ex::ConfigError({"cannot open config file " + o.config});
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw ex::ConfigError({o.config + ": " + e.what()});
    }
    if (!j.is_object()) throw ex::ConfigError({o.config + ": top level must be an object"});
  }
  if (o.lambda) j["lambda"] = *o.lambda;
  if (o.mu) j["mu"] = *o.mu;
  if (o.seed) j["seed"] = *o.seed;
  if (o.checkpoint) j["checkpoint"] = *o.checkpoint;
  if (o.dataset) {
    if (!j.contains("dataset") || !j["dataset"].is_object()) j["dataset"] = json::object();
    const bool named = std::find(kNamedDatasets.begin(), kNamedDatasets.end(), *o.dataset) !=
                       kNamedDatasets.end();
    if (named) {
      j["dataset"]["id"] = *o.dataset;
    } else {
      j["dataset"]["id"] = "csv";
      j["dataset"]["path"] = *o.dataset;
    }
  }
  return j;
}

int fail(const std::string& type, const std::string& message,
         const std::vector<std::string>& problems, int code) {
  json err{{"status", "error"},
           {"error", {{"type", type}, {"message", message}, {"problems", problems}}}};
  std::cout << err.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Consensus-regularized training and explainer agreement experiments"};
  app.require_subcommand(1);
  Overrides o;
  for (const auto& verb : ex::verbs()) {
    auto* sub = app.add_subcommand(verb);
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--lambda", o.lambda, "consensus weight in [0, 1]");
    sub->add_option("--mu", o.mu, "Spearman share of the consensus term in [0, 1]");
    sub->add_option("--seed", o.seed, "run seed");
    sub->add_option("--dataset", o.dataset, "dataset id or CSV path");
    sub->add_option("--checkpoint", o.checkpoint, "model checkpoint to load instead of training");
    sub->add_option("--out", o.out, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), {}, 2);
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  try {
    const auto config = ex::parse_config(read_config(o));
    std::cout << ex::run_command(verb, config, o.out).dump() << std::endl;
    return 0;
  } catch (const ex::ConfigError& e) {
    return fail("config", e.what(), e.problems(), 2);
  } catch (const pear::data::DataError& e) {
    return fail("data", e.what(), {}, 3);
  } catch (const pear::nn::TrainError& e) {
    return fail("train", e.what(), {}, 4);
  } catch (const pear::explain::ExplainError& e) {
    return fail("explain", e.what(), {}, 4);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what(), {}, 5);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), {}, 1);
  }
}
