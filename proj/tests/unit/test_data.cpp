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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "../support/oracles.hpp"
#include "doctest.h"
#include "pear/data.hpp"

using namespace pear;

namespace {

std::filesystem::path write_temp(const std::string& name,
                                 const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

std::string load_error(const std::string& text) {
  const auto path = write_temp("pear_data_case.csv", text);
  try {
    (void)data::load_csv(path);
  } catch (const data::DataError& e) {
    return e.what();
  }
  return {};
}

data::Dataset small_synthetic(std::size_t rows, std::uint64_t seed) {
  data::SyntheticSpec spec;
  spec.weights = {1.5, -0.5, 0.25};
  spec.bias = 0.3;
  spec.rows = rows;
  spec.seed = seed;
  auto ds = data::synthetic(spec);
  // Shift and stretch so standardization has work to do.
  for (std::size_t r = 0; r < ds.row_count; ++r) {
    ds.values[r * 3 + 0] = 5.0 + 3.0 * ds.values[r * 3 + 0];
    ds.values[r * 3 + 2] = -2.0 + 0.1 * ds.values[r * 3 + 2];
  }
  return ds;
}

}  // namespace

TEST_CASE("load_csv parses numeric files") {
  const auto path = write_temp("pear_ok.csv",
                               "a,b,target\n1.5,-2,1\n0,3e2,0\n\n4,+5,1\n");
  const auto ds = data::load_csv(path);
  CHECK(ds.row_count == 3);
  CHECK(ds.feature_count == 2);
  CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
  CHECK(ds.labels == std::vector<std::size_t>{1, 0, 1});
  CHECK(ds.at(1, 1) == 300.0);
  CHECK(ds.at(2, 1) == 5.0);

  const auto named = data::load_csv(
      write_temp("pear_named.csv", "y,a\n1,2\n0,3\n"), "y");
  CHECK(named.feature_names == std::vector<std::string>{"a"});
  CHECK(named.labels == std::vector<std::size_t>{1, 0});
}

TEST_CASE("load_csv errors name the offending lines") {
  CHECK(load_error("").find("missing header") != std::string::npos);
  const auto ragged = load_error("a,b,y\n1,2,0\n1,2\n3,4,1\n");
  CHECK(ragged.find("ragged rows at lines 3") != std::string::npos);
  const auto bad = load_error("a,y\n1,0\nx,1\n2,1\n,0\n");
  CHECK(bad.find("unparsable cells at lines 3, 5") != std::string::npos);
  const auto labels = load_error("a,y\n1,0\n2,2\n3,0.5\n");
  CHECK(labels.find("non-binary labels at lines 3, 4") != std::string::npos);
  CHECK_THROWS_AS(data::load_csv(write_temp("pear_nolabel.csv", "a,y\n1,0\n"),
                                 "label"),
                  data::DataError);
}

TEST_CASE("split is a seeded disjoint partition with exact counts") {
  const auto ds = data::split(small_synthetic(1000, 1), 750, 42);
  CHECK(ds.count(data::Split::Train) == 750);
  CHECK(ds.count(data::Split::Test) == 250);
  const auto train = ds.indices(data::Split::Train);
  const auto test = ds.indices(data::Split::Test);
  std::set<std::size_t> all(train.begin(), train.end());
  all.insert(test.begin(), test.end());
  CHECK(all.size() == 1000);

  const auto again = data::split(small_synthetic(1000, 1), 750, 42);
  CHECK(again.split == ds.split);
  const auto other = data::split(small_synthetic(1000, 1), 750, 43);
  CHECK(other.split != ds.split);
  CHECK(ds.provenance.split_seed == 42u);
  CHECK_THROWS_AS(data::split(small_synthetic(10, 1), 11, 0), data::DataError);
}

TEST_CASE("standardize uses train statistics only") {
  const auto raw = data::split(small_synthetic(2000, 3), 1500, 5);
  const auto ds = data::standardize(raw);
  const auto train = ds.indices(data::Split::Train);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    for (auto r : train) mean += ds.at(r, c);
    mean /= static_cast<double>(train.size());
    for (auto r : train) sq += (ds.at(r, c) - mean) * (ds.at(r, c) - mean);
    CHECK(std::fabs(mean) < 1e-10);
    CHECK(std::fabs(std::sqrt(sq / static_cast<double>(train.size())) - 1) < 1e-10);

    // Recompute test values from raw train statistics.
    double rm = 0, rs = 0;
    for (auto r : train) rm += raw.at(r, c);
    rm /= static_cast<double>(train.size());
    for (auto r : train) rs += (raw.at(r, c) - rm) * (raw.at(r, c) - rm);
    rs = std::sqrt(rs / static_cast<double>(train.size()));
    for (auto r : ds.indices(data::Split::Test)) {
      CHECK(std::fabs(ds.at(r, c) - (raw.at(r, c) - rm) / rs) < 1e-12);
    }
  }

  auto constant = raw;
  for (std::size_t r = 0; r < constant.row_count; ++r) constant.values[r * 3 + 1] = 7.0;
  const auto cs = data::standardize(constant);
  CHECK(cs.stats->stddev[1] == 1.0);
  CHECK(cs.at(0, 1) == 0.0);
}

TEST_CASE("junk features are appended, flagged and uninformative") {
  data::SyntheticSpec spec;
  spec.weights = {2.0, -1.0, 1.0, 0.5, -0.5, 0.2, 1.2};
  spec.rows = 20000;
  spec.seed = 6;
  const auto base = data::standardize(data::split(data::synthetic(spec), 15000, 1));
  const auto ds = data::add_junk_features(base, 77);
  REQUIRE(ds.feature_count == 14);
  CHECK(std::count(ds.junk.begin(), ds.junk.end(), true) == 7);
  CHECK(ds.feature_names[7] == "junk_0");
  for (std::size_t r = 0; r < ds.row_count; r += 97) {
    for (std::size_t c = 0; c < 7; ++c) CHECK(ds.at(r, c) == base.at(r, c));
  }

  std::vector<double> labels(ds.labels.begin(), ds.labels.end());
  for (std::size_t c = 7; c < 14; ++c) {
    std::vector<double> col(ds.row_count);
    for (std::size_t r = 0; r < ds.row_count; ++r) col[r] = ds.at(r, c);
    CHECK(std::fabs(testing::plain_pearson(col, labels)) < 0.05);
  }
  CHECK(data::add_junk_features(base, 77).values == ds.values);
  CHECK(data::add_junk_features(base, 78).values != ds.values);
  CHECK(ds.provenance.junk_seed == 77u);
}

TEST_CASE("synthetic generator properties") {
  data::SyntheticSpec spec;
  spec.weights = {0.8, -0.4, 0.6};
  spec.rows = 50000;
  spec.seed = 123;
  const auto ds = data::synthetic(spec);
  const double positives =
      static_cast<double>(std::count(ds.labels.begin(), ds.labels.end(), 1u));
  CHECK(std::fabs(positives / 50000.0 - 0.5) < 0.01);

  // Logistic regression by Newton iterations recovers the weight direction.
  Eigen::MatrixXd x(50000, 4);
  Eigen::VectorXd y(50000);
  for (std::size_t r = 0; r < 50000; ++r) {
    for (std::size_t c = 0; c < 3; ++c) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = ds.at(r, c);
    x(static_cast<Eigen::Index>(r), 3) = 1.0;
    y(static_cast<Eigen::Index>(r)) = static_cast<double>(ds.labels[r]);
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(4);
  for (int it = 0; it < 25; ++it) {
    const Eigen::VectorXd p =
        (1.0 / (1.0 + (-(x * beta).array()).exp())).matrix();
    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
    const Eigen::MatrixXd h = x.transpose() * w.asDiagonal() * x;
    beta += h.ldlt().solve(x.transpose() * (y - p));
  }
  const Eigen::Vector3d est = beta.head<3>();
  const Eigen::Vector3d truth(0.8, -0.4, 0.6);
  const double angle =
      std::acos(est.dot(truth) / (est.norm() * truth.norm())) * 180.0 / std::numbers::pi;
  CHECK(angle < 5.0);

  // Huge weights and no noise: the sign of w.x decides the label.
  spec.weights = {400.0, -200.0, 100.0};
  spec.rows = 5000;
  const auto sharp = data::synthetic(spec);
  std::size_t agree = 0;
  for (std::size_t r = 0; r < sharp.row_count; ++r) {
    const double s = 400 * sharp.at(r, 0) - 200 * sharp.at(r, 1) + 100 * sharp.at(r, 2);
    agree += (s > 0) == (sharp.labels[r] == 1) ? 1 : 0;
  }
  CHECK(static_cast<double>(agree) / 5000.0 > 0.995);

  CHECK(data::synthetic(spec).values == sharp.values);
  CHECK(sharp.provenance.synthetic_seed == 123u);
  spec.quadratic = {1.0};
  CHECK_THROWS_AS(data::synthetic(spec), data::DataError);
}

TEST_CASE("provenance sidecar records seeds and counts") {
  const auto ds = data::add_junk_features(
      data::standardize(data::split(small_synthetic(100, 9), 80, 2)), 4);
  const auto j = data::provenance_json(ds);
  CHECK(j["seeds"]["split"] == 2);
  CHECK(j["seeds"]["junk"] == 4);
  CHECK(j["seeds"]["synthetic"] == 9);
  CHECK(j["split_counts"]["train"] == 80);
  CHECK(j["split_counts"]["test"] == 20);
  CHECK(j["stats"]["mean"].size() == 6);
}
