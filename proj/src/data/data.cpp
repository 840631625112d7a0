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

#include "pear/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pear/random.hpp"

namespace pear::data {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> parse_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    return std::nullopt;
  }
  return value;
}

std::string row_list(const std::vector<std::size_t>& rows) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(rows.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) {
    if (i) out += ", ";
    out += std::to_string(rows[i]);
  }
  if (rows.size() > shown) {
    out += ", ... (" + std::to_string(rows.size()) + " total)";
  }
  return out;
}

}  // namespace

Examples Examples::rows(std::span<const std::size_t> idx) const {
  const std::size_t d = width();
  std::vector<double> v;
  v.reserve(idx.size() * d);
  Examples out;
  out.labels.reserve(idx.size());
  for (auto i : idx) {
    auto r = features.row_values(i);
    v.insert(v.end(), r.begin(), r.end());
    out.labels.push_back(labels.at(i));
  }
  out.features = ad::Tensor({idx.size(), d}, std::move(v));
  return out;
}

std::size_t Dataset::count(Split which) const {
  return static_cast<std::size_t>(std::count(split.begin(), split.end(), which));
}

std::vector<std::size_t> Dataset::indices(Split which) const {
  if (split.empty()) throw DataError(name + ": dataset has not been split");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == which) out.push_back(i);
  }
  return out;
}

Examples Dataset::all_examples() const {
  Examples out;
  out.features = ad::Tensor({row_count, feature_count}, values);
  out.labels = labels;
  return out;
}

Examples Dataset::examples(Split which) const {
  const auto idx = indices(which);
  std::vector<double> v;
  v.reserve(idx.size() * feature_count);
  Examples out;
  for (auto i : idx) {
    v.insert(v.end(), values.begin() + static_cast<std::ptrdiff_t>(i * feature_count),
             values.begin() + static_cast<std::ptrdiff_t>((i + 1) * feature_count));
    out.labels.push_back(labels[i]);
  }
  out.features = ad::Tensor({idx.size(), feature_count}, std::move(v));
  return out;
}

Dataset load_csv(const std::filesystem::path& path,
                 const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw DataError(path.string() + ": missing header row");
  }
  const auto header = split_line(line);
  std::size_t label_idx = header.size() - 1;
  if (!label_column.empty()) {
    const auto it = std::find(header.begin(), header.end(), label_column);
    if (it == header.end()) {
      throw DataError(path.string() + ": no column named '" + label_column +
                      "'");
    }
    label_idx = static_cast<std::size_t>(it - header.begin());
  }
  if (header.size() < 2) {
    throw DataError(path.string() + ": need at least one feature column");
  }

  Dataset ds;
  ds.name = path.stem().string();
  ds.feature_count = header.size() - 1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_idx) ds.feature_names.push_back(header[c]);
  }
  ds.junk.assign(ds.feature_count, false);

  std::vector<std::size_t> ragged, unparsable, non_binary;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      ragged.push_back(line_no);
      continue;
    }
    std::vector<double> row;
    row.reserve(ds.feature_count);
    std::optional<double> label;
    bool ok = true;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = parse_number(cells[c]);
      if (!v) {
        ok = false;
        break;
      }
      if (c == label_idx) {
        label = v;
      } else {
        row.push_back(*v);
      }
    }
    if (!ok) {
      unparsable.push_back(line_no);
      continue;
    }
    if (*label != 0.0 && *label != 1.0) {
      non_binary.push_back(line_no);
      continue;
    }
    ds.values.insert(ds.values.end(), row.begin(), row.end());
    ds.labels.push_back(*label == 1.0 ? 1 : 0);
  }

  std::string problems;
  if (!ragged.empty()) problems += " ragged rows at lines " + row_list(ragged) + ";";
  if (!unparsable.empty()) {
    problems += " unparsable cells at lines " + row_list(unparsable) + ";";
  }
  if (!non_binary.empty()) {
    problems += " non-binary labels at lines " + row_list(non_binary) + ";";
  }
  if (!problems.empty()) throw DataError(path.string() + ":" + problems);

  ds.row_count = ds.labels.size();
  if (ds.row_count == 0) throw DataError(path.string() + ": no data rows");
  ds.provenance.source = path.string();
  return ds;
}

Dataset split(Dataset ds, std::size_t train_count, std::uint64_t seed) {
  if (train_count == 0 || train_count > ds.row_count) {
    throw DataError(ds.name + ": train count " + std::to_string(train_count) +
                    " invalid for " + std::to_string(ds.row_count) + " rows");
  }
  std::vector<std::size_t> perm(ds.row_count);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(seed, 0x5911);
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(perm[i - 1], perm[pick(rng)]);
  }
  ds.split.assign(ds.row_count, Split::Test);
  for (std::size_t i = 0; i < train_count; ++i) ds.split[perm[i]] = Split::Train;
  ds.stats.reset();
  ds.provenance.split_seed = seed;
  ds.provenance.train_count = train_count;
  ds.provenance.test_count = ds.row_count - train_count;
  return ds;
}

Dataset standardize(Dataset ds) {
  const auto train = ds.indices(Split::Train);
  const std::size_t d = ds.feature_count;
  Standardization stats;
  stats.mean.assign(d, 0.0);
  stats.stddev.assign(d, 0.0);
  const double n = static_cast<double>(train.size());
  for (auto r : train) {
    for (std::size_t c = 0; c < d; ++c) stats.mean[c] += ds.at(r, c);
  }
  for (auto& m : stats.mean) m /= n;
  for (auto r : train) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dev = ds.at(r, c) - stats.mean[c];
      stats.stddev[c] += dev * dev;
    }
  }
  for (auto& s : stats.stddev) {
    s = std::sqrt(s / n);
    if (!(s > 0.0)) s = 1.0;
  }
  for (std::size_t r = 0; r < ds.row_count; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double& v = ds.values[r * d + c];
      v = (v - stats.mean[c]) / stats.stddev[c];
    }
  }
  ds.stats = std::move(stats);
  return ds;
}

Dataset add_junk_features(Dataset ds, std::uint64_t seed) {
  const std::size_t real = ds.feature_count;
  const std::size_t total = 2 * real;
  Rng rng = make_rng(seed, 0x7a11);
  std::normal_distribution<double> normal;
  std::vector<double> widened;
  widened.reserve(ds.row_count * total);
  for (std::size_t r = 0; r < ds.row_count; ++r) {
    auto first = ds.values.begin() + static_cast<std::ptrdiff_t>(r * real);
    widened.insert(widened.end(), first, first + static_cast<std::ptrdiff_t>(real));
    for (std::size_t j = 0; j < real; ++j) widened.push_back(normal(rng));
  }
  ds.values = std::move(widened);
  for (std::size_t j = 0; j < real; ++j) {
    ds.feature_names.push_back("junk_" + std::to_string(j));
    ds.junk.push_back(true);
  }
  if (ds.stats) {
    ds.stats->mean.resize(total, 0.0);
    ds.stats->stddev.resize(total, 1.0);
  }
  ds.feature_count = total;
  ds.provenance.junk_seed = seed;
  return ds;
}

// E|z| for z ~ N(0, 1).
constexpr double kMeanAbsNormal = 0.79788456080286536;

Dataset synthetic(const SyntheticSpec& spec) {
  const std::size_t d = spec.weights.size();
  if (d == 0) throw DataError("synthetic: weights must be non-empty");
  if (!spec.quadratic.empty() && spec.quadratic.size() != d) {
    throw DataError("synthetic: quadratic coefficients must match weights");
  }
  if (!spec.absolute.empty() && spec.absolute.size() != d) {
    throw DataError("synthetic: absolute coefficients must match weights");
  }
  if (spec.rows == 0) throw DataError("synthetic: rows must be positive");

  Dataset ds;
  ds.name = "synthetic";
  ds.row_count = spec.rows;
  ds.feature_count = d;
  ds.values.reserve(spec.rows * d);
  ds.labels.reserve(spec.rows);
  for (std::size_t j = 0; j < d; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  ds.junk.assign(d, false);

  Rng rng = make_rng(spec.seed, 0x5e7);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    double logit = spec.bias;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = normal(rng);
      ds.values.push_back(x);
      logit += spec.weights[j] * x;
      if (!spec.quadratic.empty()) logit += spec.quadratic[j] * (x * x - 1.0);
      if (!spec.absolute.empty()) logit += spec.absolute[j] * (std::fabs(x) - kMeanAbsNormal);
    }
    if (spec.noise > 0.0) logit += spec.noise * normal(rng);
    const double p = 1.0 / (1.0 + std::exp(-logit));
    ds.labels.push_back(uniform(rng) < p ? 1 : 0);
  }
  ds.provenance.source = "synthetic";
  ds.provenance.synthetic_seed = spec.seed;
  return ds;
}

nlohmann::json provenance_json(const Dataset& ds) {
  nlohmann::json j;
  j["source"] = ds.provenance.source;
  j["name"] = ds.name;
  nlohmann::json seeds = nlohmann::json::object();
  if (ds.provenance.split_seed) seeds["split"] = *ds.provenance.split_seed;
  if (ds.provenance.junk_seed) seeds["junk"] = *ds.provenance.junk_seed;
  if (ds.provenance.synthetic_seed) seeds["synthetic"] = *ds.provenance.synthetic_seed;
  j["seeds"] = seeds;
  j["split_counts"] = {{"train", ds.provenance.train_count},
                       {"test", ds.provenance.test_count}};
  j["features"] = ds.feature_names;
  if (ds.stats) {
    j["stats"] = {{"mean", ds.stats->mean}, {"stddev", ds.stats->stddev}};
  } else {
    j["stats"] = nullptr;
  }
  return j;
}

void write_provenance(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << provenance_json(ds).dump(2) << '\n';
}

}  // namespace pear::data
