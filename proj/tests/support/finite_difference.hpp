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

#pragma once

// Test-only numerical oracles. Nothing here touches the autodiff engine's
// backward machinery: functions are evaluated on plain values.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace pear::testing {

// Central differences of a scalar function.
inline std::vector<double> central_difference(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Central differences of a vector function; row i holds d out / d x_i.
inline std::vector<std::vector<double>> central_jacobian(
    const std::function<std::vector<double>(const std::vector<double>&)>& f,
    std::vector<double> x, double h) {
  std::vector<std::vector<double>> jac(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const auto up = f(x);
    x[i] = saved - h;
    const auto down = f(x);
    x[i] = saved;
    jac[i].resize(up.size());
    for (std::size_t j = 0; j < up.size(); ++j) {
      jac[i][j] = (up[j] - down[j]) / (2.0 * h);
    }
  }
  return jac;
}

// max |a - b| / max(max |b|, floor)
inline double relative_error(std::span<const double> a,
                             std::span<const double> b, double floor = 1e-12) {
  double diff = 0.0;
  double scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::fabs(a[i] - b[i]));
    scale = std::max(scale, std::fabs(b[i]));
  }
  return diff / scale;
}

}  // namespace pear::testing
