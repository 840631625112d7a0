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

#include <span>
#include <vector>

#include "pear/autodiff.hpp"

// Forward kernels shared by eager evaluation and graph replay.
namespace pear::ad::detail {

Shape infer_shape(Op op, const OpAttrs& attrs, std::span<const Shape> inputs);

std::vector<double> evaluate(Op op, const OpAttrs& attrs,
                             std::span<const Shape> shapes,
                             std::span<const std::span<const double>> inputs,
                             Shape out);

}  // namespace pear::ad::detail
