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

#include <optional>

#include "pear/autodiff.hpp"

namespace pear::ad {

namespace {

// Constant (graph-free) tensor holding f(x) elementwise.
template <class F>
Tensor constant_map(const Tensor& x, F f) {
  auto v = x.values();
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = f(v[i]);
  return Tensor(x.shape(), std::move(out));
}

std::vector<std::size_t> concat_part_indices(Shape out, std::size_t axis,
                                             std::size_t offset, Shape part) {
  std::vector<std::size_t> idx;
  idx.reserve(part.size());
  for (std::size_t r = 0; r < part.rows; ++r) {
    for (std::size_t c = 0; c < part.cols; ++c) {
      idx.push_back(axis == 0 ? (offset + r) * out.cols + c
                              : r * out.cols + offset + c);
    }
  }
  return idx;
}

// Vector-Jacobian products. Entries of the result for inputs that are not
// needed may be left empty.
std::vector<Tensor> vjp(Op op, const OpAttrs& attrs,
                        std::span<const Tensor> in, const Tensor& out,
                        const Tensor& g, const std::vector<char>& need) {
  std::vector<Tensor> grads(in.size());
  switch (op) {
    case Op::Leaf:
      break;
    case Op::Add:
      if (need[0]) grads[0] = g;
      if (need[1]) grads[1] = g;
      break;
    case Op::Sub:
      if (need[0]) grads[0] = g;
      if (need[1]) grads[1] = scale(g, -1.0);
      break;
    case Op::Mul:
      if (need[0]) grads[0] = mul(g, in[1]);
      if (need[1]) grads[1] = mul(g, in[0]);
      break;
    case Op::Div:
      if (need[0]) grads[0] = div(g, in[1]);
      if (need[1]) grads[1] = scale(mul(g, div(out, in[1])), -1.0);
      break;
    case Op::Scale:
      grads[0] = scale(g, attrs.scalar);
      break;
    case Op::MatMul:
      if (need[0]) grads[0] = matmul(g, transpose(in[1]));
      if (need[1]) grads[1] = matmul(transpose(in[0]), g);
      break;
    case Op::Transpose:
      grads[0] = transpose(g);
      break;
    case Op::Relu:
      grads[0] = mul(g, constant_map(in[0], [](double x) {
                       return x > 0.0 ? 1.0 : 0.0;
                     }));
      break;
    case Op::Exp:
      grads[0] = mul(g, out);
      break;
    case Op::Log:
      grads[0] = div(g, in[0]);
      break;
    case Op::Abs:
      // d|x|/dx at 0 is taken as 0.
      grads[0] = mul(g, constant_map(in[0], [](double x) {
                       return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                     }));
      break;
    case Op::Sqrt:
      grads[0] = scale(div(g, out), 0.5);
      break;
    case Op::Pow: {
      const double p = attrs.scalar;
      if (p == 1.0) {
        grads[0] = g;
      } else if (p == 2.0) {
        grads[0] = scale(mul(g, in[0]), 2.0);
      } else {
        grads[0] = mul(g, scale(pow(in[0], p - 1.0), p));
      }
      break;
    }
    case Op::Sum:
      grads[0] = broadcast_to(g, in[0].shape());
      break;
    case Op::Mean:
      grads[0] = scale(broadcast_to(g, in[0].shape()),
                       1.0 / static_cast<double>(in[0].size()));
      break;
    case Op::SumTo:
      grads[0] = broadcast_to(g, in[0].shape());
      break;
    case Op::BroadcastTo:
      grads[0] = sum_to(g, in[0].shape());
      break;
    case Op::Gather:
      grads[0] = scatter_add(g, *attrs.indices, in[0].shape());
      break;
    case Op::ScatterAdd:
      grads[0] = gather(g, *attrs.indices, in[0].shape());
      break;
    case Op::Concat: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const Shape part = in[k].shape();
        if (need[k]) {
          grads[k] = gather(g, concat_part_indices(out.shape(), attrs.axis,
                                                   offset, part),
                            part);
        }
        offset += attrs.axis == 0 ? part.rows : part.cols;
      }
      break;
    }
    case Op::LogSoftmax: {
      const Tensor row_total = broadcast_to(sum_rows(g), g.shape());
      grads[0] = sub(g, mul(exp(out), row_total));
      break;
    }
    case Op::Custom:
      grads = attrs.custom->backward(in, out, g);
      if (grads.size() != in.size()) {
        throw GraphError(std::string(attrs.custom->name()) +
                         ": backward returned the wrong number of gradients");
      }
      break;
  }
  return grads;
}

}  // namespace

std::vector<Tensor> gradient(const Tensor& output, std::span<const Tensor> wrt,
                             bool create_graph) {
  if (!output.on_graph()) {
    throw GraphError("gradient: output is not attached to a graph");
  }
  if (output.size() != 1) {
    throw ShapeError("gradient: output must be scalar, got shape " +
                     to_string(output.shape()));
  }
  Graph& graph = *output.graph();
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    if (!wrt[i].on_graph() || wrt[i].graph() != &graph) {
      throw GraphError("gradient: wrt tensor #" + std::to_string(i) +
                       " is not on the output's graph");
    }
  }

  const std::uint32_t last = output.node();
  std::vector<char> depends(last + 1, 0);
  std::vector<char> keep(last + 1, 0);
  for (const Tensor& w : wrt) {
    if (w.node() <= last) {
      depends[w.node()] = 1;
      keep[w.node()] = 1;
    }
  }
  for (std::uint32_t i = 0; i <= last; ++i) {
    if (depends[i]) continue;
    for (auto p : graph.parents(i)) {
      if (depends[p]) {
        depends[i] = 1;
        break;
      }
    }
  }

  std::optional<NoGradGuard> guard;
  if (!create_graph) guard.emplace();

  std::vector<std::optional<Tensor>> adjoint(last + 1);
  adjoint[last] = Tensor::filled(output.shape(), 1.0);

  std::vector<Tensor> inputs;
  std::vector<char> need;
  for (std::int64_t i = last; i >= 0; --i) {
    const auto id = static_cast<std::uint32_t>(i);
    if (!adjoint[id] || !depends[id]) continue;
    // Copy what we need: vjp may append nodes and reallocate the node store.
    const Op op = graph.nodes_[id].op;
    if (op == Op::Leaf) continue;
    const OpAttrs attrs = graph.nodes_[id].attrs;
    const std::vector<std::uint32_t> parents = graph.nodes_[id].parents;

    inputs.clear();
    need.assign(parents.size(), 0);
    for (std::size_t k = 0; k < parents.size(); ++k) {
      inputs.push_back(graph.tensor_of(parents[k]));
      need[k] = depends[parents[k]];
    }
    const Tensor out = graph.tensor_of(id);
    const Tensor g = *adjoint[id];
    if (!keep[id]) adjoint[id].reset();

    auto grads = vjp(op, attrs, inputs, out, g, need);
    for (std::size_t k = 0; k < parents.size(); ++k) {
      if (!need[k] || grads[k].empty()) continue;
      auto& slot = adjoint[parents[k]];
      slot = slot ? add(*slot, grads[k]) : grads[k];
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const Tensor& w : wrt) {
    if (w.node() <= last && adjoint[w.node()]) {
      result.push_back(*adjoint[w.node()]);
    } else {
      result.push_back(Tensor::zeros(w.shape()));
    }
  }
  return result;
}

std::vector<Tensor> gradient(const Tensor& output,
                             std::initializer_list<Tensor> wrt,
                             bool create_graph) {
  return gradient(output, std::span<const Tensor>(wrt.begin(), wrt.size()),
                  create_graph);
}

}  // namespace pear::ad
