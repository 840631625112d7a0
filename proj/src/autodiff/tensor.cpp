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

#include <cstring>
#include <limits>

#include "kernels.hpp"
#include "pear/autodiff.hpp"

namespace pear::ad {

namespace {
thread_local int no_grad_depth = 0;
}  // namespace

std::string to_string(Shape shape) {
  return "[" + std::to_string(shape.rows) + ", " + std::to_string(shape.cols) +
         "]";
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Scale: return "scale";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Relu: return "relu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Abs: return "abs";
    case Op::Sqrt: return "sqrt";
    case Op::Pow: return "pow";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::SumTo: return "sum_to";
    case Op::BroadcastTo: return "broadcast_to";
    case Op::Gather: return "gather";
    case Op::ScatterAdd: return "scatter_add";
    case Op::Concat: return "concat";
    case Op::LogSoftmax: return "log_softmax";
    case Op::Custom: return "custom";
  }
  return "unknown";
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape) {
  if (values.size() != shape.size()) {
    throw ShapeError("tensor of shape " + to_string(shape) + " needs " +
                     std::to_string(shape.size()) + " values, got " +
                     std::to_string(values.size()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return filled(shape, 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  return Tensor(shape, std::vector<double>(shape.size(), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const Shape shape{1, values.size()};
  return Tensor(shape, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
  const Shape shape{values.size(), 1};
  return Tensor(shape, std::move(values));
}

std::span<const double> Tensor::values() const noexcept {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

std::vector<double> Tensor::to_vector() const {
  auto v = values();
  return {v.begin(), v.end()};
}

std::span<const double> Tensor::row_values(std::size_t r) const {
  if (r >= shape_.rows) {
    throw std::out_of_range("row " + std::to_string(r) + " of tensor " +
                            to_string(shape_));
  }
  return values().subspan(r * shape_.cols, shape_.cols);
}

double Tensor::operator()(std::size_t r, std::size_t c) const {
  if (r >= shape_.rows || c >= shape_.cols) {
    throw std::out_of_range("index (" + std::to_string(r) + ", " +
                            std::to_string(c) + ") outside " +
                            to_string(shape_));
  }
  return (*data_)[r * shape_.cols + c];
}

double Tensor::operator[](std::size_t i) const { return data_->at(i); }

double Tensor::item() const {
  if (shape_.size() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " +
                     to_string(shape_));
  }
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.graph_ = nullptr;
  t.node_ = 0;
  return t;
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

bool recording_enabled() noexcept { return no_grad_depth == 0; }

std::uint32_t Graph::push(Node node) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw GraphError("graph node limit reached");
  }
  nodes_.push_back(std::move(node));
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

Tensor Graph::tensor_of(std::uint32_t node) const {
  const Node& n = nodes_[node];
  Tensor t;
  t.shape_ = n.shape;
  t.data_ = n.value;
  t.graph_ = const_cast<Graph*>(this);
  t.node_ = node;
  return t;
}

Tensor Graph::variable(const Tensor& value) {
  Node n;
  n.is_variable = true;
  n.shape = value.shape();
  n.value = value.data_ ? value.data_
                        : std::make_shared<const std::vector<double>>();
  return tensor_of(push(std::move(n)));
}

Tensor Graph::constant(const Tensor& value) {
  Node n;
  n.shape = value.shape();
  n.value = value.data_ ? value.data_
                        : std::make_shared<const std::vector<double>>();
  return tensor_of(push(std::move(n)));
}

std::size_t Graph::replay_mismatches() const {
  std::size_t mismatches = 0;
  std::vector<Shape> shapes;
  std::vector<std::span<const double>> inputs;
  for (const Node& n : nodes_) {
    if (n.op == Op::Leaf) continue;
    shapes.clear();
    inputs.clear();
    for (auto p : n.parents) {
      shapes.push_back(nodes_[p].shape);
      inputs.emplace_back(nodes_[p].value->data(), nodes_[p].value->size());
    }
    const Shape out = detail::infer_shape(n.op, n.attrs, shapes);
    const std::vector<double> again =
        detail::evaluate(n.op, n.attrs, shapes, inputs, out);
    if (out != n.shape || again.size() != n.value->size() ||
        std::memcmp(again.data(), n.value->data(),
                    again.size() * sizeof(double)) != 0) {
      ++mismatches;
    }
  }
  return mismatches;
}

namespace detail {

Tensor record(Op op, std::span<const Tensor> inputs, Shape shape,
              std::vector<double> values, OpAttrs attrs) {
  Tensor result(shape, std::move(values));
  if (!recording_enabled()) return result;

  Graph* graph = nullptr;
  for (const Tensor& t : inputs) {
    if (!t.on_graph()) continue;
    if (graph != nullptr && graph != t.graph()) {
      throw GraphError(std::string("operands of ") +
                       std::string(op_name(op)) +
                       " belong to different graphs");
    }
    graph = t.graph();
  }
  if (graph == nullptr) return result;

  Graph::Node n;
  n.op = op;
  n.shape = shape;
  n.value = result.data_;
  n.attrs = std::move(attrs);
  n.parents.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    n.parents.push_back(t.on_graph() ? t.node() : graph->constant(t).node());
  }
  result.graph_ = graph;
  result.node_ = graph->push(std::move(n));
  return result;
}

}  // namespace detail

}  // namespace pear::ad
