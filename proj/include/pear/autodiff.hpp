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

// Reverse-mode automatic differentiation over dense row-major 2-D tensors.
//
// Every primitive's vector-Jacobian product is itself written in terms of
// primitives, so a gradient computed with `create_graph = true` is recorded on
// the graph and can be differentiated again. Tensors that are not attached to
// a graph behave as plain constants; operations on them compute values only.
//
//   ad::Graph g;
//   ad::Tensor x = g.variable(ad::Tensor::scalar(2.0));
//   ad::Tensor y = x * x * x;
//   auto dy = ad::gradient(y, {x}, /*create_graph=*/true)[0];   // 3x^2 = 12
//   auto d2y = ad::gradient(dy, {x})[0];                         // 6x = 12

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pear::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  constexpr std::size_t size() const noexcept { return rows * cols; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(Shape shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Scale,
  MatMul,
  Transpose,
  Relu,
  Exp,
  Log,
  Abs,
  Sqrt,
  Pow,
  Sum,
  Mean,
  SumTo,
  BroadcastTo,
  Gather,
  ScatterAdd,
  Concat,
  LogSoftmax,
  Custom,
};

std::string_view op_name(Op op);

class Graph;
class Tensor;
class CustomOp;

// Attributes carried by a recorded node. Only the fields relevant to the op
// are populated.
struct OpAttrs {
  double scalar = 0.0;
  Shape shape{};
  std::size_t axis = 0;
  std::shared_ptr<const std::vector<std::size_t>> indices;
  std::shared_ptr<const CustomOp> custom;
};

namespace detail {
Tensor record(Op op, std::span<const Tensor> inputs, Shape shape,
              std::vector<double> values, OpAttrs attrs);
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);
  static Tensor column(std::vector<double> values);

  Shape shape() const noexcept { return shape_; }
  std::size_t rows() const noexcept { return shape_.rows; }
  std::size_t cols() const noexcept { return shape_.cols; }
  std::size_t size() const noexcept { return shape_.size(); }
  bool empty() const noexcept { return shape_.size() == 0; }

  std::span<const double> values() const noexcept;
  std::vector<double> to_vector() const;
  std::span<const double> row_values(std::size_t r) const;
  double operator()(std::size_t r, std::size_t c) const;
  double operator[](std::size_t i) const;
  // Value of a 1x1 tensor.
  double item() const;

  bool on_graph() const noexcept { return graph_ != nullptr; }
  Graph* graph() const noexcept { return graph_; }
  std::uint32_t node() const noexcept { return node_; }

  // Same values, no graph attachment.
  Tensor detach() const;

 private:
  friend class Graph;
  friend Tensor detail::record(Op, std::span<const Tensor>, Shape,
                               std::vector<double>, OpAttrs);

  Shape shape_{};
  std::shared_ptr<const std::vector<double>> data_;
  Graph* graph_ = nullptr;
  std::uint32_t node_ = 0;
};

// User-defined primitive. `forward` must be a pure function of the input
// values; `backward` must be written with differentiable tensor operations.
class CustomOp {
 public:
  virtual ~CustomOp() = default;
  virtual std::string_view name() const = 0;
  virtual Shape output_shape(std::span<const Shape> inputs) const = 0;
  virtual std::vector<double> forward(
      std::span<const std::span<const double>> inputs,
      std::span<const Shape> shapes) const = 0;
  virtual std::vector<Tensor> backward(std::span<const Tensor> inputs,
                                       const Tensor& output,
                                       const Tensor& grad) const = 0;
};

// Append-only record of primitive applications. Not copyable or movable:
// tensors refer to it by address. One graph is owned by one thread.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Differentiable leaf holding `value`.
  Tensor variable(const Tensor& value);
  // Non-differentiable leaf.
  Tensor constant(const Tensor& value);

  std::size_t size() const noexcept { return nodes_.size(); }
  Op op(std::uint32_t node) const { return nodes_.at(node).op; }
  std::span<const std::uint32_t> parents(std::uint32_t node) const {
    return nodes_.at(node).parents;
  }

  // Recomputes every non-leaf node from its parents' stored values and
  // returns the number of nodes whose recomputed value differs bitwise.
  std::size_t replay_mismatches() const;

 private:
  friend Tensor detail::record(Op, std::span<const Tensor>, Shape,
                               std::vector<double>, OpAttrs);
  friend std::vector<Tensor> gradient(const Tensor&, std::span<const Tensor>,
                                      bool);

  struct Node {
    Op op = Op::Leaf;
    bool is_variable = false;
    Shape shape{};
    std::vector<std::uint32_t> parents;
    std::shared_ptr<const std::vector<double>> value;
    OpAttrs attrs;
  };

  Tensor tensor_of(std::uint32_t node) const;
  std::uint32_t push(Node node);

  std::vector<Node> nodes_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool recording_enabled() noexcept;

// Gradient of scalar `output` with respect to each tensor in `wrt`. Tensors in
// `wrt` that `output` does not depend on receive zeros. With `create_graph`
// the results are recorded on the graph and remain differentiable.
std::vector<Tensor> gradient(const Tensor& output, std::span<const Tensor> wrt,
                             bool create_graph = false);
std::vector<Tensor> gradient(const Tensor& output,
                             std::initializer_list<Tensor> wrt,
                             bool create_graph = false);

// Primitives. Binary elementwise operations broadcast dimensions of size 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor pow(const Tensor& a, double exponent);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Sums over the dimensions where `target` has size 1.
Tensor sum_to(const Tensor& a, Shape target);
Tensor broadcast_to(const Tensor& a, Shape target);
// out.values()[i] = a.values()[indices[i]]
Tensor gather(const Tensor& a, std::vector<std::size_t> indices, Shape out);
// zeros(out) with out.values()[indices[i]] += a.values()[i]
Tensor scatter_add(const Tensor& a, std::vector<std::size_t> indices,
                   Shape out);
// axis 0 stacks rows, axis 1 stacks columns.
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
// Row-wise log-softmax.
Tensor log_softmax(const Tensor& a);
Tensor apply_custom(std::shared_ptr<const CustomOp> op,
                    std::span<const Tensor> inputs);

// Convenience compositions.
Tensor sum_rows(const Tensor& a);  // m x n -> m x 1
Tensor mean_rows(const Tensor& a);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator*(const Tensor& a, double factor);
Tensor operator*(double factor, const Tensor& a);

}  // namespace pear::ad
