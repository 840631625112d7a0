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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "kernels.hpp"
#include "pear/autodiff.hpp"

namespace pear::ad {

namespace {

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[noreturn]] void shape_error(Op op, std::span<const Shape> shapes,
                              const std::string& what) {
  std::string msg = std::string(op_name(op)) + ": " + what + " (operands";
  for (const Shape& s : shapes) msg += " " + to_string(s);
  msg += ")";
  throw ShapeError(msg);
}

void expect_arity(Op op, std::span<const Shape> shapes, std::size_t n) {
  if (shapes.size() != n) {
    shape_error(op, shapes, "expected " + std::to_string(n) + " operands");
  }
}

bool broadcastable(Shape from, Shape to) {
  return (from.rows == to.rows || from.rows == 1) &&
         (from.cols == to.cols || from.cols == 1);
}

template <class F>
std::vector<double> unary(std::span<const double> a, F f) {
  std::vector<double> out(a.size());
  std::transform(a.begin(), a.end(), out.begin(), f);
  return out;
}

template <class F>
std::vector<double> binary(std::span<const double> a, std::span<const double> b,
                           F f) {
  std::vector<double> out(a.size());
  std::transform(a.begin(), a.end(), b.begin(), out.begin(), f);
  return out;
}

std::vector<std::span<const double>> spans_of(std::span<const Tensor> ts) {
  std::vector<std::span<const double>> out;
  out.reserve(ts.size());
  for (const Tensor& t : ts) out.push_back(t.values());
  return out;
}

std::vector<Shape> shapes_of(std::span<const Tensor> ts) {
  std::vector<Shape> out;
  out.reserve(ts.size());
  for (const Tensor& t : ts) out.push_back(t.shape());
  return out;
}

Tensor apply(Op op, std::span<const Tensor> inputs, OpAttrs attrs = {}) {
  const auto shapes = shapes_of(inputs);
  const Shape out = detail::infer_shape(op, attrs, shapes);
  auto values = detail::evaluate(op, attrs, shapes, spans_of(inputs), out);
  return detail::record(op, inputs, out, std::move(values), std::move(attrs));
}

Tensor apply(Op op, std::initializer_list<Tensor> inputs, OpAttrs attrs = {}) {
  return apply(op, std::span<const Tensor>(inputs.begin(), inputs.size()),
               std::move(attrs));
}

Tensor elementwise(Op op, const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  const Shape target{std::max(sa.rows, sb.rows), std::max(sa.cols, sb.cols)};
  if (!broadcastable(sa, target) || !broadcastable(sb, target)) {
    const Shape both[] = {sa, sb};
    shape_error(op, both, "shapes are not broadcast-compatible");
  }
  const Tensor lhs = sa == target ? a : broadcast_to(a, target);
  const Tensor rhs = sb == target ? b : broadcast_to(b, target);
  return apply(op, {lhs, rhs});
}

}  // namespace

namespace detail {

Shape infer_shape(Op op, const OpAttrs& attrs, std::span<const Shape> in) {
  switch (op) {
    case Op::Leaf:
      shape_error(op, in, "leaves are not computed");
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
      expect_arity(op, in, 2);
      if (in[0] != in[1]) shape_error(op, in, "operand shapes differ");
      return in[0];
    case Op::Scale:
    case Op::Relu:
    case Op::Exp:
    case Op::Log:
    case Op::Abs:
    case Op::Sqrt:
    case Op::Pow:
      expect_arity(op, in, 1);
      return in[0];
    case Op::MatMul:
      expect_arity(op, in, 2);
      if (in[0].cols != in[1].rows) {
        shape_error(op, in, "inner dimensions differ");
      }
      return {in[0].rows, in[1].cols};
    case Op::Transpose:
      expect_arity(op, in, 1);
      return {in[0].cols, in[0].rows};
    case Op::Sum:
    case Op::Mean:
      expect_arity(op, in, 1);
      if (in[0].size() == 0) shape_error(op, in, "empty operand");
      return {1, 1};
    case Op::SumTo:
      expect_arity(op, in, 1);
      if (!broadcastable(attrs.shape, in[0])) {
        shape_error(op, in, "cannot reduce to " + to_string(attrs.shape));
      }
      return attrs.shape;
    case Op::BroadcastTo:
      expect_arity(op, in, 1);
      if (!broadcastable(in[0], attrs.shape)) {
        shape_error(op, in, "cannot broadcast to " + to_string(attrs.shape));
      }
      return attrs.shape;
    case Op::Gather: {
      expect_arity(op, in, 1);
      const auto& idx = *attrs.indices;
      if (idx.size() != attrs.shape.size()) {
        shape_error(op, in, "index count does not match output " +
                                to_string(attrs.shape));
      }
      for (auto i : idx) {
        if (i >= in[0].size()) {
          shape_error(op, in, "index " + std::to_string(i) + " out of range");
        }
      }
      return attrs.shape;
    }
    case Op::ScatterAdd: {
      expect_arity(op, in, 1);
      const auto& idx = *attrs.indices;
      if (idx.size() != in[0].size()) {
        shape_error(op, in, "index count does not match operand");
      }
      for (auto i : idx) {
        if (i >= attrs.shape.size()) {
          shape_error(op, in, "index " + std::to_string(i) +
                                  " outside output " + to_string(attrs.shape));
        }
      }
      return attrs.shape;
    }
    case Op::Concat: {
      if (in.empty()) shape_error(op, in, "nothing to concatenate");
      Shape out = in[0];
      for (std::size_t i = 1; i < in.size(); ++i) {
        if (attrs.axis == 0) {
          if (in[i].cols != out.cols) shape_error(op, in, "column counts differ");
          out.rows += in[i].rows;
        } else {
          if (in[i].rows != out.rows) shape_error(op, in, "row counts differ");
          out.cols += in[i].cols;
        }
      }
      return out;
    }
    case Op::LogSoftmax:
      expect_arity(op, in, 1);
      if (in[0].cols == 0) shape_error(op, in, "no columns");
      return in[0];
    case Op::Custom:
      return attrs.custom->output_shape(in);
  }
  shape_error(op, in, "unknown op");
}

std::vector<double> evaluate(Op op, const OpAttrs& attrs,
                             std::span<const Shape> shapes,
                             std::span<const std::span<const double>> in,
                             Shape out) {
  switch (op) {
    case Op::Leaf:
      break;
    case Op::Add:
      return binary(in[0], in[1], [](double x, double y) { return x + y; });
    case Op::Sub:
      return binary(in[0], in[1], [](double x, double y) { return x - y; });
    case Op::Mul:
      return binary(in[0], in[1], [](double x, double y) { return x * y; });
    case Op::Div:
      return binary(in[0], in[1], [](double x, double y) { return x / y; });
    case Op::Scale: {
      const double c = attrs.scalar;
      return unary(in[0], [c](double x) { return c * x; });
    }
    case Op::MatMul: {
      std::vector<double> result(out.size());
      Eigen::Map<const RowMajor> a(in[0].data(), shapes[0].rows,
                                   shapes[0].cols);
      Eigen::Map<const RowMajor> b(in[1].data(), shapes[1].rows,
                                   shapes[1].cols);
      Eigen::Map<RowMajor> c(result.data(), out.rows, out.cols);
      c.noalias() = a * b;
      return result;
    }
    case Op::Transpose: {
      std::vector<double> result(out.size());
      const Shape s = shapes[0];
      for (std::size_t r = 0; r < s.rows; ++r) {
        for (std::size_t c = 0; c < s.cols; ++c) {
          result[c * s.rows + r] = in[0][r * s.cols + c];
        }
      }
      return result;
    }
    case Op::Relu:
      return unary(in[0], [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::Exp:
      return unary(in[0], [](double x) { return std::exp(x); });
    case Op::Log:
      return unary(in[0], [](double x) { return std::log(x); });
    case Op::Abs:
      return unary(in[0], [](double x) { return std::fabs(x); });
    case Op::Sqrt:
      return unary(in[0], [](double x) { return std::sqrt(x); });
    case Op::Pow: {
      const double p = attrs.scalar;
      if (p == 2.0) return unary(in[0], [](double x) { return x * x; });
      return unary(in[0], [p](double x) { return std::pow(x, p); });
    }
    case Op::Sum:
      return {std::accumulate(in[0].begin(), in[0].end(), 0.0)};
    case Op::Mean:
      return {std::accumulate(in[0].begin(), in[0].end(), 0.0) /
              static_cast<double>(in[0].size())};
    case Op::SumTo: {
      std::vector<double> result(out.size(), 0.0);
      const Shape s = shapes[0];
      for (std::size_t r = 0; r < s.rows; ++r) {
        const std::size_t tr = out.rows == 1 ? 0 : r;
        for (std::size_t c = 0; c < s.cols; ++c) {
          const std::size_t tc = out.cols == 1 ? 0 : c;
          result[tr * out.cols + tc] += in[0][r * s.cols + c];
        }
      }
      return result;
    }
    case Op::BroadcastTo: {
      std::vector<double> result(out.size());
      const Shape s = shapes[0];
      for (std::size_t r = 0; r < out.rows; ++r) {
        const std::size_t sr = s.rows == 1 ? 0 : r;
        for (std::size_t c = 0; c < out.cols; ++c) {
          const std::size_t sc = s.cols == 1 ? 0 : c;
          result[r * out.cols + c] = in[0][sr * s.cols + sc];
        }
      }
      return result;
    }
    case Op::Gather: {
      const auto& idx = *attrs.indices;
      std::vector<double> result(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) result[i] = in[0][idx[i]];
      return result;
    }
    case Op::ScatterAdd: {
      const auto& idx = *attrs.indices;
      std::vector<double> result(out.size(), 0.0);
      for (std::size_t i = 0; i < idx.size(); ++i) result[idx[i]] += in[0][i];
      return result;
    }
    case Op::Concat: {
      std::vector<double> result(out.size());
      if (attrs.axis == 0) {
        auto it = result.begin();
        for (const auto& part : in) it = std::copy(part.begin(), part.end(), it);
      } else {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < in.size(); ++k) {
          const Shape s = shapes[k];
          for (std::size_t r = 0; r < s.rows; ++r) {
            std::copy_n(in[k].begin() + static_cast<std::ptrdiff_t>(r * s.cols),
                        s.cols,
                        result.begin() +
                            static_cast<std::ptrdiff_t>(r * out.cols + offset));
          }
          offset += s.cols;
        }
      }
      return result;
    }
    case Op::LogSoftmax: {
      std::vector<double> result(out.size());
      for (std::size_t r = 0; r < out.rows; ++r) {
        const auto row = in[0].subspan(r * out.cols, out.cols);
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double x : row) total += std::exp(x - peak);
        const double log_norm = peak + std::log(total);
        for (std::size_t c = 0; c < out.cols; ++c) {
          result[r * out.cols + c] = row[c] - log_norm;
        }
      }
      return result;
    }
    case Op::Custom:
      return attrs.custom->forward(in, shapes);
  }
  throw GraphError("cannot evaluate " + std::string(op_name(op)));
}

}  // namespace detail

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(Op::Add, a, b);
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(Op::Sub, a, b);
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(Op::Mul, a, b);
}
Tensor div(const Tensor& a, const Tensor& b) {
  return elementwise(Op::Div, a, b);
}

Tensor scale(const Tensor& a, double factor) {
  OpAttrs attrs;
  attrs.scalar = factor;
  return apply(Op::Scale, {a}, std::move(attrs));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  return apply(Op::MatMul, {a, b});
}
Tensor transpose(const Tensor& a) { return apply(Op::Transpose, {a}); }
Tensor relu(const Tensor& a) { return apply(Op::Relu, {a}); }
Tensor exp(const Tensor& a) { return apply(Op::Exp, {a}); }
Tensor log(const Tensor& a) { return apply(Op::Log, {a}); }
Tensor abs(const Tensor& a) { return apply(Op::Abs, {a}); }
Tensor sqrt(const Tensor& a) { return apply(Op::Sqrt, {a}); }

Tensor pow(const Tensor& a, double exponent) {
  OpAttrs attrs;
  attrs.scalar = exponent;
  return apply(Op::Pow, {a}, std::move(attrs));
}

Tensor sum(const Tensor& a) { return apply(Op::Sum, {a}); }
Tensor mean(const Tensor& a) { return apply(Op::Mean, {a}); }

Tensor sum_to(const Tensor& a, Shape target) {
  if (a.shape() == target) return a;
  OpAttrs attrs;
  attrs.shape = target;
  return apply(Op::SumTo, {a}, std::move(attrs));
}

Tensor broadcast_to(const Tensor& a, Shape target) {
  if (a.shape() == target) return a;
  OpAttrs attrs;
  attrs.shape = target;
  return apply(Op::BroadcastTo, {a}, std::move(attrs));
}

Tensor gather(const Tensor& a, std::vector<std::size_t> indices, Shape out) {
  OpAttrs attrs;
  attrs.shape = out;
  attrs.indices =
      std::make_shared<const std::vector<std::size_t>>(std::move(indices));
  return apply(Op::Gather, {a}, std::move(attrs));
}

Tensor scatter_add(const Tensor& a, std::vector<std::size_t> indices,
                   Shape out) {
  OpAttrs attrs;
  attrs.shape = out;
  attrs.indices =
      std::make_shared<const std::vector<std::size_t>>(std::move(indices));
  return apply(Op::ScatterAdd, {a}, std::move(attrs));
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  OpAttrs attrs;
  attrs.axis = axis;
  return apply(Op::Concat, parts, std::move(attrs));
}

Tensor log_softmax(const Tensor& a) { return apply(Op::LogSoftmax, {a}); }

Tensor apply_custom(std::shared_ptr<const CustomOp> op,
                    std::span<const Tensor> inputs) {
  OpAttrs attrs;
  attrs.custom = std::move(op);
  return apply(Op::Custom, inputs, std::move(attrs));
}

Tensor sum_rows(const Tensor& a) { return sum_to(a, {a.rows(), 1}); }

Tensor mean_rows(const Tensor& a) {
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.cols()));
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + to_string(a.shape()));
  }
  std::vector<std::size_t> idx;
  idx.reserve(a.rows() * (end - begin));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = begin; c < end; ++c) idx.push_back(r * a.cols() + c);
  }
  return gather(a, std::move(idx), {a.rows(), end - begin});
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") outside " + to_string(a.shape()));
  }
  std::vector<std::size_t> idx((end - begin) * a.cols());
  std::iota(idx.begin(), idx.end(), begin * a.cols());
  return gather(a, std::move(idx), {end - begin, a.cols()});
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) { return scale(a, -1.0); }
Tensor operator*(const Tensor& a, double factor) { return scale(a, factor); }
Tensor operator*(double factor, const Tensor& a) { return scale(a, factor); }

}  // namespace pear::ad
