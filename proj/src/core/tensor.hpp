/**
 * Copyright 2026 The ihd Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef IHD_CORE_TENSOR_HPP_
#define IHD_CORE_TENSOR_HPP_

// Minimal define-by-run reverse-mode autodiff over dense float64 arrays.
//
// Every differentiable op takes the Tape it records onto as first argument.
// A Tape is rebuilt for each forward pass and consumed by exactly one call to
// Backward. Ops whose inputs are all constants (requires_grad == false) are
// evaluated but not recorded.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"

namespace ihd {

using Shape = std::vector<std::size_t>;

std::string ShapeToString(const Shape &shape);
std::size_t NumElements(const Shape &shape);

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until Backward reaches the node
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, double value, bool requires_grad = false);
  static Tensor FromData(Shape shape, std::vector<double> data,
                         bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->data; }
  // Writable view. Only meaningful for leaves (parameters, inputs); mutating
  // a recorded intermediate invalidates the tape.
  std::span<double> mutable_data() { return node_->data; }
  // Gradient from the most recent Backward that reached this tensor; empty
  // otherwise.
  std::span<const double> grad() const { return node_->grad; }

  double item() const;
  double at(std::size_t flat_index) const { return node_->data.at(flat_index); }

  // Deep copy with no tape history.
  Tensor Detach(bool requires_grad = false) const;

  bool SameAs(const Tensor &other) const { return node_ == other.node_; }
  detail::TensorNode *node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node)
      : node_(std::move(node)) {}

  std::shared_ptr<detail::TensorNode> node_;
};

using Gradients = std::vector<std::vector<double>>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;
  Tape(Tape &&) = default;
  Tape &operator=(Tape &&) = default;

  // Records `output = op(inputs)`. `backward` reads output.grad() and
  // accumulates into the inputs' gradients through AccumulateGrad.
  void Record(std::vector<Tensor> inputs, const Tensor &output,
              std::function<void()> backward);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

 private:
  friend Gradients Backward(Tape &tape, const Tensor &loss,
                            std::span<const Tensor> params);

  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// Returns the gradient buffer of `t`, allocating zeros on first use. Backward
// rules use this to accumulate into their inputs.
std::vector<double> &AccumulateGrad(const Tensor &t);

// Runs reverse-mode accumulation from the scalar `loss`. Returns one gradient
// per entry of `params` (all zeros when a parameter did not take part).
// Throws on a non-scalar loss or a tape that was already consumed.
Gradients Backward(Tape &tape, const Tensor &loss,
                   std::span<const Tensor> params = {});

// While alive, ops on this thread produce constants and record nothing.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

 private:
  bool previous_;
};

// Allocates the output of an op: requires_grad iff any input requires it.
Tensor MakeResult(Shape shape, std::vector<double> data,
                  std::initializer_list<const Tensor *> inputs);

// ---- primitives ----------------------------------------------------------

Tensor Add(Tape &tape, const Tensor &a, const Tensor &b);
Tensor Mul(Tape &tape, const Tensor &a, const Tensor &b);
Tensor Scale(Tape &tape, const Tensor &a, double factor);
// a [m, k] x b [k, n] -> [m, n]
Tensor MatMul(Tape &tape, const Tensor &a, const Tensor &b);
// x [n, in] * w[out, in]^T + bias[out] -> [n, out]. `bias` may be undefined.
Tensor Linear(Tape &tape, const Tensor &x, const Tensor &weight,
              const Tensor &bias);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};
// x [n, c, h, w], weight [o, c/groups, kh, kw], bias [o] (may be undefined).
Tensor Conv2d(Tape &tape, const Tensor &x, const Tensor &weight,
              const Tensor &bias, const Conv2dOptions &options);
// 2x2 window, stride 2; odd trailing rows/cols are dropped.
Tensor MaxPool2x2(Tape &tape, const Tensor &x);
// [n, c, h, w] -> [n, c]
Tensor GlobalAvgPool(Tape &tape, const Tensor &x);

Tensor Relu(Tape &tape, const Tensor &x);
Tensor Sigmoid(Tape &tape, const Tensor &x);
Tensor Tanh(Tape &tape, const Tensor &x);

Tensor Concat(Tape &tape, const Tensor &a, const Tensor &b, std::size_t axis);
// Elements [begin, end) along `axis`.
Tensor Slice(Tape &tape, const Tensor &x, std::size_t axis, std::size_t begin,
             std::size_t end);

// Inverted dropout. In eval mode (train == false) this is the identity and
// draws nothing from `rng`.
Tensor Dropout(Tape &tape, const Tensor &x, double p, bool train, Rng &rng);

Tensor Sum(Tape &tape, const Tensor &x);
Tensor Mean(Tape &tape, const Tensor &x);

// ---- oracle and optimizer ------------------------------------------------

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every element.
Tensor FiniteDifferenceGrad(const std::function<double(const Tensor &)> &f,
                            const Tensor &x, double h);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamOptions options = {});

  // Bias-corrected Adam update of every parameter in place.
  void Step(const Gradients &grads, double lr);

  std::int64_t step_count() const { return step_; }
  const std::vector<std::vector<double>> &first_moments() const { return m_; }
  const std::vector<std::vector<double>> &second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t step_ = 0;
};

}  // namespace ihd

#endif  // IHD_CORE_TENSOR_HPP_
