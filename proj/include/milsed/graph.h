/*
 * Copyright 2026 The milsed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Reverse-mode differentiation over dense double matrices.
//
// A Graph is a tape: every op evaluates eagerly and records a closure that
// propagates gradients to its operands. Calling backward() on a 1x1 result
// walks the tape in reverse and accumulates into the bound Parameters.
//
// All tensors are rank-2. Rank-3 feature maps (time x frequency x channel)
// are stored as (time*frequency) x channel matrices, frequency fastest.

#pragma once

#include "milsed/numerics.h"

#include <functional>
#include <span>
#include <vector>

namespace milsed {

class Graph;

/// Handle to a node on a Graph tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, int index) : graph_(graph), index_(index) {}

  bool valid() const { return graph_ != nullptr; }
  Graph& graph() const;
  int index() const { return index_; }

  const Matrix& value() const;
  /// Gradient of the last backward() target w.r.t. this node.
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  int index_ = -1;
};

class Graph {
 public:
  /// `tie_tolerance`: a max-reduce whose top two candidates differ by no more
  /// than this is flagged as a tie (subgradient ambiguous).
  explicit Graph(double tie_tolerance = 0.0) : tie_tolerance_(tie_tolerance) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& param);

  /// Reverse sweep from a 1x1 node. Gradients of bound parameters are
  /// accumulated into Parameter::grad (which is sized if empty).
  void backward(Var loss);

  bool tie_detected() const { return tie_detected_; }
  double tie_tolerance() const { return tie_tolerance_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by op implementations.
  using Backprop = std::function<void(Graph&, int self)>;
  Var push(Matrix value, Backprop backprop);
  const Matrix& value(int i) const { return nodes_[i].value; }
  const Matrix& grad(int i) const { return nodes_[i].grad; }
  Matrix& grad_mut(int i) { return nodes_[i].grad; }
  void flag_tie() { tie_detected_ = true; }
  Var var(int i) { return Var(this, i); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backprop backprop;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  double tie_tolerance_;
  bool tie_detected_ = false;
  bool backward_done_ = false;
};

// Elementwise / linear algebra.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cwise_mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_row(Var a, Var row);  // broadcast 1 x n over rows
Var mul_row(Var a, Var row);
Var div_row(Var a, Var row);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }

// Activations.
Var sigmoid(Var a);
Var relu(Var a);
Var tanh(Var a);

// Reductions. "rows" reduces over the row index (time), giving 1 x n.
Var softmax_rows(Var a);  // per column, normalised over rows
Var max_rows(Var a);      // ties -> lowest row index
Var mean_rows(Var a);
Var sum_rows(Var a);
Var sum_cols(Var a);  // m x 1
Var sum_all(Var a);
Var mean_all(Var a);

// Structural.
Var vcat(std::span<const Var> parts);
Var row_block(Var a, Index start, Index count);
Var col_block(Var a, Index start, Index count);

/// Mean binary cross-entropy of probabilities against 0/1 targets, with the
/// probabilities clamped to [eps, 1 - eps]. Result is 1 x 1.
Var binary_cross_entropy(Var probs, const Matrix& targets, double eps = 1e-7);

// Convolution support. `a` holds a batch of feature maps stacked along rows:
// clip n occupies lengths[n]*bands rows ordered (t, f), one column per
// channel.

/// 3x3 patches with zero padding inside each clip: result has the same rows
/// and 9*channels columns ordered (dt, df, channel).
Var im2col3x3(Var a, std::span<const Index> lengths, Index bands);

/// Max over consecutive groups of `factor` rows (frequency pooling).
Var max_pool_rows(Var a, Index factor);

/// (N*g) x C  ->  N x (g*C), column = f*C + c.
Var fold_rows(Var a, Index group);

/// Batch normalisation over rows using the batch statistics. The biased
/// batch mean/variance are written to `batch_mean` / `batch_var` if given.
Var batch_norm(Var x, Var gamma, Var beta, double eps, RowVector* batch_mean = nullptr,
               RowVector* batch_var = nullptr);

}  // namespace milsed
